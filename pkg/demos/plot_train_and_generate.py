"""
A tiny CAN run, end to end
==========================

Trains a reduced CAN on a synthetic corpus for a few epochs, then
samples a grid from the final checkpoint and plots the loss curves. The
networks are shrunk (32x32 output, narrow layers) so this finishes in
well under a minute on a laptop CPU.
"""
import tempfile
from pathlib import Path

from canforge.data import load_manifest, write_synthetic_corpus
from canforge.generation import GenerationRequest, export_curves, generate_collage, save_png
from canforge.trainer import TrainingConfig, divergence_monitor, train

work = Path(tempfile.mkdtemp())
write_synthetic_corpus(work / "data", 24, seed=0)
manifest = load_manifest(work / "data")

config = TrainingConfig(
    variant="can", epochs=4, batch_size=16, seed=0, checkpoint_every=2, output_dir=str(work / "run"),
    model_overrides={"image_size": 32, "base_channels": 16, "style_hidden": (128, 64)},
)
result = train(config, manifest, on_epoch=lambda r: print(f"epoch {r.epoch}: D {r.avg_d_loss:.3f}  G {r.avg_g_loss:.3f}"))

report = divergence_monitor(result.history)
print("healthy" if report.healthy else f"flags: {report.kinds()}")

grid = generate_collage(GenerationRequest(work / "run" / "final.ckpt", count=16, seed=1, grid=(4, 4)))
save_png(grid, "can_samples.png")
export_curves(work / "run" / "loss_log.csv", plot_path="can_curves.png")
print("wrote can_samples.png and can_curves.png; run files in", work / "run")
