"""
Sampling from trained checkpoints, collage assembly and loss-curve export.
"""
import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import torch
from PIL import Image

from .checkpoint import Checkpoint, atomic_write_bytes, load_checkpoint
from .data import VOCABULARY, denormalize
from .models import build_generator
from .trainer import DTYPES

BORDER = 2


class GenerationError(ValueError):
    pass


@dataclass
class GenerationRequest:
    """What to sample.

    ``style`` may be a single style (name or index) applied to every image,
    or a sequence with one style per grid row.
    """

    checkpoint: Union[str, Path, Checkpoint]
    count: int = 64
    seed: int = 0
    style: Union[None, str, int, Sequence] = None
    grid: Optional[tuple] = None

    def __post_init__(self):
        if self.count < 1:
            raise GenerationError("count must be >= 1")
        if self.grid is not None:
            rows, cols = self.grid
            if rows * cols != self.count:
                raise GenerationError(f"grid {rows}x{cols} holds {rows * cols} images, count is {self.count}")


def parse_grid(text: str):
    rows, sep, cols = text.lower().partition("x")
    if not sep:
        raise GenerationError(f"grid must look like RxC, got {text!r}")
    return int(rows), int(cols)


def _style_labels(request: GenerationRequest):
    style = request.style
    if style is None:
        return None
    if isinstance(style, (str, int)):
        return [VOCABULARY.resolve(style)] * request.count
    styles = [VOCABULARY.resolve(s) for s in style]
    if len(styles) == 1:
        return styles * request.count
    if request.grid is None:
        if request.count % len(styles):
            raise GenerationError("count must be a multiple of the number of styles")
        per_row = request.count // len(styles)
    else:
        rows, per_row = request.grid
        if rows != len(styles):
            raise GenerationError(f"{len(styles)} styles given for a grid with {rows} rows")
    return [s for s in styles for _ in range(per_row)]


def _resolve_styles(request, spec):
    try:
        labels = _style_labels(request)
    except (KeyError, IndexError) as exc:
        raise GenerationError(exc.args[0]) from None
    if labels is not None and not spec.conditional:
        raise GenerationError(f"style conditioning needs a ccan checkpoint, this one is {spec.variant}")
    return labels


def load_generator(ckpt: Checkpoint):
    gen = build_generator(ckpt.spec)
    dtype = DTYPES[(ckpt.training_config or {}).get("dtype", "float32")]
    gen = gen.to(dtype)
    gen.load_state_dict(ckpt.generator_state)
    gen.eval()
    return gen


def generate(request: GenerationRequest) -> list:
    """Sample ``request.count`` images as (64, 64, 3) uint8 arrays.

    Latents come from a generator seeded with ``request.seed`` and do not
    depend on the style, so two requests that differ only in style share
    their noise.
    """
    ckpt = request.checkpoint
    if not isinstance(ckpt, Checkpoint):
        ckpt = load_checkpoint(ckpt)
    labels = _resolve_styles(request, ckpt.spec)
    gen = load_generator(ckpt)
    dtype = next(gen.parameters()).dtype
    rng = torch.Generator().manual_seed(int(request.seed))
    z = torch.randn(request.count, ckpt.spec.latent_dim, generator=rng, dtype=torch.float64).to(dtype)
    if labels is not None:
        styles = torch.tensor(labels, dtype=torch.long)
    elif ckpt.spec.conditional:
        # no style requested: uniform labels, as during training
        styles = torch.randint(0, ckpt.spec.num_styles, (request.count,), generator=rng)
    else:
        styles = None
    with torch.no_grad():
        images = gen(z, styles)
    return [denormalize(img.permute(1, 2, 0)) for img in images]


def make_collage(images, rows: int, cols: int, border: int = BORDER) -> np.ndarray:
    """Row-major grid of equally sized RGB tiles on a black background."""
    if len(images) != rows * cols:
        raise GenerationError(f"{len(images)} images do not fill a {rows}x{cols} grid")
    h, w = np.asarray(images[0]).shape[:2]
    canvas = np.zeros((rows * h + (rows + 1) * border, cols * w + (cols + 1) * border, 3), dtype=np.uint8)
    for i, img in enumerate(images):
        img = np.asarray(img)
        if img.shape[:2] != (h, w):
            raise GenerationError("all collage tiles must have the same size")
        r, c = divmod(i, cols)
        top = border + r * (h + border)
        left = border + c * (w + border)
        canvas[top:top + h, left:left + w] = img
    return canvas


def png_bytes(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(buf, format="PNG")
    return buf.getvalue()


def save_png(image: np.ndarray, path) -> None:
    atomic_write_bytes(path, png_bytes(image))


def generate_collage(request: GenerationRequest) -> np.ndarray:
    images = generate(request)
    rows, cols = request.grid or (1, len(images))
    return make_collage(images, rows, cols)


@dataclass
class CurveSeries:
    epochs: list
    avg_d_loss: list
    avg_g_loss: list

    def to_dict(self):
        return {"epoch": self.epochs, "avg_d_loss": self.avg_d_loss, "avg_g_loss": self.avg_g_loss}


class CurveError(ValueError):
    pass


def read_curves(log_path) -> CurveSeries:
    """Parse and validate a ``epoch,avg_d_loss,avg_g_loss`` log."""
    with open(log_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CurveError(f"{log_path}: empty loss log")
    if [c.strip() for c in rows[0]] != ["epoch", "avg_d_loss", "avg_g_loss"]:
        raise CurveError(f"{log_path}:1: expected header 'epoch,avg_d_loss,avg_g_loss'")
    series = CurveSeries([], [], [])
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise CurveError(f"{log_path}:{lineno}: expected 3 fields, got {len(row)}")
        try:
            epoch, d, g = int(row[0]), float(row[1]), float(row[2])
        except ValueError:
            raise CurveError(f"{log_path}:{lineno}: unparseable row {row!r}") from None
        if not (math.isfinite(d) and math.isfinite(g)):
            raise CurveError(f"{log_path}:{lineno}: non-finite loss at epoch {epoch}")
        if series.epochs and epoch <= series.epochs[-1]:
            raise CurveError(f"{log_path}:{lineno}: epoch {epoch} is not increasing")
        series.epochs.append(epoch)
        series.avg_d_loss.append(d)
        series.avg_g_loss.append(g)
    if not series.epochs:
        raise CurveError(f"{log_path}: empty loss log")
    return series


def plot_curves(series: CurveSeries, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(series.epochs, series.avg_d_loss, label="discriminator")
    ax.plot(series.epochs, series.avg_g_loss, label="generator")
    ax.set_xlabel("epoch")
    ax.set_ylabel("average loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def export_curves(log_path, out_path=None, plot_path=None) -> CurveSeries:
    """Read a loss log and write the two series as JSON (or a plot when ``out_path`` is an image)."""
    series = read_curves(log_path)
    if out_path is not None:
        out_path = Path(out_path)
        if out_path.suffix.lower() in (".png", ".svg", ".pdf"):
            plot_curves(series, out_path)
        else:
            atomic_write_bytes(out_path, json.dumps(series.to_dict(), indent=2).encode())
    if plot_path is not None:
        plot_curves(series, plot_path)
    return series
