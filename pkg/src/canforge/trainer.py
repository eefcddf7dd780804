"""
Alternating discriminator/generator optimisation with deterministic seeding.

One discriminator step is followed by one generator step on every
minibatch. All randomness comes from a single master seed split into
independent streams (init, shuffle, noise, labels); the noise and label
streams are re-derived per epoch, so a run resumed from a checkpoint
replays exactly what the uninterrupted run would have done.
"""
import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
import torch

from . import losses
from .checkpoint import Checkpoint, atomic_write_bytes, load_checkpoint, save_checkpoint
from .data import DatasetManifest, make_batches
from .models import Discriminator, Generator, ModelSpec, build_discriminator, build_generator

logger = logging.getLogger(__name__)

_STREAMS = {"init_g": 1, "init_d": 2, "noise": 3, "labels": 4}
DTYPES = {"float32": torch.float32, "float64": torch.float64}


class TrainingError(RuntimeError):
    pass


class NonFiniteLossError(TrainingError):
    def __init__(self, network, step, terms):
        self.network = network
        self.step = step
        self.terms = {k: float(torch.as_tensor(v).detach()) for k, v in terms.items()}
        parts = ", ".join(f"{k}={v!r}" for k, v in self.terms.items())
        super().__init__(f"non-finite {network} loss at step {step}: {parts}")


class IsolationError(TrainingError):
    pass


def derive_seed(seed: int, stream: str, epoch: int = 0) -> int:
    """Independent 63-bit seed for ``stream`` at ``epoch``."""
    state = np.random.SeedSequence([int(seed), _STREAMS[stream], int(epoch)]).generate_state(2, np.uint64)
    return int(state[0] >> np.uint64(1))


def stream_generator(seed: int, stream: str, epoch: int = 0) -> torch.Generator:
    return torch.Generator().manual_seed(derive_seed(seed, stream, epoch))


@dataclass
class TrainingConfig:
    variant: str = "dcgan"
    epochs: int = 120
    batch_size: int = 128
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    seed: int = 0
    checkpoint_every: int = 10
    output_dir: Optional[str] = None
    dtype: str = "float32"
    g_objective: str = "non_saturating"
    workers: int = 1
    check_isolation: bool = False
    model_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        for name in ("beta1", "beta2"):
            if not 0 <= getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in [0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be >= 1")
        if self.dtype not in DTYPES:
            raise ValueError(f"dtype must be one of {sorted(DTYPES)}")
        if self.g_objective not in ("non_saturating", "saturating"):
            raise ValueError("g_objective must be 'non_saturating' or 'saturating'")

    def model_spec(self) -> ModelSpec:
        return ModelSpec.for_variant(self.variant, **self.model_overrides)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


class LossRecord(NamedTuple):
    epoch: int
    avg_d_loss: float
    avg_g_loss: float


class StepResult(NamedTuple):
    loss: float
    terms: dict


@dataclass
class GANState:
    """Networks plus their optimisers; owned by a single training loop."""

    spec: ModelSpec
    generator: Generator
    discriminator: Discriminator
    opt_g: torch.optim.Optimizer
    opt_d: torch.optim.Optimizer
    g_objective: str = "non_saturating"

    @property
    def dtype(self):
        return next(self.generator.parameters()).dtype


def make_optimizer(params, config: TrainingConfig):
    return torch.optim.Adam(params, lr=config.lr, betas=(config.beta1, config.beta2))


def build_state(config: TrainingConfig, spec: Optional[ModelSpec] = None) -> GANState:
    spec = spec or config.model_spec()
    dtype = DTYPES[config.dtype]
    g = build_generator(spec, derive_seed(config.seed, "init_g")).to(dtype)
    d = build_discriminator(spec, derive_seed(config.seed, "init_d")).to(dtype)
    return GANState(
        spec, g, d, make_optimizer(g.parameters(), config), make_optimizer(d.parameters(), config),
        config.g_objective,
    )


def _sample_noise(state, n, noise_rng, label_rng):
    z = torch.randn(n, state.spec.latent_dim, generator=noise_rng, dtype=torch.float64).to(state.dtype)
    styles = None
    if state.spec.conditional:
        styles = torch.randint(0, state.spec.num_styles, (n,), generator=label_rng)
    return z, styles


def _finish(name, step, terms, optimizer):
    total = sum(terms.values())
    if not all(math.isfinite(float(v.detach())) for v in terms.values()):
        raise NonFiniteLossError(name, step, terms)
    total.backward()
    optimizer.step()
    return StepResult(float(total.detach()), {k: float(v.detach()) for k, v in terms.items()})


def train_step_d(real, real_styles, state: GANState, noise_rng, label_rng=None, step=0) -> StepResult:
    """One Adam step on the discriminator against a real batch and a fresh fake batch."""
    g, d = state.generator, state.discriminator
    g.train()
    d.train()
    real = real.to(state.dtype)
    z, fake_styles = _sample_noise(state, real.shape[0], noise_rng, label_rng)
    with torch.no_grad():
        fake = g(z, fake_styles)
    state.opt_d.zero_grad(set_to_none=True)
    cond = state.spec.conditional
    real_out = d(real, real_styles if cond else None)
    fake_out = d(fake, fake_styles)
    terms = losses.discriminator_loss_terms(real_out, fake_out, real_styles)
    return _finish("discriminator", step, terms, state.opt_d)


def train_step_g(batch_size: int, state: GANState, noise_rng, label_rng=None, step=0) -> StepResult:
    """One Adam step on the generator (and its label embedding) from fresh noise."""
    g, d = state.generator, state.discriminator
    g.train()
    d.train()
    z, styles = _sample_noise(state, batch_size, noise_rng, label_rng)
    state.opt_g.zero_grad(set_to_none=True)
    flags = [p.requires_grad for p in d.parameters()]
    for p in d.parameters():
        p.requires_grad_(False)
    try:
        out = d(g(z, styles), styles)
        terms = losses.generator_loss_terms(out)
        if state.g_objective == "saturating":
            terms["g_adversarial"] = losses.g_saturating_loss(out.real_prob)
        return _finish("generator", step, terms, state.opt_g)
    finally:
        for p, flag in zip(d.parameters(), flags):
            p.requires_grad_(flag)


def _snapshot(net):
    return [p.detach().clone() for p in net.parameters()]


def _assert_unchanged(net, snapshot, what):
    for p, before in zip(net.parameters(), snapshot):
        if not torch.equal(p.detach(), before):
            raise IsolationError(f"{what} parameters changed during the other network's step")


def state_to_checkpoint(state: GANState, config: TrainingConfig, epoch: int, history) -> Checkpoint:
    return Checkpoint(
        spec=state.spec,
        generator_state=state.generator.state_dict(),
        discriminator_state=state.discriminator.state_dict(),
        optimizer_g_state=state.opt_g.state_dict(),
        optimizer_d_state=state.opt_d.state_dict(),
        epoch=epoch,
        seed=config.seed,
        loss_history=[tuple(r) for r in history],
        training_config=config.to_dict(),
    )


def state_from_checkpoint(ckpt: Checkpoint, config: Optional[TrainingConfig] = None) -> GANState:
    if config is None:
        config = TrainingConfig.from_dict(ckpt.training_config or {"variant": ckpt.spec.variant})
    state = build_state(config, ckpt.spec)
    state.generator.load_state_dict(ckpt.generator_state)
    state.discriminator.load_state_dict(ckpt.discriminator_state)
    if ckpt.optimizer_g_state is not None:
        state.opt_g.load_state_dict(ckpt.optimizer_g_state)
    if ckpt.optimizer_d_state is not None:
        state.opt_d.load_state_dict(ckpt.optimizer_d_state)
    return state


def format_loss_csv(history) -> str:
    buf = io.StringIO()
    buf.write("epoch,avg_d_loss,avg_g_loss\n")
    for r in history:
        buf.write(f"{r.epoch},{r.avg_d_loss:.6f},{r.avg_g_loss:.6f}\n")
    return buf.getvalue()


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list
    state: GANState


def train(
    config: TrainingConfig,
    manifest: DatasetManifest,
    resume_from=None,
    on_epoch=None,
) -> TrainResult:
    """Run ``config.epochs`` epochs (continuing from ``resume_from`` if given).

    Writes ``loss_log.csv`` after every epoch and checkpoints every
    ``checkpoint_every`` epochs plus at the end when ``output_dir`` is set.
    A non-finite loss aborts the run, leaves the last checkpoint untouched
    and writes ``failure.json`` next to it.
    """
    out_dir = Path(config.output_dir) if config.output_dir else None
    history = []
    start_epoch = 0
    if resume_from is not None:
        ckpt = resume_from if isinstance(resume_from, Checkpoint) else load_checkpoint(resume_from)
        if ckpt.spec != config.model_spec():
            raise TrainingError(f"checkpoint spec {ckpt.spec} does not match config {config.model_spec()}")
        state = state_from_checkpoint(ckpt, config)
        start_epoch = ckpt.epoch
        history = [LossRecord(*r) for r in ckpt.loss_history]
    else:
        state = build_state(config)

    step = 0
    for epoch in range(start_epoch, config.epochs):
        noise_rng = stream_generator(config.seed, "noise", epoch)
        label_rng = stream_generator(config.seed, "labels", epoch)
        d_losses, g_losses = [], []
        try:
            for real, styles in make_batches(
                manifest, config.batch_size, config.seed, epoch,
                image_size=state.spec.image_size, workers=config.workers,
            ):
                snap = _snapshot(state.generator) if config.check_isolation else None
                d_res = train_step_d(real, styles, state, noise_rng, label_rng, step)
                if snap is not None:
                    _assert_unchanged(state.generator, snap, "generator")
                    snap = _snapshot(state.discriminator)
                g_res = train_step_g(real.shape[0], state, noise_rng, label_rng, step)
                if snap is not None:
                    _assert_unchanged(state.discriminator, snap, "discriminator")
                d_losses.append(d_res.loss)
                g_losses.append(g_res.loss)
                step += 1
        except NonFiniteLossError as exc:
            logger.error("aborting at epoch %d: %s", epoch + 1, exc)
            if out_dir is not None:
                report = {"epoch": epoch + 1, "step": exc.step, "network": exc.network, "terms": exc.terms,
                          "completed_epochs": len(history)}
                atomic_write_bytes(out_dir / "failure.json", json.dumps(report, indent=2).encode())
            raise
        record = LossRecord(epoch + 1, float(np.mean(d_losses)), float(np.mean(g_losses)))
        history.append(record)
        logger.info("epoch %d: d=%.6f g=%.6f", record.epoch, record.avg_d_loss, record.avg_g_loss)
        done = epoch + 1
        if out_dir is not None:
            atomic_write_bytes(out_dir / "loss_log.csv", format_loss_csv(history).encode())
            if done % config.checkpoint_every == 0 or done == config.epochs:
                save_checkpoint(state_to_checkpoint(state, config, done, history),
                                out_dir / f"checkpoint-epoch-{done:04d}.ckpt")
        if on_epoch is not None:
            on_epoch(record)

    ckpt = state_to_checkpoint(state, config, max(config.epochs, start_epoch), history)
    if out_dir is not None:
        save_checkpoint(ckpt, out_dir / "final.ckpt")
    return TrainResult(ckpt, history, state)


@dataclass
class DivergenceFlag:
    kind: str
    epoch: int
    message: str


@dataclass
class DivergenceReport:
    flags: list
    g_growth_rate: float

    @property
    def healthy(self):
        return not self.flags

    def kinds(self):
        return {f.kind for f in self.flags}


def divergence_monitor(
    history,
    collapse_threshold: float = 0.05,
    collapse_epochs: int = 5,
    growth_window: int = 10,
    max_g_growth: float = 0.5,
) -> DivergenceReport:
    """Scan a loss log for collapse and divergence signals.

    Flags ``non_finite`` for any NaN/inf record, ``d_collapse`` when the
    discriminator loss stays below ``collapse_threshold`` for
    ``collapse_epochs`` consecutive epochs, and ``g_growth`` when the
    least-squares slope of the generator loss over the trailing
    ``growth_window`` epochs exceeds ``max_g_growth`` nats per epoch.
    """
    history = [LossRecord(*r) for r in history]
    if len(history) < 2:
        raise ValueError("divergence_monitor needs at least two records")
    flags = []
    run = 0
    for r in history:
        if not (math.isfinite(r.avg_d_loss) and math.isfinite(r.avg_g_loss)):
            flags.append(DivergenceFlag("non_finite", r.epoch, f"non-finite loss at epoch {r.epoch}"))
            run = 0
            continue
        run = run + 1 if r.avg_d_loss < collapse_threshold else 0
        if run == collapse_epochs:
            flags.append(DivergenceFlag(
                "d_collapse", r.epoch,
                f"discriminator loss below {collapse_threshold} for {collapse_epochs} epochs ending at {r.epoch}",
            ))
    tail = [r for r in history[-growth_window:] if math.isfinite(r.avg_g_loss)]
    rate = 0.0
    if len(tail) >= 2:
        rate = float(np.polyfit([r.epoch for r in tail], [r.avg_g_loss for r in tail], 1)[0])
        if rate > max_g_growth:
            flags.append(DivergenceFlag(
                "g_growth", tail[-1].epoch, f"generator loss growing {rate:.3f} nats/epoch",
            ))
    return DivergenceReport(flags, rate)


def read_loss_csv(path) -> list:
    with open(path, newline="") as fh:
        return [LossRecord(int(r["epoch"]), float(r["avg_d_loss"]), float(r["avg_g_loss"]))
                for r in csv.DictReader(fh)]
