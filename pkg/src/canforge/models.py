"""
Generator and discriminator networks for the dcgan, can and ccan variants.

With the default :class:`ModelSpec` the dcgan networks reproduce the
published layer table exactly: bias-free (transposed) convolutions with
kernel 4, BatchNorm everywhere except the generator output and the first
discriminator layer, ReLU in the generator and LeakyReLU(0.2) in the
discriminator. The can discriminator adds a three-layer style
classification head on the 512x4x4 trunk features; ccan additionally
embeds the style label on both sides.
"""
import math
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple, Optional, Tuple

import torch
from torch import nn

VARIANTS = ("dcgan", "can", "ccan")


class ModelSpecError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    variant: str = "dcgan"
    latent_dim: int = 100
    image_size: int = 64
    num_styles: int = 24
    base_channels: int = 64
    g_label_embed_dim: Optional[int] = None
    d_label_embed_dim: Optional[int] = None
    style_hidden: Tuple[int, ...] = (1024, 512)
    image_channels: int = 3
    leaky_slope: float = 0.2

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ModelSpecError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        conditional = self.variant == "ccan"
        for name in ("g_label_embed_dim", "d_label_embed_dim"):
            value = getattr(self, name)
            if conditional and (value is None or value < 1):
                raise ModelSpecError(f"ccan requires a positive {name}")
            if not conditional and value is not None:
                raise ModelSpecError(f"{name} is only valid for ccan, not {self.variant}")
        size = self.image_size
        if size < 8 or size & (size - 1):
            raise ModelSpecError(f"image_size must be a power of two >= 8, got {size}")
        for name in ("latent_dim", "num_styles", "base_channels", "image_channels"):
            if getattr(self, name) < 1:
                raise ModelSpecError(f"{name} must be positive")
        if self.variant != "dcgan" and self.num_styles < 2:
            raise ModelSpecError("a style head needs at least two styles")
        object.__setattr__(self, "style_hidden", tuple(int(h) for h in self.style_hidden))

    @classmethod
    def for_variant(cls, variant, **overrides):
        """Paper defaults for ``variant``; ccan gets 100-d and 3-d label embeddings."""
        if variant == "ccan":
            overrides.setdefault("g_label_embed_dim", 100)
            overrides.setdefault("d_label_embed_dim", 3)
        return cls(variant=variant, **overrides)

    @property
    def has_style_head(self):
        return self.variant in ("can", "ccan")

    @property
    def conditional(self):
        return self.variant == "ccan"

    @property
    def num_upsamples(self):
        return int(math.log2(self.image_size)) - 2

    @property
    def trunk_channels(self):
        """Channel count of the 4x4 feature map at the bottom of both ladders."""
        return self.base_channels * 2 ** (self.num_upsamples - 1)

    @property
    def generator_in_channels(self):
        return self.latent_dim + (self.g_label_embed_dim or 0)

    @property
    def discriminator_in_channels(self):
        return self.image_channels + (self.d_label_embed_dim or 0)

    def to_text(self) -> str:
        """``key=value`` lines, one per field."""
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            elif value is None:
                value = "none"
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ModelSpec":
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key not in types:
                raise ModelSpecError(f"unknown ModelSpec key {key!r}")
            if key == "variant":
                kwargs[key] = raw
            elif key == "style_hidden":
                kwargs[key] = tuple(int(v) for v in raw.split(",") if v)
            elif key == "leaky_slope":
                kwargs[key] = float(raw)
            else:
                kwargs[key] = None if raw == "none" else int(raw)
        return cls(**kwargs)

    def to_dict(self):
        d = asdict(self)
        d["style_hidden"] = list(self.style_hidden)
        return d


def _check_styles(styles, num_styles):
    if styles is None:
        raise ValueError("this network is conditional; style labels are required")
    styles = torch.as_tensor(styles, dtype=torch.long)
    if styles.numel() and (int(styles.min()) < 0 or int(styles.max()) >= num_styles):
        raise ValueError(f"style labels must lie in [0, {num_styles})")
    return styles


class Generator(nn.Module):
    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        self.label_embedding = (
            nn.Embedding(spec.num_styles, spec.g_label_embed_dim) if spec.conditional else None
        )
        ch = spec.trunk_channels
        layers = [
            nn.ConvTranspose2d(spec.generator_in_channels, ch, 4, 1, 0, bias=False),
            nn.BatchNorm2d(ch),
            nn.ReLU(True),
        ]
        for _ in range(spec.num_upsamples - 1):
            layers += [
                nn.ConvTranspose2d(ch, ch // 2, 4, 2, 1, bias=False),
                nn.BatchNorm2d(ch // 2),
                nn.ReLU(True),
            ]
            ch //= 2
        layers += [nn.ConvTranspose2d(ch, spec.image_channels, 4, 2, 1, bias=False), nn.Tanh()]
        self.main = nn.Sequential(*layers)

    def embed_label(self, styles) -> torch.Tensor:
        """Learned style vectors, shape (batch, g_label_embed_dim)."""
        if self.label_embedding is None:
            raise ValueError(f"{self.spec.variant} generator has no label embedding")
        styles = _check_styles(styles, self.spec.num_styles).to(self.label_embedding.weight.device)
        return self.label_embedding(styles)

    def network_input(self, z, styles=None) -> torch.Tensor:
        """The (batch, C, 1, 1) tensor fed to the first transposed convolution."""
        z = z.reshape(z.shape[0], -1)
        if z.shape[1] != self.spec.latent_dim:
            raise ValueError(f"expected latent_dim={self.spec.latent_dim}, got {z.shape[1]}")
        if self.spec.conditional:
            z = torch.cat([z, self.embed_label(styles).to(z.dtype)], dim=1)
        return z[:, :, None, None]

    def forward(self, z, styles=None):
        return self.main(self.network_input(z, styles))

    def example_inputs(self, batch=2):
        p = next(self.parameters())
        z = torch.zeros(batch, self.spec.latent_dim, dtype=p.dtype, device=p.device)
        if self.spec.conditional:
            return z, torch.zeros(batch, dtype=torch.long)
        return (z,)


class DiscriminatorOutput(NamedTuple):
    real_prob: torch.Tensor
    style_probs: Optional[torch.Tensor] = None


class Discriminator(nn.Module):
    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        slope = spec.leaky_slope
        self.label_embedding = (
            nn.Embedding(spec.num_styles, spec.d_label_embed_dim) if spec.conditional else None
        )
        ch = spec.base_channels
        layers = [
            nn.Conv2d(spec.discriminator_in_channels, ch, 4, 2, 1, bias=False),
            nn.LeakyReLU(slope, True),
        ]
        for _ in range(spec.num_upsamples - 1):
            layers += [
                nn.Conv2d(ch, ch * 2, 4, 2, 1, bias=False),
                nn.BatchNorm2d(ch * 2),
                nn.LeakyReLU(slope, True),
            ]
            ch *= 2
        self.trunk = nn.Sequential(*layers)
        self.real_head = nn.Sequential(nn.Conv2d(ch, 1, 4, 1, 0, bias=False), nn.Sigmoid())
        self.style_head = None
        if spec.has_style_head:
            head = [nn.Flatten()]
            width = ch * 4 * 4
            for hidden in spec.style_hidden:
                head += [nn.Linear(width, hidden), nn.LeakyReLU(slope, True)]
                width = hidden
            head += [nn.Linear(width, spec.num_styles), nn.Softmax(dim=1)]
            self.style_head = nn.Sequential(*head)

    def embed_label(self, styles) -> torch.Tensor:
        """Style embedding broadcast to constant planes, shape (batch, d_label_embed_dim, H, W)."""
        if self.label_embedding is None:
            raise ValueError(f"{self.spec.variant} discriminator has no label embedding")
        styles = _check_styles(styles, self.spec.num_styles).to(self.label_embedding.weight.device)
        vec = self.label_embedding(styles)
        size = self.spec.image_size
        return vec[:, :, None, None].expand(-1, -1, size, size)

    def network_input(self, x, styles=None) -> torch.Tensor:
        if self.spec.conditional:
            x = torch.cat([x, self.embed_label(styles).to(x.dtype)], dim=1)
        return x

    def forward(self, x, styles=None) -> DiscriminatorOutput:
        features = self.trunk(self.network_input(x, styles))
        real_prob = self.real_head(features).reshape(-1)
        style_probs = self.style_head(features) if self.style_head is not None else None
        return DiscriminatorOutput(real_prob, style_probs)

    def example_inputs(self, batch=2):
        p = next(self.parameters())
        s = self.spec
        x = torch.zeros(batch, s.image_channels, s.image_size, s.image_size, dtype=p.dtype, device=p.device)
        if s.conditional:
            return x, torch.zeros(batch, dtype=torch.long)
        return (x,)


def build_generator(spec: ModelSpec, seed: Optional[int] = None) -> Generator:
    net = Generator(spec)
    if seed is not None:
        init_parameters(net, seed)
    return net


def build_discriminator(spec: ModelSpec, seed: Optional[int] = None) -> Discriminator:
    net = Discriminator(spec)
    if seed is not None:
        init_parameters(net, seed)
    return net


def embed_label_g(generator: Generator, style: int) -> torch.Tensor:
    return generator.embed_label(torch.tensor([style]))[0]


def embed_label_d(discriminator: Discriminator, style: int) -> torch.Tensor:
    return discriminator.embed_label(torch.tensor([style]))[0]


@torch.no_grad()
def init_parameters(network: nn.Module, seed: int) -> None:
    """DCGAN-style initialisation drawn from a generator seeded with ``seed``.

    (Transposed) convolutions and linear weights ~ N(0, 0.02), linear biases
    zero, BatchNorm scale ~ N(1, 0.02) and shift zero, embeddings ~ N(0, 1).
    """
    gen = torch.Generator().manual_seed(int(seed))

    def normal_(tensor, mean, std):
        sample = torch.randn(tensor.shape, generator=gen, dtype=torch.float64)
        tensor.copy_(sample * std + mean)

    for module in network.modules():
        if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d)):
            normal_(module.weight, 0.0, 0.02)
            if module.bias is not None:
                module.bias.zero_()
        elif isinstance(module, nn.BatchNorm2d):
            normal_(module.weight, 1.0, 0.02)
            module.bias.zero_()
        elif isinstance(module, nn.Linear):
            normal_(module.weight, 0.0, 0.02)
            if module.bias is not None:
                module.bias.zero_()
        elif isinstance(module, nn.Embedding):
            normal_(module.weight, 0.0, 1.0)


class CensusRow(NamedTuple):
    name: str
    output_shape: tuple
    params: int


@dataclass
class ParameterCensus:
    rows: list

    @property
    def total(self):
        return sum(r.params for r in self.rows)

    def counts(self):
        return [r.params for r in self.rows]

    def format_table(self, title=None):
        lines = []
        if title:
            lines.append(title)
        lines.append(f"{'Layer (type)':<28}{'Output Shape':<24}{'Param #':>14}")
        lines.append("=" * 66)
        for row in self.rows:
            shape = "[" + ", ".join(str(d) for d in row.output_shape) + "]"
            lines.append(f"{row.name:<28}{shape:<24}{row.params:>14,}")
        lines.append("=" * 66)
        lines.append(f"Total params: {self.total:,}")
        return "\n".join(lines)


def parameter_census(network: nn.Module, *inputs) -> ParameterCensus:
    """Per-leaf-layer output shapes and parameter counts, in call order.

    Layers are numbered ``<Type>-<n>`` like the usual model summary tables.
    Inputs default to ``network.example_inputs()`` when available.
    """
    leaves = [m for m in network.modules() if not list(m.children())]
    if leaves == [network] and not list(network.parameters()):
        return ParameterCensus([])
    if not inputs:
        inputs = network.example_inputs()
    rows = []

    def hook(module, _inp, out):
        if isinstance(out, tuple):
            out = out[0]
        n_params = sum(p.numel() for p in module.parameters(recurse=False))
        shape = (-1,) + tuple(out.shape[1:])
        rows.append(CensusRow(f"{type(module).__name__}-{len(rows) + 1}", shape, n_params))

    handles = [m.register_forward_hook(hook) for m in leaves]
    was_training = network.training
    network.eval()
    try:
        with torch.no_grad():
            network(*inputs)
    finally:
        network.train(was_training)
        for h in handles:
            h.remove()
    return ParameterCensus(rows)


def count_parameters(network: nn.Module) -> int:
    return sum(p.numel() for p in network.parameters())
