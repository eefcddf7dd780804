"""
Corpus ingestion and preprocessing.

Corpus layout on disk::

    root/
        Baroque/*.jpg|png
        Rococo/*.jpg|png
        ...

Every image is normalized to [-1, 1], cut into five crops at 0.9x of each
spatial dimension and bilinearly resized to 64x64. The five crops count as
separate dataset items, so an epoch over N files yields 5*N samples.
"""
import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image, UnidentifiedImageError

logger = logging.getLogger(__name__)

STYLE_NAMES = (
    "Abstract_Expressionism",
    "Action_painting",
    "Analytical_Cubism",
    "Art_Nouveau",
    "Baroque",
    "Color_Field_Painting",
    "Contemporary_Realism",
    "Cubism",
    "Early_Renaissance",
    "Expressionism",
    "Fauvism",
    "High_Renaissance",
    "Impressionism",
    "Mannerism_Late_Renaissance",
    "Minimalism",
    "Naive_Art_Primitivism",
    "New_Realism",
    "Northern_Renaissance",
    "Pointillism",
    "Pop_Art",
    "Post_Impressionism",
    "Realism",
    "Rococo",
    "Romanticism",
)

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg"}
MIN_SIDE = 72
NUM_CROPS = 5
CROP_NAMES = ("top_left", "top_right", "bottom_left", "bottom_right", "center")


class DataError(Exception):
    pass


class StyleVocabulary:
    """Ordered style tags with a name <-> index map."""

    def __init__(self, names: Sequence[str] = STYLE_NAMES):
        names = tuple(names)
        if len(set(names)) != len(names):
            raise ValueError("style names must be distinct")
        self.names = names
        self._index = {name: i for i, name in enumerate(names)}

    def __len__(self):
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def __contains__(self, name):
        return name in self._index

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(
                f"unknown style {name!r}; known styles: {', '.join(self.names)}"
            ) from None

    def name_of(self, index: int) -> str:
        if not 0 <= index < len(self.names):
            raise IndexError(f"style index {index} outside [0, {len(self.names)})")
        return self.names[index]

    def resolve(self, style) -> int:
        """Accept a style name, a numeric string or an integer index."""
        if isinstance(style, str):
            if style in self._index:
                return self._index[style]
            if style.lstrip("-").isdigit():
                style = int(style)
            else:
                self.index_of(style)
        index = int(style)
        self.name_of(index)
        return index


VOCABULARY = StyleVocabulary()


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    style: str


@dataclass
class DatasetManifest:
    entries: list
    counts: dict
    skipped: list = field(default_factory=list)
    vocabulary: StyleVocabulary = VOCABULARY

    def __len__(self):
        return len(self.entries)

    @property
    def num_samples(self):
        return NUM_CROPS * len(self.entries)

    def style_indices(self):
        return [self.vocabulary.index_of(e.style) for e in self.entries]


def load_raw_image(path) -> np.ndarray:
    """Decode an image file into an (h, w, 3) uint8 array."""
    with Image.open(path) as img:
        img.load()
        arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
    h, w = arr.shape[:2]
    if h < MIN_SIDE or w < MIN_SIDE:
        raise DataError(f"{path}: {h}x{w} is smaller than {MIN_SIDE}x{MIN_SIDE}")
    return arr


def _is_decodable(path):
    try:
        load_raw_image(path)
    except (OSError, UnidentifiedImageError, DataError, ValueError) as exc:
        logger.warning("skipping %s: %s", path, exc)
        return False
    return True


def _build_manifest(candidates, vocabulary):
    entries, skipped = [], []
    for path, style in sorted(candidates):
        if _is_decodable(path):
            entries.append(ManifestEntry(str(path), style))
        else:
            skipped.append(str(path))
    if not entries:
        raise DataError("no entries")
    counts = {}
    for entry in entries:
        counts[entry.style] = counts.get(entry.style, 0) + 1
    if skipped:
        logger.warning("skipped %d undecodable file(s)", len(skipped))
    return DatasetManifest(entries, counts, skipped, vocabulary)


def load_manifest(root_dir, manifest_csv=None, vocabulary: StyleVocabulary = VOCABULARY) -> DatasetManifest:
    """Scan ``root_dir/<StyleName>/*`` (or read a ``path,style`` CSV) into a manifest.

    Entries are ordered lexicographically by path. Files that fail to decode
    are skipped and listed in ``manifest.skipped``.
    """
    if manifest_csv is not None:
        return load_manifest_csv(manifest_csv, vocabulary)
    root = Path(root_dir)
    if not root.is_dir():
        raise DataError(f"corpus root {root} is not a directory")
    candidates = []
    for style_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        if style_dir.name not in vocabulary:
            raise DataError(f"unknown style directory {style_dir}")
        for path in style_dir.iterdir():
            if path.is_file() and path.suffix.lower() in IMAGE_EXTENSIONS:
                candidates.append((path, style_dir.name))
    return _build_manifest(candidates, vocabulary)


def load_manifest_csv(csv_path, vocabulary: StyleVocabulary = VOCABULARY) -> DatasetManifest:
    """Read a UTF-8 ``path,style`` CSV. Relative paths resolve against the CSV's directory."""
    csv_path = Path(csv_path)
    base = csv_path.parent
    candidates = []
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"path", "style"} <= set(reader.fieldnames):
            raise DataError(f"{csv_path}: expected header 'path,style'")
        for lineno, row in enumerate(reader, start=2):
            style = row["style"]
            if style not in vocabulary:
                raise DataError(f"{csv_path}:{lineno}: unknown style {style!r}")
            path = Path(row["path"])
            if not path.is_absolute():
                path = base / path
            candidates.append((path, style))
    return _build_manifest(candidates, vocabulary)


def normalize(raw: np.ndarray) -> torch.Tensor:
    """uint8 (h, w, 3) -> float tensor (3, h, w) with 0 -> -1 and 255 -> 1."""
    arr = torch.from_numpy(np.array(raw, dtype=np.uint8)).permute(2, 0, 1)
    return arr.to(torch.float32) / 127.5 - 1.0


def denormalize(values) -> np.ndarray:
    """Inverse of :func:`normalize` up to rounding; returns uint8."""
    if isinstance(values, torch.Tensor):
        values = values.detach().cpu().numpy()
    out = np.rint((np.asarray(values, dtype=np.float64) + 1.0) * 127.5)
    return np.clip(out, 0, 255).astype(np.uint8)


def crop_size(h: int, w: int):
    # exact floor(0.9 * n) in integer arithmetic
    return (9 * h) // 10, (9 * w) // 10


def crop_boxes(h: int, w: int):
    """(top, left, height, width) for each crop in [TL, TR, BL, BR, C] order."""
    ch, cw = crop_size(h, w)
    return [
        (0, 0, ch, cw),
        (0, w - cw, ch, cw),
        (h - ch, 0, ch, cw),
        (h - ch, w - cw, ch, cw),
        ((h - ch) // 2, (w - cw) // 2, ch, cw),
    ]


def five_crop(img):
    """Four corner crops and a center crop of an (h, w, ...) array or (c, h, w) tensor."""
    if isinstance(img, torch.Tensor):
        h, w = img.shape[-2:]
        return [img[..., t:t + ch, l:l + cw] for t, l, ch, cw in crop_boxes(h, w)]
    h, w = img.shape[:2]
    return [img[t:t + ch, l:l + cw] for t, l, ch, cw in crop_boxes(h, w)]


def resize(img: torch.Tensor, size: int = 64) -> torch.Tensor:
    """Bilinear resize of a (c, h, w) tensor to (c, size, size)."""
    if tuple(img.shape[-2:]) == (size, size):
        return img.clone()
    out = F.interpolate(img.unsqueeze(0), size=(size, size), mode="bilinear", align_corners=False)
    return out.squeeze(0)


def resize_to_64(img: torch.Tensor) -> torch.Tensor:
    return resize(img, 64)


def preprocess(raw: np.ndarray, crop_id: int, size: int = 64) -> torch.Tensor:
    """normalize -> select one of the five crops -> resize."""
    return resize(five_crop(normalize(raw))[crop_id], size)


def epoch_permutation(n_items: int, seed: int, epoch: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5348, epoch]))
    return rng.permutation(n_items)


def make_batches(
    manifest: DatasetManifest,
    batch_size: int,
    seed: int,
    epoch: int,
    image_size: int = 64,
    workers: int = 1,
) -> Iterator:
    """Yield ``(images, styles)`` for one epoch.

    Item ``i`` of the permutation refers to entry ``i // 5``, crop ``i % 5``.
    The last batch may be short. Output order does not depend on ``workers``.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = epoch_permutation(manifest.num_samples, seed, epoch)
    styles = manifest.style_indices()

    def load(item):
        entry_idx, crop_id = divmod(int(item), NUM_CROPS)
        raw = load_raw_image(manifest.entries[entry_idx].path)
        return preprocess(raw, crop_id, image_size)

    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        for start in range(0, len(order), batch_size):
            chunk = order[start:start + batch_size]
            images = list(pool.map(load, chunk)) if pool else [load(i) for i in chunk]
            labels = torch.tensor([styles[int(i) // NUM_CROPS] for i in chunk], dtype=torch.long)
            yield torch.stack(images), labels
    finally:
        if pool is not None:
            pool.shutdown()


def num_batches(manifest: DatasetManifest, batch_size: int) -> int:
    return -(-manifest.num_samples // batch_size)


def write_synthetic_corpus(root, n_images: int, seed: int = 0, size=(80, 80), styles=None):
    """Write ``n_images`` random PNGs spread over ``styles`` (default: first four tags).

    Each image is a smooth colour gradient plus noise, enough structure for
    smoke tests and demos.
    """
    root = Path(root)
    styles = list(styles or STYLE_NAMES[:4])
    rng = np.random.default_rng(seed)
    h, w = size
    yy, xx = np.mgrid[0:h, 0:w]
    paths = []
    for i in range(n_images):
        style = styles[i % len(styles)]
        base = rng.uniform(0, 255, size=3)
        slope = rng.uniform(-1.5, 1.5, size=(2, 3))
        img = base + yy[..., None] * slope[0] + xx[..., None] * slope[1]
        img = img + rng.normal(0, 12, size=img.shape)
        img = np.clip(img, 0, 255).astype(np.uint8)
        out = root / style
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"img_{i:05d}.png"
        Image.fromarray(img).save(path)
        paths.append(path)
    return paths
