"""
Single-file, self-describing checkpoints.

Layout::

    CANFORGE-CKPT-1\\n
    <header length in bytes, decimal>\\n
    <JSON header>
    <raw little-endian tensor bytes, concatenated>

The JSON header holds the model spec (as ``key=value`` text), the training
config, the run metadata and a table describing every tensor blob. Tensors
are stored as raw bytes, so a load/save cycle is bit exact and saving the
same state twice gives identical files.
"""
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .models import ModelSpec

MAGIC = b"CANFORGE-CKPT-1"


class CheckpointError(Exception):
    pass


@dataclass
class Checkpoint:
    spec: ModelSpec
    generator_state: dict
    discriminator_state: dict
    optimizer_g_state: Optional[dict] = None
    optimizer_d_state: Optional[dict] = None
    epoch: int = 0
    seed: int = 0
    loss_history: list = field(default_factory=list)
    training_config: Optional[dict] = None


class _Encoder:
    def __init__(self):
        self.blobs = []
        self.table = []
        self.offset = 0

    def tensor(self, t: torch.Tensor):
        t = t.detach().cpu().contiguous()
        arr = t.numpy() if t.dtype != torch.bfloat16 else t.view(torch.int16).numpy()
        data = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        self.table.append({
            "dtype": str(t.dtype).replace("torch.", ""),
            "shape": list(t.shape),
            "offset": self.offset,
            "nbytes": len(data),
        })
        self.blobs.append(data)
        self.offset += len(data)
        return {"__tensor__": len(self.table) - 1}

    def encode(self, obj):
        if isinstance(obj, torch.Tensor):
            return self.tensor(obj)
        if isinstance(obj, dict):
            return {"__items__": [[self.encode(k), self.encode(v)] for k, v in obj.items()]}
        if isinstance(obj, (list, tuple)):
            return {"__tuple__" if isinstance(obj, tuple) else "__list__": [self.encode(v) for v in obj]}
        if obj is None or isinstance(obj, (bool, int, float, str)):
            return obj
        raise CheckpointError(f"cannot serialise {type(obj).__name__}")


def _decode(obj, tensors):
    if isinstance(obj, dict):
        if "__tensor__" in obj:
            return tensors[obj["__tensor__"]]
        if "__items__" in obj:
            return {_decode(k, tensors): _decode(v, tensors) for k, v in obj["__items__"]}
        if "__tuple__" in obj:
            return tuple(_decode(v, tensors) for v in obj["__tuple__"])
        if "__list__" in obj:
            return [_decode(v, tensors) for v in obj["__list__"]]
    return obj


def to_bytes(ckpt: Checkpoint) -> bytes:
    enc = _Encoder()
    header = {
        "format": MAGIC.decode(),
        "model_spec": ckpt.spec.to_text(),
        "training_config": ckpt.training_config,
        "epoch": ckpt.epoch,
        "seed": ckpt.seed,
        "loss_history": [list(r) for r in ckpt.loss_history],
        "generator": enc.encode(ckpt.generator_state),
        "discriminator": enc.encode(ckpt.discriminator_state),
        "optimizer_g": enc.encode(ckpt.optimizer_g_state),
        "optimizer_d": enc.encode(ckpt.optimizer_d_state),
        "tensors": enc.table,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    return b"".join([MAGIC, b"\n", str(len(head)).encode(), b"\n", head] + enc.blobs)


def from_bytes(data: bytes) -> Checkpoint:
    magic, _, rest = data.partition(b"\n")
    if magic != MAGIC:
        raise CheckpointError(f"not a checkpoint (expected magic {MAGIC.decode()!r})")
    size, _, rest = rest.partition(b"\n")
    try:
        size = int(size)
        header = json.loads(rest[:size].decode("utf-8"))
    except ValueError as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    body = memoryview(rest)[size:]
    tensors = []
    for info in header["tensors"]:
        chunk = body[info["offset"]:info["offset"] + info["nbytes"]]
        if len(chunk) != info["nbytes"]:
            raise CheckpointError("truncated checkpoint")
        dtype = getattr(torch, info["dtype"])
        np_dtype = torch.empty(0, dtype=dtype).numpy().dtype.newbyteorder("<")
        arr = np.frombuffer(chunk, dtype=np_dtype).reshape(info["shape"])
        tensors.append(torch.from_numpy(arr.astype(arr.dtype.newbyteorder("="))).clone())
    return Checkpoint(
        spec=ModelSpec.from_text(header["model_spec"]),
        generator_state=_decode(header["generator"], tensors),
        discriminator_state=_decode(header["discriminator"], tensors),
        optimizer_g_state=_decode(header["optimizer_g"], tensors),
        optimizer_d_state=_decode(header["optimizer_d"], tensors),
        epoch=header["epoch"],
        seed=header["seed"],
        loss_history=[tuple(r) for r in header["loss_history"]],
        training_config=header["training_config"],
    )


def atomic_write_bytes(path, data: bytes) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    atomic_write_bytes(path, to_bytes(ckpt))


def load_checkpoint(path) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())
