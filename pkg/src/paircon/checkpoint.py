"""Self-describing checkpoint container.

Layout: the 8-byte magic ``PAIRCON1``, a little-endian uint64 manifest length,
a UTF-8 JSON manifest, then the raw little-endian tensor payloads in manifest
order. Tensors round-trip bit-exactly.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

MAGIC = b"PAIRCON1"
_DTYPES = {
    "float32": np.float32,
    "float64": np.float64,
    "float16": np.float16,
    "int64": np.int64,
    "int32": np.int32,
    "uint8": np.uint8,
    "bool": np.bool_,
}


class CheckpointError(ValueError):
    pass


def _to_numpy(t) -> np.ndarray:
    if isinstance(t, torch.Tensor):
        t = t.detach().cpu().numpy()
    # ascontiguousarray would promote 0-d arrays to 1-d
    arr = np.asarray(t)
    return arr if arr.flags.c_contiguous else arr.copy()


def write_container(path, tensors: dict[str, object], meta: dict | None = None) -> None:
    arrays = {name: _to_numpy(t) for name, t in tensors.items()}
    entries = []
    offset = 0
    for name, arr in arrays.items():
        dtype = arr.dtype.name
        if dtype not in _DTYPES:
            raise CheckpointError(f"unsupported dtype {dtype} for {name}")
        entries.append({"name": name, "dtype": dtype, "shape": list(arr.shape), "offset": offset, "nbytes": arr.nbytes})
        offset += arr.nbytes
    manifest = json.dumps({"version": 1, "tensors": entries, "meta": meta or {}}, sort_keys=True).encode()
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        for arr in arrays.values():
            fh.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())


def read_container(path) -> tuple[dict[str, np.ndarray], dict]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (n,) = struct.unpack("<Q", data[8:16])
    manifest = json.loads(data[16 : 16 + n].decode())
    base = 16 + n
    tensors = {}
    for e in manifest["tensors"]:
        dt = np.dtype(_DTYPES[e["dtype"]]).newbyteorder("<")
        start = base + e["offset"]
        buf = data[start : start + e["nbytes"]]
        if len(buf) != e["nbytes"]:
            raise CheckpointError(f"{path}: truncated payload for {e['name']}")
        tensors[e["name"]] = np.frombuffer(buf, dtype=dt).reshape(e["shape"]).astype(dt.newbyteorder("="))
    return tensors, manifest["meta"]


@dataclass
class Checkpoint:
    model_state: dict[str, torch.Tensor]
    optimizer_state: dict[str, torch.Tensor] = field(default_factory=dict)
    epoch: int = 0
    best_validation_accuracy: float = float("nan")
    rng_state: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def save(self, path) -> None:
        tensors = {f"model/{k}": v for k, v in self.model_state.items()}
        tensors.update({f"optim/{k}": v for k, v in self.optimizer_state.items()})
        rng = dict(self.rng_state)
        torch_state = rng.pop("torch", None)
        if torch_state is not None:
            tensors["rng/torch"] = torch_state
        meta = {
            "epoch": self.epoch,
            # repr keeps the float exact and tolerates nan
            "best_validation_accuracy": repr(float(self.best_validation_accuracy)),
            "rng": rng,
            "meta": self.meta,
        }
        write_container(path, tensors, meta)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        tensors, meta = read_container(path)
        model, optim, rng = {}, {}, dict(meta.get("rng", {}))
        for name, arr in tensors.items():
            group, _, key = name.partition("/")
            t = torch.from_numpy(arr.copy())
            if group == "model":
                model[key] = t
            elif group == "optim":
                optim[key] = t
            elif group == "rng" and key == "torch":
                rng["torch"] = t
        return cls(
            model_state=model,
            optimizer_state=optim,
            epoch=int(meta["epoch"]),
            best_validation_accuracy=float(meta["best_validation_accuracy"]),
            rng_state=rng,
            meta=meta.get("meta", {}),
        )
