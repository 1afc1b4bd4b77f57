"""Named-tensor checkpoint container.

Layout: magic ``DVOC``, u32 version, u32 tensor count, then per-tensor
records (u32 name length + UTF-8 name, u32 rank, u64-LE dims, f32-LE
payload).  Everything after the last record is a UTF-8 metadata block of
``key=value`` lines (training iteration, optimizer settings, normalization
statistics, network configuration).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointMissingStats, DecodeError
from .ingest import NormStats
from .nncore import SgdConfig

MAGIC = b"DVOC"
VERSION = 1


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    metadata: dict[str, str] = field(default_factory=dict)

    # -- typed metadata accessors -------------------------------------

    def set_iteration(self, iteration: int) -> None:
        self.metadata["iteration"] = str(iteration)

    def iteration(self) -> int:
        return int(self.metadata.get("iteration", "0"))

    def set_sgd(self, cfg: SgdConfig) -> None:
        self.metadata["sgd.lr"] = repr(cfg.lr)
        self.metadata["sgd.momentum"] = repr(cfg.momentum)
        self.metadata["sgd.weight_decay"] = repr(cfg.weight_decay)
        self.metadata["sgd.decay_factor"] = repr(cfg.decay_factor)
        self.metadata["sgd.decay_interval"] = str(cfg.decay_interval)

    def sgd(self) -> SgdConfig:
        m = self.metadata
        return SgdConfig(
            lr=float(m["sgd.lr"]),
            momentum=float(m["sgd.momentum"]),
            weight_decay=float(m["sgd.weight_decay"]),
            decay_factor=float(m["sgd.decay_factor"]),
            decay_interval=int(m["sgd.decay_interval"]),
        )

    def set_norm_stats(self, stats: NormStats) -> None:
        self.metadata["norm.mean"] = ",".join(repr(float(v)) for v in stats.mean)
        self.metadata["norm.std"] = ",".join(repr(float(v)) for v in stats.std)

    def norm_stats(self) -> NormStats:
        try:
            mean = np.array([float(v) for v in self.metadata["norm.mean"].split(",")])
            std = np.array([float(v) for v in self.metadata["norm.std"].split(",")])
        except KeyError as exc:
            raise CheckpointMissingStats(f"checkpoint lacks {exc} metadata") from None
        return NormStats(mean=mean, std=std)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(ckpt.tensors)))
        for name, arr in ckpt.tensors.items():
            encoded = name.encode("utf-8")
            arr32 = np.ascontiguousarray(arr, dtype="<f4")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr32.ndim))
            fh.write(struct.pack(f"<{arr32.ndim}Q", *arr32.shape))
            fh.write(arr32.tobytes())
        lines = [f"{k}={v}" for k, v in sorted(ckpt.metadata.items())]
        fh.write("\n".join(lines).encode("utf-8"))


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise DecodeError(f"bad checkpoint magic {raw[:4]!r}")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise DecodeError(f"unsupported checkpoint version {version}")
    off = 12
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", raw, off)
        off += 4
        name = raw[off:off + name_len].decode("utf-8")
        off += name_len
        (rank,) = struct.unpack_from("<I", raw, off)
        off += 4
        dims = struct.unpack_from(f"<{rank}Q", raw, off)
        off += 8 * rank
        size = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(raw, "<f4", size, off).reshape(dims).copy()
        off += 4 * size
        tensors[name] = arr
    metadata: dict[str, str] = {}
    if off < len(raw):
        for line in raw[off:].decode("utf-8").splitlines():
            if line:
                key, _, value = line.partition("=")
                metadata[key] = value
    return Checkpoint(tensors=tensors, metadata=metadata)
