"""Dataset assembly: rasters, warp/downsample, consecutive-frame pairing with
differential-motion labels, split schemes, and the flat binary sample record.

Pixels are 8-bit at ingest and unit-scaled ([0,1] then per-channel mean/std
normalization) on the way into the network.  Labels stay in meters/radians.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    DecodeError,
    DimensionMismatch,
    EmptySet,
    EmptySide,
    LengthMismatch,
    TooShort,
    UnknownSequence,
    ZeroDimension,
)
from .geom import DeltaPose, PoseMatrix, relative_delta

RECORD_MAGIC = b"DVOS"
RECORD_VERSION = 1
_HEADER = struct.Struct("<4sHIIH")  # magic, version, W, H, C


@dataclass(frozen=True)
class Raster:
    """Row-major interleaved 8-bit image buffer, shape (H, W, C)."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.dtype != np.uint8:
            raise DimensionMismatch(
                f"raster needs uint8 (H, W, C) data, got {self.data.dtype} "
                f"{self.data.shape}"
            )

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def load_raster(path) -> Raster:
    """Decode a grayscale or RGB image file into an 8-bit raster."""
    try:
        with Image.open(path) as img:
            if img.mode == "L":
                arr = np.asarray(img, dtype=np.uint8)[:, :, None]
            else:
                arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from None
    return Raster(np.ascontiguousarray(arr))


def save_raster(path, img: Raster) -> None:
    arr = img.data[:, :, 0] if img.channels == 1 else img.data
    Image.fromarray(arr).save(path)


def warp_resize(img: Raster, out_w: int, out_h: int) -> Raster:
    """Bilinear resample with independent x/y scale factors (aspect is not
    preserved).  Pixel centers follow the half-pixel convention, so an
    identity resize is byte-identical."""
    if out_w < 1 or out_h < 1:
        raise ZeroDimension(f"output size {out_w}x{out_h}")
    h, w = img.height, img.width
    if h < 1 or w < 1:
        raise ZeroDimension("empty source raster")
    if (out_w, out_h) == (w, h):
        return Raster(img.data.copy())

    def axis_coords(n_in: int, n_out: int):
        src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1.0)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = src - lo
        return lo, hi, frac

    y0, y1, fy = axis_coords(h, out_h)
    x0, x1, fx = axis_coords(w, out_w)
    data = img.data.astype(np.float64)
    top = data[y0][:, x0] * (1 - fx)[None, :, None] + data[y0][:, x1] * fx[None, :, None]
    bot = data[y1][:, x0] * (1 - fx)[None, :, None] + data[y1][:, x1] * fx[None, :, None]
    out = top * (1 - fy)[:, None, None] + bot * fy[:, None, None]
    return Raster(np.floor(out + 0.5).astype(np.uint8))


@dataclass(frozen=True)
class Sample:
    """Consecutive frame pair with its differential-motion label."""

    img_a: Raster
    img_b: Raster
    label: DeltaPose
    seq_id: str = ""
    frame_idx: int = 0

    def __post_init__(self):
        if self.img_a.data.shape != self.img_b.data.shape:
            raise DimensionMismatch(
                f"paired frames differ: {self.img_a.data.shape} vs "
                f"{self.img_b.data.shape}"
            )


def build_pairs(
    frames: Sequence[Raster], poses: Sequence[PoseMatrix], seq_id: str = ""
) -> list[Sample]:
    """Pair frames (i, i+1) with the relative delta of their poses."""
    if len(frames) != len(poses):
        raise LengthMismatch(f"{len(frames)} frames vs {len(poses)} poses")
    if len(frames) < 2:
        raise TooShort("need at least 2 frames")
    return [
        Sample(frames[i], frames[i + 1], relative_delta(poses[i], poses[i + 1]),
               seq_id=seq_id, frame_idx=i)
        for i in range(len(frames) - 1)
    ]


def augment_with_feature_channel(s: Sample, mask_a: Raster, mask_b: Raster) -> Sample:
    """Append a single-channel feature mask as an extra channel on both frames."""
    for mask, img in ((mask_a, s.img_a), (mask_b, s.img_b)):
        if mask.channels != 1:
            raise DimensionMismatch(f"mask must be single-channel, got {mask.channels}")
        if (mask.height, mask.width) != (img.height, img.width):
            raise DimensionMismatch(
                f"mask {mask.height}x{mask.width} vs image {img.height}x{img.width}"
            )
    return Sample(
        Raster(np.concatenate([s.img_a.data, mask_a.data], axis=2)),
        Raster(np.concatenate([s.img_b.data, mask_b.data], axis=2)),
        s.label,
        seq_id=s.seq_id,
        frame_idx=s.frame_idx,
    )


@dataclass(frozen=True)
class SplitSpec:
    """Either whole-sequence holdout or a seeded within-sequence random split.

    Random mode shuffles each sequence independently and takes a prefix of
    train_fraction, so every environment appears on both sides.
    """

    mode: Literal["holdout", "random"]
    train_sequences: tuple[str, ...] = ()
    test_sequences: tuple[str, ...] = ()
    train_fraction: float = 0.8
    seed: int = 0


def split(samples: Sequence[Sample], spec: SplitSpec) -> tuple[list[Sample], list[Sample]]:
    if not samples:
        raise EmptySet("no samples to split")
    if spec.mode == "holdout":
        train_ids = set(spec.train_sequences)
        test_ids = set(spec.test_sequences)
        train, test = [], []
        for s in samples:
            if s.seq_id in train_ids:
                train.append(s)
            elif s.seq_id in test_ids:
                test.append(s)
            else:
                raise UnknownSequence(s.seq_id)
    elif spec.mode == "random":
        if not 0.0 < spec.train_fraction < 1.0:
            raise EmptySide(f"train_fraction {spec.train_fraction} not in (0, 1)")
        by_seq: dict[str, list[Sample]] = {}
        for s in samples:
            by_seq.setdefault(s.seq_id, []).append(s)
        rng = np.random.default_rng(spec.seed)
        train, test = [], []
        for seq_id in sorted(by_seq):
            group = by_seq[seq_id]
            order = rng.permutation(len(group))
            n_train = int(np.floor(len(group) * spec.train_fraction + 0.5))
            if len(group) >= 2:
                n_train = min(max(n_train, 1), len(group) - 1)
            train.extend(group[i] for i in order[:n_train])
            test.extend(group[i] for i in order[n_train:])
    else:
        raise ValueError(f"unknown split mode {spec.mode!r}")
    if not train or not test:
        raise EmptySide(f"split produced {len(train)} train / {len(test)} test")
    return train, test


@dataclass(frozen=True)
class NormStats:
    """Per-channel mean/std of unit-scaled training pixels (std clamped > 0)."""

    mean: np.ndarray
    std: np.ndarray


def compute_norm_stats(train: Sequence[Sample]) -> NormStats:
    if not train:
        raise EmptySet("cannot compute stats on an empty train set")
    channels = train[0].img_a.channels
    total = np.zeros(channels, dtype=np.float64)
    total_sq = np.zeros(channels, dtype=np.float64)
    count = 0
    for s in train:
        for img in (s.img_a, s.img_b):
            flat = img.data.reshape(-1, channels).astype(np.float64) / 255.0
            total += flat.sum(axis=0)
            total_sq += (flat * flat).sum(axis=0)
            count += flat.shape[0]
    mean = total / count
    var = np.maximum(total_sq / count - mean * mean, 0.0)
    std = np.sqrt(var)
    std[std < 1e-12] = 1.0
    return NormStats(mean=mean, std=std)


def normalize_image(img: Raster, stats: NormStats, dtype=np.float32) -> np.ndarray:
    """Unit-scale then standardize; returns a CHW float array."""
    scaled = img.data.astype(np.float64) / 255.0
    out = (scaled - stats.mean) / stats.std
    return out.transpose(2, 0, 1).astype(dtype)


# ---------------------------------------------------------------------------
# flat binary sample records


def write_records(path, samples: Iterable[Sample]) -> int:
    """Append-style writer: one fixed-header record per sample."""
    n = 0
    with open(path, "wb") as fh:
        for s in samples:
            fh.write(_HEADER.pack(RECORD_MAGIC, RECORD_VERSION,
                                  s.img_a.width, s.img_a.height, s.img_a.channels))
            fh.write(s.img_a.data.tobytes())
            fh.write(s.img_b.data.tobytes())
            fh.write(struct.pack("<3d", *s.label))
            n += 1
    return n


def read_records(path) -> list[Sample]:
    samples = []
    raw = Path(path).read_bytes()
    off = 0
    idx = 0
    while off < len(raw):
        magic, version, w, h, c = _HEADER.unpack_from(raw, off)
        if magic != RECORD_MAGIC:
            raise DecodeError(f"bad record magic at offset {off}: {magic!r}")
        if version != RECORD_VERSION:
            raise DecodeError(f"unsupported record version {version}")
        off += _HEADER.size
        nbytes = h * w * c
        img_a = np.frombuffer(raw, np.uint8, nbytes, off).reshape(h, w, c)
        off += nbytes
        img_b = np.frombuffer(raw, np.uint8, nbytes, off).reshape(h, w, c)
        off += nbytes
        label = DeltaPose(*struct.unpack_from("<3d", raw, off))
        off += 24
        samples.append(Sample(Raster(img_a.copy()), Raster(img_b.copy()),
                              label, frame_idx=idx))
        idx += 1
    return samples


# ---------------------------------------------------------------------------
# manifest


@dataclass(frozen=True)
class ManifestEntry:
    seq_id: str
    image_dir: Path
    pose_file: Path


def parse_manifest(path) -> list[ManifestEntry]:
    """One line per sequence: ``<seq_id> <image_dir> <pose_file>``.

    Relative paths are resolved against the manifest's directory.
    """
    base = Path(path).parent
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise DecodeError(f"manifest line needs 3 fields: {line!r}")
            seq_id, image_dir, pose_file = parts
            entries.append(ManifestEntry(
                seq_id,
                (base / image_dir).resolve(),
                (base / pose_file).resolve(),
            ))
    return entries


def list_frames(image_dir) -> list[Path]:
    """Image files of a sequence directory in lexicographic (temporal) order."""
    exts = {".png", ".jpg", ".jpeg", ".bmp"}
    frames = sorted(p for p in Path(image_dir).iterdir()
                    if p.suffix.lower() in exts)
    if not frames:
        raise EmptySet(f"no image files in {image_dir}")
    return frames
