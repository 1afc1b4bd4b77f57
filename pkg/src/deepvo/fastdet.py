"""FAST segment-test corner detection for the feature-prior channel.

A pixel is a corner when at least ``arc_length`` contiguous pixels on its
radius-3 Bresenham circle are all brighter than center+threshold or all
darker than center-threshold.  The contiguity test runs on 16-bit masks
(AND of rotated copies); no high-speed pre-check shortcut is used, so the
result is the reference segment test at every pixel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ImageTooSmall, InvalidConfig, MultiChannelInput
from .ingest import Raster

# Radius-3 midpoint circle, clockwise from 12 o'clock: (dx, dy) pairs.
CIRCLE_OFFSETS: tuple[tuple[int, int], ...] = (
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
)


@dataclass(frozen=True)
class FastConfig:
    threshold: int = 20
    arc_length: int = 9
    nms: bool = True

    def __post_init__(self):
        if self.threshold < 1:
            raise InvalidConfig(f"threshold must be >= 1, got {self.threshold}")
        if not 9 <= self.arc_length <= 12:
            raise InvalidConfig(f"arc_length must be in [9, 12], got {self.arc_length}")


class Corner(NamedTuple):
    x: int
    y: int
    score: int


def luma(img: Raster) -> Raster:
    """RGB to single-channel via 0.299/0.587/0.114 weights."""
    if img.channels == 1:
        return img
    rgb = img.data[:, :, :3].astype(np.float64)
    gray = rgb[:, :, 0] * 0.299 + rgb[:, :, 1] * 0.587 + rgb[:, :, 2] * 0.114
    return Raster(np.floor(gray + 0.5).astype(np.uint8)[:, :, None])


def _rotate_right(mask: np.ndarray, k: int) -> np.ndarray:
    if k == 0:
        return mask
    return ((mask >> np.uint32(k)) | (mask << np.uint32(16 - k))) & np.uint32(0xFFFF)


def _segment_masks(gray: np.ndarray, cfg: FastConfig):
    """Per-interior-pixel: is-corner flags and the score map.

    Score is the sum of |I(circle) - I(center)| over circle pixels passing
    the threshold test in the qualifying direction (the larger sum when
    both directions qualify); used only to rank corners for NMS.
    """
    h, w = gray.shape
    center = gray[3:h - 3, 3:w - 3].astype(np.int32)
    bright_bits = np.zeros(center.shape, dtype=np.uint32)
    dark_bits = np.zeros(center.shape, dtype=np.uint32)
    bright_sum = np.zeros(center.shape, dtype=np.int32)
    dark_sum = np.zeros(center.shape, dtype=np.int32)
    for bit, (dx, dy) in enumerate(CIRCLE_OFFSETS):
        ring = gray[3 + dy:h - 3 + dy, 3 + dx:w - 3 + dx].astype(np.int32)
        diff = ring - center
        brighter = diff > cfg.threshold
        darker = diff < -cfg.threshold
        bright_bits |= brighter.astype(np.uint32) << np.uint32(bit)
        dark_bits |= darker.astype(np.uint32) << np.uint32(bit)
        bright_sum += np.where(brighter, diff, 0)
        dark_sum += np.where(darker, -diff, 0)

    def has_arc(bits: np.ndarray) -> np.ndarray:
        run = bits.copy()
        for k in range(1, cfg.arc_length):
            run &= _rotate_right(bits, k)
        return run != 0

    bright_ok = has_arc(bright_bits)
    dark_ok = has_arc(dark_bits)
    is_corner = bright_ok | dark_ok
    score = np.maximum(np.where(bright_ok, bright_sum, 0),
                       np.where(dark_ok, dark_sum, 0))
    return is_corner, score


def _check_input(img: Raster) -> np.ndarray:
    if img.channels != 1:
        raise MultiChannelInput(f"detector needs 1 channel, got {img.channels}")
    if img.height < 7 or img.width < 7:
        raise ImageTooSmall(f"{img.width}x{img.height} is below the 7x7 minimum")
    return img.data[:, :, 0]


def _nms(is_corner: np.ndarray, score: np.ndarray) -> np.ndarray:
    """Keep corners strictly greater than every 3x3 neighbor's score."""
    padded = np.pad(score, 1, constant_values=-1)
    keep = is_corner.copy()
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            shifted = padded[1 + dy:1 + dy + score.shape[0],
                             1 + dx:1 + dx + score.shape[1]]
            keep &= score > shifted
    return keep


def detect(img: Raster, cfg: FastConfig = FastConfig()) -> list[Corner]:
    """Corners of a single-channel raster, row-major order."""
    gray = _check_input(img)
    is_corner, score = _segment_masks(gray, cfg)
    if cfg.nms:
        is_corner = _nms(is_corner, score)
    ys, xs = np.nonzero(is_corner)
    return [Corner(int(x) + 3, int(y) + 3, int(score[y, x]))
            for y, x in zip(ys, xs)]


def corner_mask(img: Raster, cfg: FastConfig = FastConfig()) -> Raster:
    """255 at corner pixels, 0 elsewhere; same height/width as the input."""
    gray = _check_input(img)
    is_corner, score = _segment_masks(gray, cfg)
    if cfg.nms:
        is_corner = _nms(is_corner, score)
    mask = np.zeros(gray.shape, dtype=np.uint8)
    mask[3:-3, 3:-3][is_corner] = 255
    return Raster(mask[:, :, None])
