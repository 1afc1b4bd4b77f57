"""Deterministic synthetic driving world: a textured ground plane plus a
distant procedural skyline, rendered by perspective projection along an
exactly-planar camera trajectory.

Every output byte is a pure function of (config, script, region): texturing
uses integer hashing, rendering is elementwise float64.  The skyline sits at
infinity, so it shifts with yaw but not with translation; the ground texture
carries the parallax that encodes forward/lateral motion.

``scale_factor`` multiplies all world geometry (camera height, texel size,
per-frame motion).  Projection is scale-invariant, so two worlds differing
only in scale produce identical frames with proportionally scaled motion
labels -- the controlled setup for metric-scale experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidConfig
from .geom import PoseMatrix, planar_pose, wrap_angle
from .ingest import Raster

_MIX1 = np.uint64(0x9E3779B97F4A7C15)
_MIX2 = np.uint64(0xC2B2AE3D27D4EB4F)
_MIX3 = np.uint64(0xD6E8FEB86659FD93)


@dataclass(frozen=True)
class WorldConfig:
    seed: int = 0
    extent: tuple[float, float] = (512.0, 512.0)
    texture_cell: float = 2.0
    camera_height: float = 1.5
    focal: float = 64.0
    image_size: int = 128
    scale_factor: float = 1.0

    def __post_init__(self):
        positives = {
            "extent": min(self.extent),
            "texture_cell": self.texture_cell,
            "camera_height": self.camera_height,
            "focal": self.focal,
            "image_size": self.image_size,
            "scale_factor": self.scale_factor,
        }
        for name, value in positives.items():
            if value <= 0:
                raise InvalidConfig(f"{name} must be positive, got {value}")


@dataclass(frozen=True)
class MotionScript:
    """Per-frame (speed m/frame, yaw_rate rad/frame) commands."""

    commands: tuple[tuple[float, float], ...]

    def __post_init__(self):
        arr = np.asarray(self.commands, dtype=np.float64)
        if arr.size and not np.isfinite(arr).all():
            raise InvalidConfig("script commands must be finite")

    def __len__(self) -> int:
        return len(self.commands)

    @classmethod
    def from_csv(cls, path) -> "MotionScript":
        commands = []
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header.replace(" ", "") != "speed,yaw_rate":
                raise InvalidConfig(f"script header must be speed,yaw_rate, got {header!r}")
            for line in fh:
                line = line.strip()
                if line:
                    speed, yaw = line.split(",")
                    commands.append((float(speed), float(yaw)))
        return cls(tuple(commands))

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("speed,yaw_rate\n")
            for speed, yaw in self.commands:
                fh.write(f"{speed!r},{yaw!r}\n")


def make_drive_script(seed: int, n_frames: int, segment: int = 12,
                      speed_range: tuple[float, float] = (0.4, 1.6),
                      yaw_limit: float = 0.05,
                      mixed_direction: bool = True) -> MotionScript:
    """Piecewise-constant driving commands, deterministic per seed.

    mixed_direction alternates forward/backward segments so the corpus
    label mean stays near zero (a constant predictor gains little).
    """
    rng = np.random.default_rng(seed)
    commands = []
    while len(commands) < n_frames:
        speed = float(rng.uniform(*speed_range))
        if mixed_direction and rng.random() < 0.5:
            speed = -speed
        yaw = float(rng.uniform(-yaw_limit, yaw_limit))
        for _ in range(min(segment, n_frames - len(commands))):
            commands.append((speed, yaw))
    return MotionScript(tuple(commands))


# ---------------------------------------------------------------------------
# hashing / texturing


def _hash01(ix: np.ndarray, iz: np.ndarray, salt: int) -> np.ndarray:
    """Deterministic lattice hash -> float64 in [0, 1)."""
    h = ix.astype(np.int64).view(np.uint64) * _MIX1
    h ^= iz.astype(np.int64).view(np.uint64) * _MIX2
    h ^= np.uint64((salt * 0xD6E8FEB86659FD93) & 0xFFFFFFFFFFFFFFFF)
    h ^= h >> np.uint64(33)
    h *= _MIX2
    h ^= h >> np.uint64(29)
    h *= _MIX1
    h ^= h >> np.uint64(32)
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def _value_noise(u: np.ndarray, v: np.ndarray, salt: int) -> np.ndarray:
    """Bilinear value noise over the integer lattice."""
    u0 = np.floor(u)
    v0 = np.floor(v)
    fu = u - u0
    fv = v - v0
    n00 = _hash01(u0, v0, salt)
    n10 = _hash01(u0 + 1, v0, salt)
    n01 = _hash01(u0, v0 + 1, salt)
    n11 = _hash01(u0 + 1, v0 + 1, salt)
    top = n00 * (1 - fu) + n10 * fu
    bot = n01 * (1 - fu) + n11 * fu
    return top * (1 - fv) + bot * fv


def _region_salt(seed: int, region: int) -> int:
    return (seed * 0x1000193 + region * 0x9E3779B9 + 0x811C9DC5) & 0xFFFFFFFFFFFFFFFF


def _ground_color(gx: np.ndarray, gz: np.ndarray, dist: np.ndarray,
                  cfg: WorldConfig, region: int) -> np.ndarray:
    """RGB in [0,255] for ground-plane points (vectorized)."""
    cell = cfg.texture_cell * cfg.scale_factor
    off = region * (cfg.extent[0] / cfg.texture_cell)
    u = gx / cell + off
    v = gz / cell + off
    salt = _region_salt(cfg.seed, region)
    checker = ((np.floor(u) + np.floor(v)) % 2.0) * 0.25
    fine = _value_noise(u * 2.0, v * 2.0, salt) * 0.45
    coarse = _value_noise(u / 5.0, v / 5.0, salt + 1) * 0.30
    shade = checker + fine + coarse  # in [0, 1)
    rgb = np.empty(gx.shape + (3,), dtype=np.float64)
    rgb[..., 0] = 40 + 170 * shade
    rgb[..., 1] = 50 + 160 * shade
    rgb[..., 2] = 35 + 150 * _value_noise(u, v, salt + 2) * 0.5 + 110 * shade
    # Fade distant ground toward haze; distance is measured in scaled units
    # so the blend is invariant to scale_factor.
    fog = 1.0 / (1.0 + (dist / (60.0 * cfg.scale_factor)) ** 2)
    return rgb * fog[..., None] + _HAZE * (1.0 - fog[..., None])


_HAZE = np.array([168.0, 178.0, 192.0])


def _sky_color(azimuth: np.ndarray, elevation: np.ndarray,
               cfg: WorldConfig, region: int) -> np.ndarray:
    """Skyline band plus sky gradient for above-horizon directions."""
    salt = _region_salt(cfg.seed, region) ^ 0x5BD1E995
    bins = 256
    b = np.floor((azimuth + math.pi) / (2 * math.pi) * bins).astype(np.int64) % bins
    zeros = np.zeros_like(b)
    height = 0.02 + 0.13 * _hash01(b, zeros, salt)
    jag = 0.02 * _value_noise(azimuth * 40.0, zeros.astype(np.float64), salt + 3)
    building = elevation < (height + jag)
    shade = (55.0 + 70.0 * _hash01(b, zeros + 1, salt))[..., None]
    grad = np.clip(elevation, 0.0, 0.5) / 0.5
    sky = _HAZE[None, :] + (np.array([62.0, 50.0, 40.0])[None, :] * grad[..., None])
    rgb = np.where(building[..., None], shade, sky)
    return rgb


def _render_frame(cfg: WorldConfig, pose: PoseMatrix, region: int) -> Raster:
    s = cfg.image_size
    c = (s - 1) / 2.0
    f = cfg.focal
    u, v = np.meshgrid(np.arange(s, dtype=np.float64),
                       np.arange(s, dtype=np.float64))
    d_cam = np.stack([(u - c) / f, (v - c) / f, np.ones_like(u)], axis=-1)
    d_world = d_cam @ pose.r.T  # row-vector form of R @ d
    dy = d_world[..., 1]
    ground = dy > 1e-9

    origin = pose.t
    rgb = np.empty((s, s, 3), dtype=np.float64)

    dist = np.where(ground, -origin[1] / np.where(ground, dy, 1.0), 0.0)
    gx = origin[0] + dist * d_world[..., 0]
    gz = origin[2] + dist * d_world[..., 2]
    ray_norm = np.sqrt((d_world ** 2).sum(axis=-1))
    ground_rgb = _ground_color(gx, gz, dist * ray_norm, cfg, region)

    horiz = np.hypot(d_world[..., 0], d_world[..., 2])
    azimuth = np.arctan2(d_world[..., 0], d_world[..., 2])
    elevation = -dy / np.maximum(horiz, 1e-12)
    sky_rgb = _sky_color(azimuth, elevation, cfg, region)

    rgb = np.where(ground[..., None], ground_rgb, sky_rgb)
    return Raster(np.floor(np.clip(rgb, 0.0, 255.0) + 0.5).astype(np.uint8))


# ---------------------------------------------------------------------------
# trajectory + sequence rendering


def script_poses(cfg: WorldConfig, script: MotionScript) -> list[PoseMatrix]:
    """Exact planar poses from chaining unicycle-arc commands.

    A command (speed, yaw_rate) moves along a circular arc: body-frame
    displacement (s(1-cos g)/g, s sin(g)/g) and heading change g, all
    scaled by scale_factor.  Poses carry the camera height in y.
    """
    sigma = cfg.scale_factor
    height = -cfg.camera_height * sigma
    x = z = theta = 0.0
    poses = [planar_pose(x, z, theta, y=height)]
    for speed, yaw in script.commands:
        arc = speed * sigma
        if abs(yaw) < 1e-12:
            dx, dz = 0.0, arc
        else:
            dx = arc * (1.0 - math.cos(yaw)) / yaw
            dz = arc * math.sin(yaw) / yaw
        cth, sth = math.cos(theta), math.sin(theta)
        x += dx * cth + dz * sth
        z += -dx * sth + dz * cth
        theta = wrap_angle(theta + yaw)
        poses.append(planar_pose(x, z, theta, y=height))
    return poses


def render_sequence(cfg: WorldConfig, script: MotionScript,
                    region: int = 0) -> tuple[list[Raster], list[PoseMatrix]]:
    """Frames and exact ground-truth poses; len(frames) = len(script) + 1."""
    if len(script) < 1:
        raise InvalidConfig("script must contain at least one command")
    poses = script_poses(cfg, script)
    frames = [_render_frame(cfg, pose, region) for pose in poses]
    return frames, poses


def region_split(cfg: WorldConfig, scripts) -> tuple[list, list]:
    """Render every script in two disjoint world regions.

    Region B samples a texture window displaced by the world extent and
    salted with a different seed, so no surface or skyline is shared.
    Returns ([(frames, poses), ...] for A, same for B).
    """
    corpus_a = [render_sequence(cfg, s, region=0) for s in scripts]
    corpus_b = [render_sequence(cfg, s, region=1) for s in scripts]
    return corpus_a, corpus_b


def save_sequence(out_dir, frames, poses, seq_id: str = "00") -> Path:
    """Write frames/poses/manifest in the layout the ingest CLI consumes."""
    from . import geom, ingest

    out = Path(out_dir)
    img_dir = out / f"seq{seq_id}"
    img_dir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        ingest.save_raster(img_dir / f"{i:06d}.png", frame)
    pose_file = out / f"poses{seq_id}.txt"
    geom.write_pose_file(pose_file, poses)
    manifest = out / "manifest.txt"
    with open(manifest, "a", encoding="utf-8") as fh:
        fh.write(f"{seq_id} {img_dir.name} {pose_file.name}\n")
    return manifest
