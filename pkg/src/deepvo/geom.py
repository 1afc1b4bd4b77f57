"""Pose-matrix algebra: parsing ground-truth transforms, extracting planar
differential motion, and dead-reckoning trajectories back together.

Conventions (camera frame): x right, y down, z forward.  A pose is the
world-from-camera transform at time t.  Yaw is the rotation about the
camera y axis, extracted as atan2(r[0,2], r[2,2]) so that R_y(theta) with
sin(theta) at [0,2] reads back as theta.  Differential motion between
consecutive poses is expressed in the body frame of the earlier pose.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import LengthMismatch, MalformedLine, NonRigid, TooShort

# Orthonormality of a parsed rotation: below ORTHO_WARN we accept as-is,
# up to ORTHO_REJECT we repair by polar projection, above we refuse.
ORTHO_WARN = 1e-6
ORTHO_REJECT = 1e-2


class DeltaPose(NamedTuple):
    """Planar differential motion (meters, meters, radians), body frame at t."""

    dx: float
    dz: float
    dtheta: float


class PlanarState(NamedTuple):
    """Accumulated planar pose: position (x, z) in meters, heading in radians."""

    x: float
    z: float
    theta: float


ORIGIN = PlanarState(0.0, 0.0, 0.0)


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class PoseMatrix:
    """Rigid world-from-camera transform: 3x3 rotation plus translation."""

    r: np.ndarray  # (3, 3), orthonormal, det +1
    t: np.ndarray  # (3,), meters

    def as_flat(self) -> np.ndarray:
        """Row-major 3x4 block as a flat 12-vector."""
        return np.hstack([self.r, self.t.reshape(3, 1)]).reshape(-1)

    def yaw(self) -> float:
        return math.atan2(self.r[0, 2], self.r[2, 2])

    def planar_state(self) -> PlanarState:
        return PlanarState(float(self.t[0]), float(self.t[2]), self.yaw())


def _nearest_rotation(m: np.ndarray) -> np.ndarray:
    """Polar projection onto SO(3), forcing det +1."""
    u, _, vt = np.linalg.svd(m)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


def _validate_rotation(r: np.ndarray) -> np.ndarray:
    err = float(np.abs(r @ r.T - np.eye(3)).max())
    det = float(np.linalg.det(r))
    if err > ORTHO_REJECT or abs(det - 1.0) > ORTHO_REJECT:
        raise NonRigid(
            f"rotation block beyond repair: orthogonality error {err:.3g}, det {det:.6g}"
        )
    if err > ORTHO_WARN or abs(det - 1.0) > ORTHO_WARN:
        warnings.warn(
            f"orthonormalizing rotation (error {err:.3g}, det {det:.6g})",
            stacklevel=3,
        )
        r = _nearest_rotation(r)
    return r


def make_pose(r: np.ndarray, t: np.ndarray) -> PoseMatrix:
    """Build a validated pose from a rotation block and translation."""
    r = _validate_rotation(np.asarray(r, dtype=np.float64).reshape(3, 3))
    t = np.asarray(t, dtype=np.float64).reshape(3).copy()
    return PoseMatrix(r=r, t=t)


def planar_pose(x: float, z: float, theta: float, y: float = 0.0) -> PoseMatrix:
    """Exact planar pose: rotation R_y(theta), translation (x, y, z)."""
    c, s = math.cos(theta), math.sin(theta)
    r = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    return PoseMatrix(r=r, t=np.array([x, y, z], dtype=np.float64))


def parse_pose_line(line: str) -> PoseMatrix:
    """Parse one ground-truth line: 12 whitespace-separated decimals, row-major 3x4."""
    fields = line.split()
    if len(fields) != 12:
        raise MalformedLine(f"expected 12 fields, got {len(fields)}")
    try:
        values = [float(f) for f in fields]
    except ValueError as exc:
        raise MalformedLine(f"non-numeric field in pose line: {exc}") from None
    block = np.array(values, dtype=np.float64).reshape(3, 4)
    return make_pose(block[:, :3], block[:, 3])


def format_pose_line(pose: PoseMatrix) -> str:
    """Serialize a pose to the 12-number line format, value-preserving."""
    return " ".join(repr(float(v)) for v in pose.as_flat())


def read_pose_file(path) -> list[PoseMatrix]:
    """Read a ground-truth pose file: one 12-number line per frame."""
    poses = []
    with open(path, "r", encoding="ascii") as fh:
        for raw in fh:
            if raw.strip():
                poses.append(parse_pose_line(raw))
    return poses


def write_pose_file(path, poses: Iterable[PoseMatrix]) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for pose in poses:
            fh.write(format_pose_line(pose) + "\n")


def relative_delta(a: PoseMatrix, b: PoseMatrix) -> DeltaPose:
    """Planar motion from pose a to pose b, in a's body frame.

    Uses the rigid inverse (r transposed), never a general matrix inverse.
    Delta y, pitch and roll are discarded: this is a lossy planar projection
    for non-planar inputs.
    """
    r_rel = a.r.T @ b.r
    t_rel = a.r.T @ (b.t - a.t)
    dtheta = math.atan2(r_rel[0, 2], r_rel[2, 2])
    return DeltaPose(float(t_rel[0]), float(t_rel[2]), wrap_angle(dtheta))


def decompose_trajectory(poses: Sequence[PoseMatrix]) -> list[DeltaPose]:
    """Consecutive-pair deltas for a pose sequence (length >= 2)."""
    if len(poses) < 2:
        raise TooShort(f"need at least 2 poses, got {len(poses)}")
    return [relative_delta(poses[i], poses[i + 1]) for i in range(len(poses) - 1)]


def integrate_trajectory(
    start: PlanarState, deltas: Sequence[DeltaPose]
) -> list[PlanarState]:
    """Dead-reckon a planar trajectory by chaining body-frame deltas.

    Step rule (each delta applied in the current body frame):
        x' = x + dx cos(theta) + dz sin(theta)
        z' = z - dx sin(theta) + dz cos(theta)
        theta' = wrap(theta + dtheta)
    """
    states = [start]
    x, z, theta = start
    for d in deltas:
        c, s = math.cos(theta), math.sin(theta)
        x = x + d.dx * c + d.dz * s
        z = z - d.dx * s + d.dz * c
        theta = wrap_angle(theta + d.dtheta)
        states.append(PlanarState(x, z, theta))
    return states


def deviation_curve(
    pred: Sequence[PlanarState], gt: Sequence[PlanarState]
) -> np.ndarray:
    """Per-timestep planar Euclidean distance between two trajectories."""
    if len(pred) != len(gt):
        raise LengthMismatch(f"length mismatch: {len(pred)} vs {len(gt)}")
    p = np.array([(s.x, s.z) for s in pred], dtype=np.float64).reshape(-1, 2)
    g = np.array([(s.x, s.z) for s in gt], dtype=np.float64).reshape(-1, 2)
    return np.hypot(p[:, 0] - g[:, 0], p[:, 1] - g[:, 1])


def write_trajectory_csv(path, states: Sequence[PlanarState]) -> None:
    """Trajectory CSV with header ``t,x,z,theta``."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("t,x,z,theta\n")
        for i, s in enumerate(states):
            fh.write(f"{i},{s.x!r},{s.z!r},{s.theta!r}\n")
