"""Analytic ellipsoid leg phantom with exact line integrals.

Primitives are ellipsoids defined in the frame of the segment that carries
them (thigh or shank, origin at the proximal joint, long axis -y), each
with an additive attenuation delta so nested structures (marrow inside
bone inside soft tissue) need no geometric subtraction.  Units are
millimeters and 1/mm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .motion import SegmentTrajectory
from .se3 import euler_xyz

__all__ = [
    "Primitive",
    "PosedPhantom",
    "default_leg_phantom",
    "pose_at",
    "line_integral",
    "save_phantom_file",
    "load_phantom_file",
]

# Representative attenuation around 60 keV; synthetic values, not tissue data.
MU_SOFT_TISSUE = 0.02
MU_BONE_DELTA = 0.03
MU_MARROW_DELTA = -0.015


@dataclass(frozen=True)
class Primitive:
    """One ellipsoid bound to a leg segment (segment-frame millimeters)."""

    name: str
    parent: str
    center: np.ndarray
    semi_axes: np.ndarray
    euler: np.ndarray = field(default_factory=lambda: np.zeros(3))
    delta_mu: float = MU_SOFT_TISSUE

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, float).reshape(3))
        object.__setattr__(self, "semi_axes", np.asarray(self.semi_axes, float).reshape(3))
        object.__setattr__(self, "euler", np.asarray(self.euler, float).reshape(3))
        if self.parent not in ("thigh", "shank"):
            raise ValueError(f"unknown parent segment {self.parent!r}")
        if (self.semi_axes <= 0).any():
            raise ValueError("semi-axes must be positive")

    def local_rotation(self) -> np.ndarray:
        return euler_xyz(*self.euler)

    def surface_points(self, n_per_axis: int = 12) -> np.ndarray:
        """Sampled surface points in the segment frame (containment checks)."""
        theta = np.linspace(0, np.pi, n_per_axis)
        phi = np.linspace(0, 2 * np.pi, 2 * n_per_axis, endpoint=False)
        tt, pp = np.meshgrid(theta, phi)
        unit = np.stack(
            [np.sin(tt) * np.cos(pp), np.sin(tt) * np.sin(pp), np.cos(tt)], axis=-1
        ).reshape(-1, 3)
        return unit * self.semi_axes @ self.local_rotation().T + self.center


def default_leg_phantom() -> list[Primitive]:
    """Fixed left-leg phantom: soft tissue, femur/tibia/fibula with marrow, patella.

    Thigh frame origin is the hip center, shank frame origin the knee
    center; +z is anterior.  Only the knee region is modeled (distal femur,
    proximal tibia/fibula, patella), so the phantom fits the scanner
    field of view around the joint; the shafts fade into soft tissue above
    and below rather than running the full bone length.
    """
    return [
        Primitive("thigh_soft_tissue", "thigh", (0, -375, 0), (60, 45, 60), delta_mu=MU_SOFT_TISSUE),
        Primitive("femur", "thigh", (0, -375, 0), (18, 40, 18), delta_mu=MU_BONE_DELTA),
        Primitive("femur_marrow", "thigh", (0, -375, 0), (9, 30, 9), delta_mu=MU_MARROW_DELTA),
        Primitive("patella", "thigh", (0, -410, 45), (12, 18, 8), delta_mu=MU_BONE_DELTA),
        Primitive("shank_soft_tissue", "shank", (0, -50, 0), (55, 50, 55), delta_mu=MU_SOFT_TISSUE),
        Primitive("tibia", "shank", (0, -50, 5), (16, 45, 16), delta_mu=MU_BONE_DELTA),
        Primitive("tibia_marrow", "shank", (0, -50, 5), (8, 34, 8), delta_mu=MU_MARROW_DELTA),
        Primitive("fibula", "shank", (28, -55, -15), (7, 40, 7), delta_mu=MU_BONE_DELTA),
        Primitive("fibula_marrow", "shank", (28, -55, -15), (3.5, 30, 3.5), delta_mu=MU_MARROW_DELTA),
    ]


@dataclass(frozen=True)
class PosedPhantom:
    """World-frame snapshot of the phantom at one time index.

    rot: (k, 3, 3) primitive-to-world rotations; center: (k, 3) mm;
    inv_map: (k, 3, 3) matrices taking world offsets into the unit-sphere
    frame of each ellipsoid (diag(1/axes) @ rot.T); delta_mu: (k,).
    """

    rot: np.ndarray
    center: np.ndarray
    semi_axes: np.ndarray
    inv_map: np.ndarray
    delta_mu: np.ndarray

    def __len__(self) -> int:
        return len(self.delta_mu)


def pose_at(primitives, traj: SegmentTrajectory, index: int) -> PosedPhantom:
    """Rigidly transport each primitive by its parent segment pose."""
    if index < 0 or index >= len(traj):
        raise IndexError(f"trajectory index {index} out of range")
    k = len(primitives)
    rot = np.empty((k, 3, 3))
    center = np.empty((k, 3))
    semi = np.empty((k, 3))
    inv_map = np.empty((k, 3, 3))
    mu = np.empty(k)
    for j, prim in enumerate(primitives):
        seg_r, seg_t = traj.segment_poses(prim.parent)
        r_w = seg_r[index] @ prim.local_rotation()
        c_w = seg_r[index] @ prim.center + seg_t[index] * 1000.0
        rot[j] = r_w
        center[j] = c_w
        semi[j] = prim.semi_axes
        inv_map[j] = (r_w / prim.semi_axes[None, :]).T  # diag(1/a) @ r_w.T
        mu[j] = prim.delta_mu
    return PosedPhantom(rot, center, semi, inv_map, mu)


def static_pose(primitives, traj: SegmentTrajectory) -> PosedPhantom:
    return pose_at(primitives, traj, 0)


def _chords(phantom: PosedPhantom, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Summed attenuation-weighted chord lengths for rays origin + t*dirs.

    ``dirs`` must be unit vectors; only the t >= 0 half-line contributes.
    """
    total = np.zeros(len(dirs))
    for j in range(len(phantom)):
        b = phantom.inv_map[j]
        o = b @ (origin - phantom.center[j])
        d = dirs @ b.T
        aa = np.einsum("ni,ni->n", d, d)
        bb = d @ o
        cc = o @ o - 1.0
        disc = bb * bb - aa * cc
        hit = disc > 0
        if not hit.any():
            continue
        sq = np.sqrt(disc[hit])
        t1 = (-bb[hit] - sq) / aa[hit]
        t2 = (-bb[hit] + sq) / aa[hit]
        chord = np.maximum(0.0, t2 - np.maximum(t1, 0.0))
        total[hit] += phantom.delta_mu[j] * chord
    return total


def line_integral(phantom: PosedPhantom, origin, direction) -> float:
    """Attenuation line integral along a single ray (unit direction)."""
    direction = np.asarray(direction, float).reshape(3)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    return float(_chords(phantom, np.asarray(origin, float).reshape(3), direction.reshape(1, 3))[0])


def line_integrals(phantom: PosedPhantom, origin, dirs) -> np.ndarray:
    """Vectorized line integrals for many unit rays from a common origin."""
    return _chords(phantom, np.asarray(origin, float).reshape(3), np.atleast_2d(np.asarray(dirs, float)))


def save_phantom_file(primitives, path) -> None:
    with open(path, "w") as fh:
        fh.write("# name,parent,cx,cy,cz,ax,ay,az,ex,ey,ez,delta_mu  (mm, rad, 1/mm)\n")
        for p in primitives:
            vals = [*p.center, *p.semi_axes, *p.euler, p.delta_mu]
            fh.write(",".join([p.name, p.parent] + [repr(float(v)) for v in vals]) + "\n")


def load_phantom_file(path) -> list[Primitive]:
    prims = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 12:
                raise ValueError(f"line {lineno}: expected 12 fields, got {len(parts)}")
            name, parent = parts[0], parts[1]
            try:
                vals = [float(v) for v in parts[2:]]
            except ValueError:
                raise ValueError(f"line {lineno}: non-numeric field") from None
            prims.append(
                Primitive(name, parent, vals[0:3], vals[3:6], vals[6:9], vals[9])
            )
    if not prims:
        raise ValueError("phantom file contains no primitives")
    return prims
