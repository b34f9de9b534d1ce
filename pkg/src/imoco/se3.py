"""Rigid transforms and small rotation-matrix utilities.

Rotations are explicit 3x3 orthonormal matrices, poses are (rotation,
translation) pairs equivalent to 4x4 affine matrices with last row
(0, 0, 0, 1).  Angles are radians throughout; translation units are
whatever the caller feeds in (this module never converts units).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RigidPose",
    "skew",
    "unskew",
    "rotation_from_axis_angle",
    "axis_angle_from_rotation",
    "euler_xyz",
    "orthonormalize",
    "is_rotation",
]


def skew(w) -> np.ndarray:
    """Cross-product matrix of a 3-vector: skew(w) @ v == cross(w, v)."""
    wx, wy, wz = np.asarray(w, dtype=float)
    return np.array([
        [0.0, -wz, wy],
        [wz, 0.0, -wx],
        [-wy, wx, 0.0],
    ])


def unskew(m, tol: float = 1e-6) -> np.ndarray:
    """Extract the 3-vector from an antisymmetric matrix.

    The input is symmetrized as (m - m.T) / 2 first, so small symmetric
    contamination is tolerated; anything beyond ``tol`` is an error.
    """
    m = np.asarray(m, dtype=float)
    asym = 0.5 * (m - m.T)
    residual = np.abs(m - asym).max()
    if residual > tol:
        raise ValueError(
            f"matrix is not antisymmetric: symmetric residual {residual:.3e} > {tol:.1e}"
        )
    return np.array([asym[2, 1], asym[0, 2], asym[1, 0]])


def rotation_from_axis_angle(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation about ``axis`` by ``angle`` radians."""
    axis = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(axis)
    if norm == 0.0:
        if angle == 0.0:
            return np.eye(3)
        raise ValueError("zero axis with nonzero angle")
    k = skew(axis / norm)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def rotation_from_rotvec(v) -> np.ndarray:
    """Rotation by the vector ``v`` (axis * angle)."""
    v = np.asarray(v, dtype=float)
    angle = np.linalg.norm(v)
    if angle == 0.0:
        return np.eye(3)
    return rotation_from_axis_angle(v / angle, angle)


def axis_angle_from_rotation(r) -> np.ndarray:
    """Rotation vector (axis * angle) of a rotation matrix.

    Stable for the small angles produced by per-sample increments; angles
    approaching pi are rejected since nothing in the pipeline produces them.
    """
    r = np.asarray(r, dtype=float)
    w = unskew(0.5 * (r - r.T), tol=np.inf)
    s = np.linalg.norm(w)  # sin(angle)
    c = 0.5 * (np.trace(r) - 1.0)  # cos(angle)
    angle = np.arctan2(s, c)
    if angle > 3.0:
        raise ValueError("rotation angle too close to pi for this extraction")
    if s < 1e-12:
        return w  # angle ~ sin(angle), axis*angle ~ w
    return w * (angle / s)


def euler_xyz(rx: float, ry: float, rz: float) -> np.ndarray:
    """Rotation Rx(rx) @ Ry(ry) @ Rz(rz) (intrinsic XYZ convention)."""
    return (
        rotation_from_axis_angle((1, 0, 0), rx)
        @ rotation_from_axis_angle((0, 1, 0), ry)
        @ rotation_from_axis_angle((0, 0, 1), rz)
    )


def orthonormalize(r) -> np.ndarray:
    """Nearest rotation matrix (polar decomposition via SVD)."""
    u, _, vt = np.linalg.svd(np.asarray(r, dtype=float))
    out = u @ vt
    if np.linalg.det(out) < 0:
        u[:, -1] = -u[:, -1]
        out = u @ vt
    return out


def is_rotation(r, tol: float = 1e-9) -> bool:
    r = np.asarray(r, dtype=float)
    return (
        np.abs(r.T @ r - np.eye(3)).max() <= tol
        and abs(np.linalg.det(r) - 1.0) <= tol
    )


@dataclass(frozen=True)
class RigidPose:
    """Rotation + translation locating a frame in some parent frame."""

    r: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "r", np.asarray(self.r, dtype=float))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float).reshape(3))

    @staticmethod
    def identity() -> "RigidPose":
        return RigidPose()

    @staticmethod
    def from_matrix(m) -> "RigidPose":
        m = np.asarray(m, dtype=float)
        return RigidPose(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.r
        m[:3, 3] = self.t
        return m

    def apply(self, points) -> np.ndarray:
        """Transform one point (3,) or many points (n, 3)."""
        p = np.asarray(points, dtype=float)
        return p @ self.r.T + self.t

    def inverse(self) -> "RigidPose":
        rt = self.r.T
        return RigidPose(rt, -rt @ self.t)

    def orthonormalized(self) -> "RigidPose":
        return RigidPose(orthonormalize(self.r), self.t)

    def __matmul__(self, other: "RigidPose") -> "RigidPose":
        return compose(self, other)


def compose(a: RigidPose, b: RigidPose) -> RigidPose:
    """Pose composition, equal to the 4x4 matrix product a @ b."""
    return RigidPose(a.r @ b.r, a.r @ b.t + a.t)
