"""Circular cone-beam scan geometry and 3x4 projection matrices.

World frame: y is vertical (rotation axis), the source circles the
isocenter in the horizontal x-z plane.  View k sits at angle
k * angular_step; the detector u axis points along the rotation direction
and the v axis along +y.  Geometry and reconstruction work in millimeters;
the motion pipeline hands poses over in meters and is converted at this
boundary.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .se3 import RigidPose

__all__ = [
    "ScanGeometry",
    "build_trajectory",
    "project_point",
    "project_points",
    "apply_motion",
    "source_position",
    "pose_to_mm",
    "track_to_mm",
    "save_matrices_csv",
    "load_matrices_csv",
]


@dataclass(frozen=True)
class ScanGeometry:
    """Scanner description (distances and pitch in millimeters)."""

    sdd: float = 1198.0
    sid: float = 780.0
    n_cols: int = 620
    n_rows: int = 480
    pixel_pitch: float = 0.616
    n_views: int = 248
    angular_step_deg: float = 0.8
    frame_rate: float = 31.0
    isocenter: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "isocenter", np.asarray(self.isocenter, float).reshape(3))
        if not (self.sdd > self.sid > 0):
            raise ValueError("need sdd > sid > 0")
        if self.pixel_pitch <= 0 or self.n_views < 1:
            raise ValueError("invalid pitch or view count")

    @property
    def duration(self) -> float:
        return self.n_views / self.frame_rate

    @property
    def view_times(self) -> np.ndarray:
        return np.arange(self.n_views) / self.frame_rate

    @property
    def view_angles(self) -> np.ndarray:
        return np.deg2rad(self.angular_step_deg) * np.arange(self.n_views)

    @property
    def fan_half_angle(self) -> float:
        """Half fan angle subtended by the detector columns (radians)."""
        half_width = 0.5 * self.n_cols * self.pixel_pitch
        return float(np.arctan2(half_width, self.sdd))

    def geometry_hash(self) -> str:
        text = ",".join(
            repr(float(v) if not isinstance(v, int) else v)
            for v in (
                self.sdd, self.sid, self.n_cols, self.n_rows, self.pixel_pitch,
                self.n_views, self.angular_step_deg, self.frame_rate,
                *self.isocenter,
            )
        )
        return hashlib.sha256(text.encode()).hexdigest()[:16]


# Presets preserving the full-scale geometry's ratios at lower cost. The
# scan always covers 198.4 degrees in 8 seconds.
def full_geometry(isocenter=(0.0, 0.0, 0.0)) -> ScanGeometry:
    return ScanGeometry(isocenter=np.asarray(isocenter, float))


def desk_geometry(isocenter=(0.0, 0.0, 0.0)) -> ScanGeometry:
    return ScanGeometry(
        n_cols=310, n_rows=240, pixel_pitch=1.232,
        n_views=124, angular_step_deg=1.6, frame_rate=15.5,
        isocenter=np.asarray(isocenter, float),
    )


def tiny_geometry(isocenter=(0.0, 0.0, 0.0)) -> ScanGeometry:
    return ScanGeometry(
        n_cols=78, n_rows=60, pixel_pitch=4.928,
        n_views=62, angular_step_deg=3.2, frame_rate=7.75,
        isocenter=np.asarray(isocenter, float),
    )


GEOMETRY_PRESETS = {"full": full_geometry, "desk": desk_geometry, "tiny": tiny_geometry}


def build_trajectory(geom: ScanGeometry) -> np.ndarray:
    """Per-view projection matrices, shape (n_views, 3, 4).

    Matrices are normalized so the third-row direction is a unit vector
    with positive depth toward the scanned volume, which makes the
    homogeneous weight of a projected point its metric distance from the
    source along the principal ray.
    """
    f = geom.sdd / geom.pixel_pitch
    cu = 0.5 * (geom.n_cols - 1)
    cv = 0.5 * (geom.n_rows - 1)
    k = np.array([[f, 0.0, cu], [0.0, f, cv], [0.0, 0.0, 1.0]])
    mats = np.empty((geom.n_views, 3, 4))
    for i, beta in enumerate(geom.view_angles):
        c, s = np.cos(beta), np.sin(beta)
        src = geom.isocenter + geom.sid * np.array([c, 0.0, s])
        u_axis = np.array([-s, 0.0, c])
        v_axis = np.array([0.0, 1.0, 0.0])
        z_axis = np.array([-c, 0.0, -s])
        r = np.stack([u_axis, v_axis, z_axis])
        mats[i, :, :3] = k @ r
        mats[i, :, 3] = k @ (-r @ src)
    return mats


def project_points(p: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Pinhole-project points (n, 3) through a 3x4 matrix, returns (n, 2)."""
    x = np.atleast_2d(np.asarray(x, float))
    h = x @ p[:, :3].T + p[:, 3]
    w = h[:, 2]
    if np.any(w < 1e-12):
        raise ValueError("point at or behind the camera plane")
    return h[:, :2] / w[:, None]


def project_point(p: np.ndarray, x) -> tuple[float, float]:
    u, v = project_points(p, np.asarray(x, float).reshape(1, 3))[0]
    return float(u), float(v)


def apply_motion(p: np.ndarray, m: RigidPose) -> np.ndarray:
    """Compose a motion matrix into a projection matrix.

    ``m`` maps reference-frame (view-0) object coordinates to their moved
    position at this view, so the corrected matrix is P @ M: projecting a
    reference point through it equals projecting the moved point through P.
    """
    return np.asarray(p, float) @ m.as_matrix()


def source_position(p: np.ndarray) -> np.ndarray:
    """Camera center of a 3x4 projection matrix."""
    return -np.linalg.solve(p[:, :3], p[:, 3])


def pose_to_mm(pose: RigidPose) -> RigidPose:
    """Convert a meter-frame rigid pose to the millimeter world frame."""
    return RigidPose(pose.r, pose.t * 1000.0)


def track_to_mm(m_r: np.ndarray, m_t: np.ndarray):
    return m_r, m_t * 1000.0


def save_matrices_csv(path, mats: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"p{r}{c}" for r in range(3) for c in range(4)])
        for p in mats:
            writer.writerow([repr(float(v)) for v in p.ravel()])


def load_matrices_csv(path) -> np.ndarray:
    data = np.atleast_2d(np.genfromtxt(path, delimiter=",", skip_header=1))
    if data.shape[1] != 12:
        raise ValueError("expected 12 values per row")
    return data.reshape(-1, 3, 4)
