"""Synthetic strap-down IMU readings from a segment trajectory.

A sensor rigidly mounted on a segment measures specific force
a = R^T (p_dd - g) and body-frame angular rate w = unskew(R^T R_dot),
where R and p are the sensor's world orientation and position.  Both
derivatives come from finite differences on the sampled pose sequence
(central stencils inside, one-sided at the ends), so CSV-ingested motion
is handled identically to the analytic sway generator.

The acceleration uses the second-order second difference: downstream
velocity integration is algebraically exact for that stencil, so a higher
order would not help.  The angular rate uses a fourth-order first
derivative because rate errors tilt the orientation estimate, leak gravity
into the gravity-free acceleration, and drift position quadratically; at
second order that drift costs millimeters over a full scan.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .motion import SegmentTrajectory
from .se3 import RigidPose, unskew

__all__ = [
    "GRAVITY",
    "SensorMount",
    "ImuSeries",
    "ImuErrorModel",
    "sensor_world_poses",
    "simulate_imu",
    "corrupt",
    "save_imu_csv",
    "load_imu_csv",
]

GRAVITY = np.array([0.0, -9.80665, 0.0])


@dataclass(frozen=True)
class SensorMount:
    """Rigid placement of the sensor in a segment frame (meters)."""

    parent: str = "shank"
    p_sen: np.ndarray = field(default_factory=lambda: np.array([0.0, -0.14, 0.0]))
    r_mount: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        object.__setattr__(self, "p_sen", np.asarray(self.p_sen, float).reshape(3))
        object.__setattr__(self, "r_mount", np.asarray(self.r_mount, float).reshape(3, 3))
        if self.parent not in ("thigh", "shank"):
            raise ValueError(f"unknown parent segment {self.parent!r}")


@dataclass(frozen=True)
class ImuSeries:
    """Uniformly sampled accelerometer/gyroscope readings (sensor frame).

    a: (n, 3) m/s^2; w: (n, 3) rad/s; t: (n,) seconds, strictly increasing.
    """

    t: np.ndarray
    a: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", np.asarray(self.t, float))
        object.__setattr__(self, "a", np.asarray(self.a, float))
        object.__setattr__(self, "w", np.asarray(self.w, float))
        if not np.all(np.diff(self.t) > 0):
            raise ValueError("timestamps must be strictly increasing")
        if not (np.isfinite(self.a).all() and np.isfinite(self.w).all()):
            raise ValueError("samples must be finite")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])


@dataclass(frozen=True)
class ImuErrorModel:
    """Additive white noise and constant bias, seeded for reproducibility."""

    accel_sigma: float = 0.0
    gyro_sigma: float = 0.0
    accel_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "accel_bias", np.asarray(self.accel_bias, float).reshape(3))
        object.__setattr__(self, "gyro_bias", np.asarray(self.gyro_bias, float).reshape(3))
        if self.accel_sigma < 0 or self.gyro_sigma < 0:
            raise ValueError("noise sigmas must be non-negative")


def sensor_world_poses(traj: SegmentTrajectory, mount: SensorMount):
    """World pose of the mounted sensor per sample: (r (n,3,3), t (n,3))."""
    seg_r, seg_t = traj.segment_poses(mount.parent)
    r = np.einsum("nij,jk->nik", seg_r, mount.r_mount)
    t = seg_t + np.einsum("nij,j->ni", seg_r, mount.p_sen)
    return r, t


def _first_derivative(x: np.ndarray, dt: float) -> np.ndarray:
    """Fourth-order first derivative along axis 0."""
    d = np.empty_like(x)
    d[2:-2] = (-x[4:] + 8.0 * x[3:-1] - 8.0 * x[1:-3] + x[:-4]) / (12.0 * dt)
    edge = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / (12.0 * dt)
    next_to_edge = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / (12.0 * dt)
    for k, c in ((0, edge), (1, next_to_edge)):
        d[k] = np.tensordot(c, x[:5], axes=(0, 0))
        d[-1 - k] = -np.tensordot(c, x[-1::-1][:5], axes=(0, 0))
    return d


def _second_derivative(x: np.ndarray, dt: float) -> np.ndarray:
    """Second-order second derivative along axis 0."""
    d = np.empty_like(x)
    d[1:-1] = (x[2:] - 2.0 * x[1:-1] + x[:-2]) / dt**2
    d[0] = (2.0 * x[0] - 5.0 * x[1] + 4.0 * x[2] - x[3]) / dt**2
    d[-1] = (2.0 * x[-1] - 5.0 * x[-2] + 4.0 * x[-3] - x[-4]) / dt**2
    return d


def simulate_imu(
    traj: SegmentTrajectory,
    mount: SensorMount = SensorMount(),
    g: np.ndarray = GRAVITY,
) -> ImuSeries:
    """Ideal accelerometer and gyroscope readings of the mounted sensor."""
    if len(traj) < 5:
        raise ValueError("need at least 5 samples for the difference stencils")
    g = np.asarray(g, float)
    dt = 1.0 / traj.sample_rate
    r, p = sensor_world_poses(traj, mount)
    p_dd = _second_derivative(p, dt)
    r_dot = _first_derivative(r, dt)
    a = np.einsum("nji,nj->ni", r, p_dd - g)
    omega_mat = np.einsum("nji,njk->nik", r, r_dot)
    w = np.stack([unskew(m, tol=np.inf) for m in omega_mat])
    return ImuSeries(traj.times, a, w)


def corrupt(series: ImuSeries, model: ImuErrorModel) -> ImuSeries:
    """Apply seeded Gaussian noise plus constant per-axis bias."""
    rng = np.random.default_rng(model.seed)
    n = len(series)
    a = series.a + model.accel_bias + model.accel_sigma * rng.standard_normal((n, 3))
    w = series.w + model.gyro_bias + model.gyro_sigma * rng.standard_normal((n, 3))
    return ImuSeries(series.t, a, w)


def save_imu_csv(series: ImuSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "ax", "ay", "az", "wx", "wy", "wz"])
        for i in range(len(series)):
            writer.writerow(
                [repr(float(series.t[i]))]
                + [repr(float(v)) for v in series.a[i]]
                + [repr(float(v)) for v in series.w[i]]
            )


def load_imu_csv(path) -> ImuSeries:
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    if data.ndim != 2 or data.shape[1] != 7:
        raise ValueError("expected 7 columns: t,ax,ay,az,wx,wy,wz")
    return ImuSeries(data[:, 0], data[:, 1:4], data[:, 4:7])
