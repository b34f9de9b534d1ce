"""Articulated leg motion: synthetic sway, CSV ingestion, smoothing, kinematics.

The model is a two-segment chain (thigh, shank) of the left leg driven by
generalized coordinates: root (hip center) position and orientation, three
hip angles, and knee flexion.  Frames: y is the world vertical (up), x is
mediolateral, z is anterior.  Segment long axes point along -y in the
reference posture; joint flexion rotates about the segment x axis.

All Euler angle triples use the intrinsic XYZ convention of
:func:`imoco.se3.euler_xyz`.  Lengths are meters, angles radians, sample
rates Hz.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .se3 import RigidPose, euler_xyz, rotation_from_axis_angle

__all__ = [
    "GeneralizedCoords",
    "SegmentTrajectory",
    "SwayParams",
    "generate_sway",
    "smooth",
    "forward_kinematics",
    "load_coords_csv",
    "save_coords_csv",
]

#: column order of the CSV interchange format (after the time column)
CSV_CHANNELS = (
    "root_x", "root_y", "root_z",
    "root_rx", "root_ry", "root_rz",
    "hip_flex", "hip_add", "hip_rot",
    "knee_flex",
)

DEFAULT_THIGH_LENGTH = 0.42
DEFAULT_SHANK_LENGTH = 0.43


@dataclass(frozen=True)
class GeneralizedCoords:
    """Per-sample pose parameters of the leg chain.

    root_pos: (n, 3) meters; root_euler: (n, 3) radians (XYZ);
    hip: (n, 3) radians in order (flexion, adduction, rotation);
    knee: (n,) radians of knee flexion.
    """

    root_pos: np.ndarray
    root_euler: np.ndarray
    hip: np.ndarray
    knee: np.ndarray
    sample_rate: float

    def __post_init__(self):
        object.__setattr__(self, "root_pos", np.atleast_2d(np.asarray(self.root_pos, float)))
        object.__setattr__(self, "root_euler", np.atleast_2d(np.asarray(self.root_euler, float)))
        object.__setattr__(self, "hip", np.atleast_2d(np.asarray(self.hip, float)))
        object.__setattr__(self, "knee", np.atleast_1d(np.asarray(self.knee, float)))
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        n = len(self.knee)
        for name in ("root_pos", "root_euler", "hip"):
            arr = getattr(self, name)
            if arr.shape != (n, 3):
                raise ValueError(f"{name} must have shape ({n}, 3), got {arr.shape}")

    def __len__(self) -> int:
        return len(self.knee)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) / self.sample_rate

    def channels(self) -> np.ndarray:
        """All 10 channels as an (n, 10) array in CSV column order."""
        return np.column_stack([self.root_pos, self.root_euler, self.hip, self.knee])

    @staticmethod
    def from_channels(ch: np.ndarray, sample_rate: float) -> "GeneralizedCoords":
        ch = np.asarray(ch, float)
        return GeneralizedCoords(ch[:, 0:3], ch[:, 3:6], ch[:, 6:9], ch[:, 9], sample_rate)


@dataclass(frozen=True)
class SegmentTrajectory:
    """Thigh/shank poses and joint centers over time.

    Pose arrays are stacked: *_r is (n, 3, 3), *_t is (n, 3) in meters.
    """

    thigh_r: np.ndarray
    thigh_t: np.ndarray
    shank_r: np.ndarray
    shank_t: np.ndarray
    hip_center: np.ndarray
    knee_center: np.ndarray
    ankle_center: np.ndarray
    sample_rate: float

    def __len__(self) -> int:
        return len(self.knee_center)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) / self.sample_rate

    def thigh_pose(self, i: int) -> RigidPose:
        return RigidPose(self.thigh_r[i], self.thigh_t[i])

    def shank_pose(self, i: int) -> RigidPose:
        return RigidPose(self.shank_r[i], self.shank_t[i])

    def segment_poses(self, parent: str):
        if parent == "thigh":
            return self.thigh_r, self.thigh_t
        if parent == "shank":
            return self.shank_r, self.shank_t
        raise ValueError(f"unknown segment {parent!r}")

    def nearest_index(self, t: float) -> int:
        i = int(round(t * self.sample_rate))
        if i < 0 or i >= len(self):
            raise IndexError(f"time {t} s outside trajectory")
        return i


@dataclass(frozen=True)
class SwayParams:
    """Synthetic sway configuration.

    Amplitudes are half peak-to-peak deviations around the static squat
    posture: translation in meters, angles in radians.  Each active channel
    is a sum of 2-4 seeded sinusoids at ``base_freq`` and its harmonics,
    rescaled so the sampled peak-to-peak equals exactly twice the amplitude.
    """

    trans_amp: np.ndarray = field(default_factory=lambda: np.zeros(3))
    root_rot_amp: np.ndarray = field(default_factory=lambda: np.zeros(3))
    hip_amp: np.ndarray = field(default_factory=lambda: np.zeros(3))
    knee_amp: float = 0.0
    base_freq: float = 0.25
    duration: float = 8.1
    sample_rate: float = 120.0
    squat_knee: float = np.deg2rad(30.0)

    def __post_init__(self):
        object.__setattr__(self, "trans_amp", np.asarray(self.trans_amp, float).reshape(3))
        object.__setattr__(self, "root_rot_amp", np.asarray(self.root_rot_amp, float).reshape(3))
        object.__setattr__(self, "hip_amp", np.asarray(self.hip_amp, float).reshape(3))
        amps = np.concatenate([self.trans_amp, self.root_rot_amp, self.hip_amp, [self.knee_amp]])
        if (amps < 0).any():
            raise ValueError("amplitudes must be non-negative")
        if self.duration <= 0 or self.sample_rate <= 0 or self.base_freq <= 0:
            raise ValueError("duration, sample_rate, base_freq must be positive")

    def posture(self) -> np.ndarray:
        """Static squat offsets for the 10 channels (hip flexion = knee/2)."""
        out = np.zeros(10)
        out[6] = 0.5 * self.squat_knee  # hip flexion
        out[9] = self.squat_knee  # knee flexion
        return out

    def amplitudes(self) -> np.ndarray:
        return np.concatenate([self.trans_amp, self.root_rot_amp, self.hip_amp, [self.knee_amp]])


def generate_sway(params: SwayParams, seed: int, min_duration: float | None = None) -> GeneralizedCoords:
    """Deterministic multi-sinusoid sway superposed on a squat posture."""
    if min_duration is not None and params.duration < min_duration:
        raise ValueError(
            f"sway duration {params.duration} s shorter than required {min_duration} s"
        )
    rng = np.random.default_rng(seed)
    n = int(round(params.duration * params.sample_rate)) + 1
    t = np.arange(n) / params.sample_rate
    amps = params.amplitudes()
    posture = params.posture()
    channels = np.empty((n, 10))
    for c in range(10):
        # Draw unconditionally so the waveform depends on the seed only.
        k = rng.integers(2, 5)
        weights = rng.uniform(0.5, 1.0, size=int(k))
        phases = rng.uniform(0.0, 2.0 * np.pi, size=int(k))
        wave = np.zeros(n)
        for h in range(int(k)):
            wave += weights[h] * np.sin(2.0 * np.pi * params.base_freq * (h + 1) * t + phases[h])
        if amps[c] > 0:
            lo, hi = wave.min(), wave.max()
            wave = (wave - 0.5 * (lo + hi)) * (2.0 * amps[c] / (hi - lo))
        else:
            wave = np.zeros(n)
        channels[:, c] = posture[c] + wave
    return GeneralizedCoords.from_channels(channels, params.sample_rate)


def _moving_average(x: np.ndarray, span: int) -> np.ndarray:
    """Centered moving average with a symmetrically shrinking boundary window.

    Interior samples average exactly ``span`` values (window
    [i - span//2, i + span - 1 - span//2]); near the edges the window
    shrinks to the symmetric [i - r, i + r] with r = min(i, n - 1 - i).
    """
    n = len(x)
    if span == 1:
        return np.array(x, dtype=float)
    hl = span // 2
    hr = span - 1 - hl
    csum = np.concatenate([[0.0], np.cumsum(x, dtype=float)])
    out = np.empty(n)
    for i in range(n):
        if i >= hl and n - 1 - i >= hr:
            a, b = i - hl, i + hr
        else:
            r = min(i, n - 1 - i, max(hl, hr))
            a, b = i - r, i + r
        out[i] = (csum[b + 1] - csum[a]) / (b - a + 1)
    return out


def smooth(coords: GeneralizedCoords, span: int = 60) -> GeneralizedCoords:
    """Moving-average filter each generalized coordinate channel."""
    if span < 1:
        raise ValueError("span must be >= 1")
    if span > len(coords):
        raise ValueError(f"span {span} exceeds sample count {len(coords)}")
    ch = coords.channels()
    out = np.column_stack([_moving_average(ch[:, c], span) for c in range(10)])
    return GeneralizedCoords.from_channels(out, coords.sample_rate)


def forward_kinematics(
    coords: GeneralizedCoords,
    thigh_length: float = DEFAULT_THIGH_LENGTH,
    shank_length: float = DEFAULT_SHANK_LENGTH,
) -> SegmentTrajectory:
    """Segment poses and joint centers of the thigh-shank chain.

    The root frame sits at the hip joint center.  The thigh pose is the
    root pose composed with the hip rotation; the shank pose hangs off the
    knee (thigh frame offset (0, -thigh_length, 0)) rotated by knee flexion.
    """
    if thigh_length <= 0 or shank_length <= 0:
        raise ValueError("segment lengths must be positive")
    n = len(coords)
    thigh_r = np.empty((n, 3, 3))
    shank_r = np.empty((n, 3, 3))
    thigh_t = np.asarray(coords.root_pos, float).copy()
    shank_t = np.empty((n, 3))
    knee_offset = np.array([0.0, -thigh_length, 0.0])
    ankle_offset = np.array([0.0, -shank_length, 0.0])
    for i in range(n):
        r_root = euler_xyz(*coords.root_euler[i])
        flex, add, rot = coords.hip[i]
        r_hip = euler_xyz(flex, rot, add)
        r_thigh = r_root @ r_hip
        thigh_r[i] = r_thigh
        r_knee = rotation_from_axis_angle((1, 0, 0), coords.knee[i])
        shank_r[i] = r_thigh @ r_knee
        shank_t[i] = thigh_t[i] + r_thigh @ knee_offset
    hip_center = thigh_t.copy()
    knee_center = shank_t.copy()
    ankle_center = shank_t + np.einsum("nij,j->ni", shank_r, ankle_offset)
    return SegmentTrajectory(
        thigh_r, thigh_t, shank_r, shank_t,
        hip_center, knee_center, ankle_center, coords.sample_rate,
    )


def save_coords_csv(coords: GeneralizedCoords, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# units: m,rad\n")
        writer = csv.writer(fh)
        writer.writerow(("t",) + CSV_CHANNELS)
        ch = coords.channels()
        for i, t in enumerate(coords.times):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in ch[i]])


def load_coords_csv(path) -> GeneralizedCoords:
    """Parse the generalized-coordinate CSV interchange format.

    A ``# units: m,deg`` comment ahead of the header switches angle
    channels to degrees on input.  Malformed rows are reported with their
    row and column.
    """
    angles_in_degrees = False
    rows = []
    with open(path, newline="") as fh:
        header = None
        for lineno, raw in enumerate(csv.reader(fh), start=1):
            if not raw:
                continue
            if raw[0].lstrip().startswith("#"):
                text = ",".join(raw).lstrip("# ").strip()
                if text.lower().startswith("units:"):
                    angles_in_degrees = "deg" in text.lower()
                continue
            if header is None:
                header = [c.strip() for c in raw]
                expected = ["t"] + list(CSV_CHANNELS)
                missing = [c for c in expected if c not in header]
                if missing:
                    raise ValueError(f"missing channel column(s): {', '.join(missing)}")
                index = [header.index(c) for c in expected]
                continue
            if len(raw) != len(header):
                raise ValueError(
                    f"row {lineno}: expected {len(header)} cells, got {len(raw)}"
                )
            vals = []
            for name, col in zip(["t"] + list(CSV_CHANNELS), index):
                cell = raw[col].strip()
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"row {lineno}, column {name!r}: non-numeric cell {cell!r}"
                    ) from None
            rows.append(vals)
    if header is None:
        raise ValueError("file has no header row")
    if len(rows) < 2:
        raise ValueError("need at least 2 samples to infer the sample rate")
    data = np.asarray(rows)
    t = data[:, 0]
    dts = np.diff(t)
    if not np.allclose(dts, dts[0], rtol=1e-6, atol=1e-9):
        raise ValueError("time column is not uniformly sampled")
    ch = data[:, 1:]
    if angles_in_degrees:
        ch = ch.copy()
        ch[:, 3:] = np.deg2rad(ch[:, 3:])
    return GeneralizedCoords.from_channels(ch, 1.0 / dts[0])
