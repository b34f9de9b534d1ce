"""Forward projection of the posed phantom and fiducial marker detections.

Each detector pixel gets one ray from the source through the pixel center;
the pixel value is the exact analytic line integral through the ellipsoid
phantom (monochromatic, noise free).  Marker "detections" are delivered as
pinhole-projected coordinates, not rasterized blobs.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import phantom as ph
from .geometry import ScanGeometry, build_trajectory, project_points, source_position
from .motion import SegmentTrajectory

__all__ = [
    "ProjectionStack",
    "MarkerSet",
    "default_marker_set",
    "render_view",
    "render_scan",
    "project_markers",
    "save_stack",
    "load_stack",
    "save_pgm",
]


@dataclass(frozen=True)
class ProjectionStack:
    """Line-integral images plus per-view timestamps.

    data: (n_views, n_rows, n_cols) float64, values >= 0.
    """

    data: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", np.asarray(self.data, float))
        object.__setattr__(self, "times", np.asarray(self.times, float))
        if self.data.ndim != 3:
            raise ValueError("stack must be (views, rows, cols)")
        if len(self.times) != len(self.data):
            raise ValueError("one timestamp per view required")

    @property
    def n_views(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class MarkerSet:
    """Fiducial points bound to leg segments (segment-frame millimeters)."""

    parents: tuple
    positions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "positions", np.asarray(self.positions, float).reshape(-1, 3))
        object.__setattr__(self, "parents", tuple(self.parents))
        if len(self.parents) != len(self.positions):
            raise ValueError("one parent per marker required")
        for p in self.parents:
            if p not in ("thigh", "shank"):
                raise ValueError(f"unknown parent segment {p!r}")

    def __len__(self) -> int:
        return len(self.positions)


def default_marker_set() -> MarkerSet:
    """Twelve skin markers around the knee, spread over both segments.

    Extent exceeds 80 mm on every axis, keeping per-view pose estimation
    well conditioned.
    """
    ring = [(80, 0), (0, 80), (-80, 0), (0, -80)]
    thigh_low = [("thigh", (x, -360.0, z)) for x, z in ring]
    shank_high = [("shank", (x, -55.0, z)) for x, z in [(70, 35), (-70, 35), (70, -35), (-70, -35)]]
    mixed = [
        ("thigh", (55.0, -300.0, 55.0)),
        ("thigh", (-55.0, -300.0, -55.0)),
        ("shank", (50.0, -120.0, 60.0)),
        ("shank", (-50.0, -120.0, -60.0)),
    ]
    entries = thigh_low + shank_high + mixed
    return MarkerSet(
        parents=tuple(e[0] for e in entries),
        positions=np.array([e[1] for e in entries], float),
    )


def marker_world_positions(markers: MarkerSet, traj: SegmentTrajectory, index: int) -> np.ndarray:
    """World-frame (mm) marker positions at one trajectory sample."""
    out = np.empty((len(markers), 3))
    for j, parent in enumerate(markers.parents):
        seg_r, seg_t = traj.segment_poses(parent)
        out[j] = seg_r[index] @ markers.positions[j] + seg_t[index] * 1000.0
    return out


def _pixel_rays(p: np.ndarray, geom: ScanGeometry):
    """Source position and unit ray directions for every pixel of a view."""
    src = source_position(p)
    uu, vv = np.meshgrid(np.arange(geom.n_cols, dtype=float), np.arange(geom.n_rows, dtype=float))
    pix = np.stack([uu.ravel(), vv.ravel(), np.ones(uu.size)])
    dirs = np.linalg.solve(p[:, :3], pix).T
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    return src, dirs


def render_view(posed: ph.PosedPhantom, p: np.ndarray, geom: ScanGeometry) -> np.ndarray:
    """Line-integral image of one view, shape (n_rows, n_cols)."""
    src, dirs = _pixel_rays(p, geom)
    vals = ph.line_integrals(posed, src, dirs)
    return vals.reshape(geom.n_rows, geom.n_cols)


def render_scan(
    primitives,
    traj: SegmentTrajectory,
    geom: ScanGeometry,
    motion: bool = True,
) -> ProjectionStack:
    """Render all views; with motion off every view uses the initial pose."""
    times = geom.view_times
    if times[-1] > traj.times[-1] + 1e-9:
        raise ValueError(
            f"trajectory covers {traj.times[-1]:.3f} s but the scan needs {times[-1]:.3f} s"
        )
    mats = build_trajectory(geom)
    data = np.empty((geom.n_views, geom.n_rows, geom.n_cols))
    static = ph.pose_at(primitives, traj, 0)
    for k in range(geom.n_views):
        posed = ph.pose_at(primitives, traj, traj.nearest_index(times[k])) if motion else static
        data[k] = render_view(posed, mats[k], geom)
    return ProjectionStack(data, times)


def project_markers(
    markers: MarkerSet,
    traj: SegmentTrajectory,
    geom: ScanGeometry,
    sigma: float = 0.0,
    seed: int = 0,
    motion: bool = True,
) -> np.ndarray:
    """Per-view 2D marker detections (n_views, n_markers, 2) in pixels."""
    mats = build_trajectory(geom)
    rng = np.random.default_rng(seed)
    out = np.empty((geom.n_views, len(markers), 2))
    for k, t in enumerate(geom.view_times):
        idx = traj.nearest_index(t) if motion else 0
        world = marker_world_positions(markers, traj, idx)
        out[k] = project_points(mats[k], world)
    if sigma > 0:
        out = out + sigma * rng.standard_normal(out.shape)
    return out


def save_stack(stack: ProjectionStack, geom: ScanGeometry, path_prefix) -> None:
    """Write little-endian float32 raw data plus a text sidecar."""
    raw = str(path_prefix) + ".raw"
    meta = str(path_prefix) + ".meta"
    stack.data.astype("<f4").tofile(raw)
    with open(meta, "w") as fh:
        fh.write(f"n_views={stack.n_views}\n")
        fh.write(f"n_rows={stack.data.shape[1]}\n")
        fh.write(f"n_cols={stack.data.shape[2]}\n")
        fh.write(f"pixel_pitch={float(geom.pixel_pitch)!r}\n")
        fh.write(f"geometry_hash={geom.geometry_hash()}\n")
        fh.write("dtype=<f4\n")
        fh.write("times=" + ",".join(repr(float(t)) for t in stack.times) + "\n")


def load_stack(path_prefix) -> ProjectionStack:
    meta = {}
    with open(str(path_prefix) + ".meta") as fh:
        for line in fh:
            key, _, val = line.partition("=")
            meta[key.strip()] = val.strip()
    shape = (int(meta["n_views"]), int(meta["n_rows"]), int(meta["n_cols"]))
    data = np.fromfile(str(path_prefix) + ".raw", dtype="<f4").reshape(shape)
    times = np.array([float(v) for v in meta["times"].split(",")])
    return ProjectionStack(data.astype(float), times)


def save_pgm(image: np.ndarray, path) -> None:
    """16-bit portable graymap of one image, scaled to its own range."""
    img = np.asarray(image, float)
    lo, hi = img.min(), img.max()
    scale = 65535.0 / (hi - lo) if hi > lo else 0.0
    pix = np.round((img - lo) * scale).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n65535\n".encode())
        fh.write(pix.tobytes())
