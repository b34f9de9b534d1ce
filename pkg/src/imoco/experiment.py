"""Four-arm experiment orchestration.

One run executes: motion synthesis -> forward kinematics -> projection
stacks (static reference + motion corrupted) -> IMU simulation and
strap-down motion track -> marker detections and marker-based track ->
four reconstructions (static / uncorrected / proposed / marker-based) ->
quality metrics, and writes every artifact plus a checksummed manifest to
the output directory.
"""

from __future__ import annotations

import csv
import hashlib
import os
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import __version__
from .geometry import GEOMETRY_PRESETS, ScanGeometry, build_trajectory, track_to_mm
from .imusim import ImuErrorModel, SensorMount, corrupt, save_imu_csv, sensor_world_poses, simulate_imu
from .markers import estimate_motion
from .metrics import QualityReport, background_mask, evaluate, normalize
from .moco import run_strapdown, save_track_csv
from .motion import (
    SegmentTrajectory,
    SwayParams,
    forward_kinematics,
    generate_sway,
    load_coords_csv,
    smooth,
)
from .phantom import default_leg_phantom
from .projector import default_marker_set, project_markers, render_scan, save_stack
from .recon import VOLUME_PRESETS, export_slices, reconstruct, save_volume
from .se3 import RigidPose

__all__ = ["ExperimentConfig", "RunResult", "StageError", "run", "compare", "ground_truth_track"]

ARMS = ("uncorrected", "proposed", "marker")
RESULT_COLUMNS = ("arm", "ssim", "rmse", "ssim_improvement_pct", "rmse_improvement_pct")


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name for reporting."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment configuration (defaults give the desk-scale study)."""

    seed: int = 0
    motion_csv: str = ""  # non-empty switches the motion source to this file
    squat_deg: float = 30.0
    sway_trans_amp_mm: float = 5.0
    sway_rot_amp_deg: float = 2.0
    sway_joint_amp_deg: float = 0.0
    sway_freq_hz: float = 0.25
    smooth_span: int = 60
    geometry: str = "desk"
    volume: str = "128"
    imu_accel_sigma: float = 0.0
    imu_gyro_sigma: float = 0.0
    imu_accel_bias: float = 0.0
    imu_gyro_bias: float = 0.0
    marker_sigma_px: float = 0.0
    workers: int = 0  # 0 = library default thread count

    def validate(self) -> None:
        if self.geometry not in GEOMETRY_PRESETS:
            raise ValueError(f"unknown geometry preset {self.geometry!r}")
        if self.volume not in VOLUME_PRESETS:
            raise ValueError(f"unknown volume preset {self.volume!r}")
        if self.smooth_span < 1:
            raise ValueError("smooth_span must be >= 1")

    def as_text(self) -> str:
        lines = [f"{f.name}={getattr(self, f.name)!r}" for f in fields(self)]
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.as_text().encode()).hexdigest()

    @staticmethod
    def from_file(path: str, overrides: dict | None = None) -> "ExperimentConfig":
        values: dict = {}
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                key, sep, val = line.partition("=")
                if not sep:
                    raise ValueError(f"line {lineno}: expected key=value")
                values[key.strip()] = val.strip()
        if overrides:
            values.update(overrides)
        return ExperimentConfig.from_mapping(values)

    @staticmethod
    def from_mapping(values: dict) -> "ExperimentConfig":
        kwargs = {}
        by_name = {f.name: f for f in fields(ExperimentConfig)}
        for key, val in values.items():
            if key not in by_name:
                raise ValueError(f"unknown config key {key!r}")
            typ = by_name[key].type
            if isinstance(val, str):
                val = val.strip().strip("'\"")
                if typ in ("int", int):
                    val = int(val)
                elif typ in ("float", float):
                    val = float(val)
            kwargs[key] = val
        cfg = ExperimentConfig(**kwargs)
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class RunResult:
    out_dir: str
    reports: dict
    manifest_path: str


def sway_params_from_config(cfg: ExperimentConfig, duration: float) -> SwayParams:
    t = cfg.sway_trans_amp_mm * 1e-3
    r = np.deg2rad(cfg.sway_rot_amp_deg)
    j = np.deg2rad(cfg.sway_joint_amp_deg)
    return SwayParams(
        trans_amp=(t, 0.25 * t, t),
        root_rot_amp=(r, r, r),
        hip_amp=(j, 0.5 * j, 0.5 * j),
        knee_amp=j,
        base_freq=cfg.sway_freq_hz,
        duration=duration + 0.1,
        squat_knee=np.deg2rad(cfg.squat_deg),
    )


def build_motion(cfg: ExperimentConfig, duration: float) -> SegmentTrajectory:
    if cfg.motion_csv:
        coords = load_coords_csv(cfg.motion_csv)
        if (len(coords) - 1) / coords.sample_rate < duration:
            raise ValueError("motion CSV shorter than the scan duration")
    else:
        coords = generate_sway(sway_params_from_config(cfg, duration), cfg.seed, min_duration=duration)
    coords = smooth(coords, cfg.smooth_span)
    return forward_kinematics(coords)


def scan_geometry(cfg: ExperimentConfig, traj: SegmentTrajectory) -> ScanGeometry:
    """Geometry preset with the isocenter on the knee center at scan start."""
    isocenter = traj.knee_center[0] * 1000.0
    return GEOMETRY_PRESETS[cfg.geometry](isocenter=isocenter)


def ground_truth_track(traj: SegmentTrajectory, geom: ScanGeometry, segment: str = "shank"):
    """Exact per-view motion matrices (mm) from the true segment poses."""
    seg_r, seg_t = traj.segment_poses(segment)
    idx0 = traj.nearest_index(0.0)
    p0_inv = RigidPose(seg_r[idx0], seg_t[idx0] * 1000.0).inverse()
    m_r = np.empty((geom.n_views, 3, 3))
    m_t = np.empty((geom.n_views, 3))
    for k, t in enumerate(geom.view_times):
        i = traj.nearest_index(t)
        m = RigidPose(seg_r[i], seg_t[i] * 1000.0) @ p0_inv
        m_r[k], m_t[k] = m.r, m.t
    return m_r, m_t


def initial_sensor_state(traj: SegmentTrajectory, mount: SensorMount):
    """Ground-truth initial pose and sensor-frame velocity (meters).

    The velocity is the mean over the first sample interval, which is the
    quantity the strap-down recursion seeds its first displacement with; an
    instantaneous derivative estimate is off by half a sample and drifts
    position by millimeters over a full scan.
    """
    r, p = sensor_world_poses(traj, mount)
    dt = 1.0 / traj.sample_rate
    v0_world = (p[1] - p[0]) / dt
    s0 = RigidPose(r[0], p[0])
    return s0, r[0].T @ v0_world


def proposed_track(cfg: ExperimentConfig, traj: SegmentTrajectory, geom: ScanGeometry):
    """IMU simulation plus strap-down integration, returning (track_mm, series)."""
    mount = SensorMount()
    series = simulate_imu(traj, mount)
    model = ImuErrorModel(
        accel_sigma=cfg.imu_accel_sigma,
        gyro_sigma=cfg.imu_gyro_sigma,
        accel_bias=np.full(3, cfg.imu_accel_bias),
        gyro_bias=np.full(3, cfg.imu_gyro_bias),
        seed=cfg.seed + 1,
    )
    measured = corrupt(series, model)
    s0, v0 = initial_sensor_state(traj, mount)
    track = run_strapdown(measured, s0, v0, n_views=geom.n_views, frame_rate=geom.frame_rate)
    return track_to_mm(track.m_r, track.m_t), measured


def marker_track(cfg: ExperimentConfig, traj: SegmentTrajectory, geom: ScanGeometry):
    markers = default_marker_set()
    detections = project_markers(markers, traj, geom, sigma=cfg.marker_sigma_px, seed=cfg.seed + 2)
    from .projector import marker_world_positions

    reference = marker_world_positions(markers, traj, traj.nearest_index(0.0))
    estimate = estimate_motion(detections, reference, build_trajectory(geom))
    return (estimate.m_r, estimate.m_t), estimate


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def run(cfg: ExperimentConfig, out_dir: str) -> RunResult:
    """Execute the four-arm experiment and write all artifacts."""
    cfg.validate()
    if cfg.workers > 0:
        import numba

        numba.set_num_threads(cfg.workers)
    os.makedirs(out_dir, exist_ok=True)
    os.makedirs(os.path.join(out_dir, "slices"), exist_ok=True)
    timings: list[tuple[str, float]] = []
    artifacts: list[str] = []

    def emit(relpath: str):
        artifacts.append(relpath)
        return os.path.join(out_dir, relpath)

    def stage(name):
        class _Timer:
            def __enter__(self_inner):
                self_inner.t0 = time.perf_counter()

            def __exit__(self_inner, exc_type, exc, tb):
                timings.append((name, time.perf_counter() - self_inner.t0))
                if exc is not None and not isinstance(exc, StageError):
                    raise StageError(name, exc) from exc

        return _Timer()

    with open(emit("config.txt"), "w") as fh:
        fh.write(cfg.as_text())

    try:
        with stage("motion"):
            traj = build_motion(cfg, duration=8.0)
            geom = scan_geometry(cfg, traj)
            phantom = default_leg_phantom()
        with stage("projection"):
            stack_static = render_scan(phantom, traj, geom, motion=False)
            stack_moving = render_scan(phantom, traj, geom, motion=True)
            save_stack(stack_static, geom, emit("stack_static"))
            artifacts.append("stack_static.meta")
            save_stack(stack_moving, geom, emit("stack_corrupted"))
            artifacts.append("stack_corrupted.meta")
        with stage("imu"):
            (prop_r, prop_t), series = proposed_track(cfg, traj, geom)
            save_imu_csv(series, emit("imu.csv"))
            save_track_csv(emit("track_proposed.csv"), prop_r, prop_t)
        with stage("markers"):
            (mark_r, mark_t), _ = marker_track(cfg, traj, geom)
            save_track_csv(emit("track_marker.csv"), mark_r, mark_t)
        with stage("reconstruction"):
            volumes = {
                "static": reconstruct(stack_static, geom, None, cfg.volume),
                "uncorrected": reconstruct(stack_moving, geom, None, cfg.volume),
                "proposed": reconstruct(stack_moving, geom, (prop_r, prop_t), cfg.volume),
                "marker": reconstruct(stack_moving, geom, (mark_r, mark_t), cfg.volume),
            }
            for arm, vol in volumes.items():
                save_volume(vol, emit(f"vol_{arm}"))
                artifacts.append(f"vol_{arm}.meta")
                for path in export_slices(vol, os.path.join(out_dir, "slices", arm)):
                    artifacts.append(os.path.relpath(path, out_dir))
        with stage("metrics"):
            normalized = {arm: normalize(vol) for arm, vol in volumes.items()}
            mask = background_mask(normalized["static"])
            unc = evaluate(normalized["uncorrected"], normalized["static"], mask)
            reports = {
                "uncorrected": evaluate(normalized["uncorrected"], normalized["static"], mask, unc),
                "proposed": evaluate(normalized["proposed"], normalized["static"], mask, unc),
                "marker": evaluate(normalized["marker"], normalized["static"], mask, unc),
            }
            with open(emit("results.csv"), "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(RESULT_COLUMNS)
                for arm in ARMS:
                    rep = reports[arm]
                    writer.writerow(
                        [arm, repr(rep.ssim), repr(rep.rmse),
                         repr(rep.ssim_improvement_pct), repr(rep.rmse_improvement_pct)]
                    )
    finally:
        # Timing log is deliberately outside the checksummed inventory so
        # identical configurations yield byte-identical manifests.
        with open(os.path.join(out_dir, "timings.txt"), "w") as fh:
            for name, dt in timings:
                fh.write(f"{name}={dt:.3f}\n")
        manifest_path = os.path.join(out_dir, "manifest.txt")
        with open(manifest_path, "w") as fh:
            fh.write(f"config_hash={cfg.config_hash()}\n")
            fh.write(f"version={__version__}\n")
            fh.write(f"workers={cfg.workers}\n")
            fh.write(f"stages={','.join(name for name, _ in timings)}\n")
            raw_extras = [a.rsplit(".meta", 1)[0] + ".raw" for a in artifacts if a.endswith(".meta")]
            for rel in sorted(set(artifacts) | set(raw_extras)):
                full = os.path.join(out_dir, rel)
                if os.path.exists(full):
                    fh.write(f"file={rel} sha256={_sha256(full)}\n")

    return RunResult(out_dir, reports, manifest_path)


def load_results(run_dir: str) -> dict:
    path = os.path.join(run_dir, "results.csv")
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(RESULT_COLUMNS):
            raise ValueError(f"{path}: unexpected results schema {reader.fieldnames}")
        for row in reader:
            out[row["arm"]] = {
                key: float(row[key]) for key in RESULT_COLUMNS[1:] if row[key] != "None"
            }
    return out


def compare(run_dirs) -> dict:
    """Aggregate results over runs: mean and std per arm and metric."""
    if not run_dirs:
        raise ValueError("need at least one run directory")
    all_results = [load_results(d) for d in run_dirs]
    table = {}
    for arm in ARMS:
        table[arm] = {}
        for metric in RESULT_COLUMNS[1:]:
            vals = [r[arm][metric] for r in all_results if metric in r[arm]]
            if vals:
                table[arm][metric] = (float(np.mean(vals)), float(np.std(vals)))
    return table


def format_compare(table: dict) -> str:
    lines = ["arm".ljust(14) + "".join(m.ljust(28) for m in RESULT_COLUMNS[1:])]
    for arm, metrics in table.items():
        cells = []
        for m in RESULT_COLUMNS[1:]:
            if m in metrics:
                mean, std = metrics[m]
                cells.append(f"{mean:.4f} +/- {std:.4f}".ljust(28))
            else:
                cells.append("-".ljust(28))
        lines.append(arm.ljust(14) + "".join(cells))
    return "\n".join(lines) + "\n"
