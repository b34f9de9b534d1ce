"""End-to-end acceptance suite.

Eight binding checks: exact-track round trip, IMU fidelity with convergence,
noise-free strap-down tracking, end-to-end improvement for non-rigid sway
over five seeds, marker-baseline parity, the residual-artifact property of
rigid compensation, component oracles, and byte-level run determinism.
"""

import filecmp
import time

import numpy as np
import pytest

from helpers import (
    quadrature_line_integral,
    scan_static_trajectory,
    static_trajectory,
)
from imoco.experiment import (
    ExperimentConfig,
    build_motion,
    ground_truth_track,
    initial_sensor_state,
    marker_track,
    proposed_track,
    run,
    scan_geometry,
)
from imoco.geometry import build_trajectory, project_points, tiny_geometry
from imoco.imusim import GRAVITY, SensorMount, sensor_world_poses, simulate_imu
from imoco.markers import estimate_motion
from imoco.metrics import background_mask, evaluate, normalize, rmse, ssim
from imoco.moco import run_strapdown
from imoco.motion import GeneralizedCoords, forward_kinematics
from imoco.phantom import default_leg_phantom, line_integral, pose_at
from imoco.projector import (
    ProjectionStack,
    default_marker_set,
    marker_world_positions,
    render_scan,
)
from imoco.recon import ramp_filter, ramp_kernel, reconstruct
from imoco.se3 import (
    RigidPose,
    axis_angle_from_rotation,
    euler_xyz,
    rotation_from_axis_angle,
    skew,
    unskew,
)

NONRIGID_SEEDS = (0, 1, 2, 3, 4)
NONRIGID_JOINT_AMP_DEG = 2.5


def reconstruct_arms(cfg: ExperimentConfig, arms=("uncorrected", "proposed", "marker")):
    """Render one sway scenario and reconstruct the requested arms.

    Returns normalized volumes keyed by arm (plus "static"), the shared
    foreground mask, and the scan geometry.
    """
    traj = build_motion(cfg, duration=8.0)
    geom = scan_geometry(cfg, traj)
    phantom = default_leg_phantom()
    stack_static = render_scan(phantom, traj, geom, motion=False)
    stack_moving = render_scan(phantom, traj, geom, motion=True)
    volumes = {"static": reconstruct(stack_static, geom, None, cfg.volume)}
    if "uncorrected" in arms:
        volumes["uncorrected"] = reconstruct(stack_moving, geom, None, cfg.volume)
    if "exact" in arms:
        track = ground_truth_track(traj, geom)
        volumes["exact"] = reconstruct(stack_moving, geom, track, cfg.volume)
    if "proposed" in arms:
        track, _ = proposed_track(cfg, traj, geom)
        volumes["proposed"] = reconstruct(stack_moving, geom, track, cfg.volume)
    if "marker" in arms:
        track, _ = marker_track(cfg, traj, geom)
        volumes["marker"] = reconstruct(stack_moving, geom, track, cfg.volume)
    normalized = {arm: normalize(vol) for arm, vol in volumes.items()}
    mask = background_mask(normalized["static"])
    return normalized, mask, geom


# ------------------------------------------------- criterion 1: exact track

@pytest.fixture(scope="module")
def exact_track_scores():
    """Rigid +-5 mm / +-2 deg sway, reconstructed with ground-truth matrices."""
    cfg = ExperimentConfig()  # 5 mm, 2 deg, no joint motion, desk scale, 128^3
    t0 = time.perf_counter()
    vols, mask, _ = reconstruct_arms(cfg, arms=("uncorrected", "exact"))
    elapsed = time.perf_counter() - t0
    return {
        "exact_rmse": rmse(vols["exact"], vols["static"], mask),
        "exact_ssim": ssim(vols["exact"], vols["static"], mask),
        "uncorrected_rmse": rmse(vols["uncorrected"], vols["static"], mask),
        "elapsed": elapsed,
    }


def test_criterion_1_exact_track_round_trip(exact_track_scores):
    s = exact_track_scores
    print(
        f"\nexact-track: rmse={s['exact_rmse']:.5f} ssim={s['exact_ssim']:.5f} "
        f"uncorrected rmse={s['uncorrected_rmse']:.5f} runtime={s['elapsed']:.0f}s"
    )
    assert s["exact_rmse"] <= 0.005
    assert s["exact_ssim"] >= 0.995
    assert s["elapsed"] <= 300.0


# ------------------------------------------------- criterion 2: IMU fidelity

def analytic_imu_errors(rate: float):
    """Max gyro/accel error of the simulator vs analytic derivatives.

    Trajectory: root rotation about world x of 2 deg amplitude plus a 10 mm
    x translation, both at 0.75 Hz, sensed by an identity mount at the thigh
    origin.  The closed forms are w = (theta'(t), 0, 0) and
    a = R(t)^T (r''(t) - g).
    """
    amp_rot = np.deg2rad(2.0)
    amp_trans = 0.010
    freq = 0.75
    n = int(8.0 * rate) + 1
    t = np.arange(n) / rate
    phase = 2.0 * np.pi * freq * t
    ch = np.zeros((n, 10))
    ch[:, 0] = amp_trans * np.sin(phase)
    ch[:, 3] = amp_rot * np.sin(phase)
    coords = GeneralizedCoords.from_channels(ch, rate)
    series = simulate_imu(
        forward_kinematics(coords), SensorMount(parent="thigh", p_sen=(0, 0, 0))
    )
    theta_dot = amp_rot * 2.0 * np.pi * freq * np.cos(phase)
    w_true = np.column_stack([theta_dot, np.zeros(n), np.zeros(n)])
    r_ddot = np.column_stack(
        [-amp_trans * (2.0 * np.pi * freq) ** 2 * np.sin(phase), np.zeros(n), np.zeros(n)]
    )
    a_true = np.empty((n, 3))
    for i in range(n):
        r = rotation_from_axis_angle((1, 0, 0), ch[i, 3])
        a_true[i] = r.T @ (r_ddot[i] - GRAVITY)
    return (
        np.abs(series.w - w_true).max(),
        np.abs(series.a - a_true).max(),
    )


def test_criterion_2_imu_matches_analytic_derivatives():
    gyro_err, accel_err = analytic_imu_errors(120.0)
    print(f"\nIMU @120 Hz: gyro err={gyro_err:.2e} rad/s, accel err={accel_err:.2e} m/s^2")
    assert gyro_err < 1e-4
    assert accel_err < 1e-3


def test_criterion_2_second_order_convergence():
    g120, a120 = analytic_imu_errors(120.0)
    g240, a240 = analytic_imu_errors(240.0)
    print(f"\nconvergence ratios: gyro {g120 / g240:.1f}, accel {a120 / a240:.1f}")
    assert g120 / g240 >= 3.5
    assert a120 / a240 >= 3.5


# --------------------------------------------- criterion 3: strap-down track

def test_criterion_3_noise_free_strapdown_tracking():
    cfg = ExperimentConfig()  # rigid sway, no IMU errors
    traj = build_motion(cfg, duration=8.0)
    mount = SensorMount()
    series = simulate_imu(traj, mount)
    s0, v0 = initial_sensor_state(traj, mount)
    track = run_strapdown(series, s0, v0)  # IMU-rate track
    r_true, t_true = sensor_world_poses(traj, mount)
    n = traj.nearest_index(8.0) + 1
    t_err = np.linalg.norm(track.s_t[:n] - t_true[:n], axis=1).max()
    r_err = max(
        np.linalg.norm(axis_angle_from_rotation(track.s_r[i].T @ r_true[i]))
        for i in range(n)
    )
    print(f"\nstrap-down over 8 s: {t_err * 1e3:.4f} mm, {np.rad2deg(r_err):.5f} deg")
    assert t_err < 1e-3  # meters
    assert r_err < np.deg2rad(0.1)


# ------------------------------- criteria 4-6: non-rigid sway over five seeds

@pytest.fixture(scope="module")
def nonrigid_reports():
    """Per-seed quality reports for two-segment (non-rigid) sway."""
    reports = []
    for seed in NONRIGID_SEEDS:
        cfg = ExperimentConfig(seed=seed, sway_joint_amp_deg=NONRIGID_JOINT_AMP_DEG)
        vols, mask, _ = reconstruct_arms(cfg)
        unc = evaluate(vols["uncorrected"], vols["static"], mask)
        reports.append(
            {
                "seed": seed,
                "uncorrected": unc,
                "proposed": evaluate(vols["proposed"], vols["static"], mask, unc),
                "marker": evaluate(vols["marker"], vols["static"], mask, unc),
            }
        )
    return reports


def test_criterion_4_nonrigid_improvement_across_seeds(nonrigid_reports):
    rmse_imps = [r["proposed"].rmse_improvement_pct for r in nonrigid_reports]
    ssim_imps = [r["proposed"].ssim_improvement_pct for r in nonrigid_reports]
    print(
        f"\nnon-rigid sway, {len(nonrigid_reports)} seeds: "
        f"RMSE improvement {np.mean(rmse_imps):.1f} +/- {np.std(rmse_imps):.1f} %, "
        f"SSIM improvement {np.mean(ssim_imps):.1f} +/- {np.std(ssim_imps):.1f} % "
        "(context, not asserted: with recorded subject sway the corresponding "
        "improvements were 67.6 +/- 7.1 and 70.4 +/- 5.5)"
    )
    for rep in nonrigid_reports:
        assert rep["uncorrected"].rmse >= 0.05, f"seed {rep['seed']}"
        assert rep["proposed"].rmse_improvement_pct >= 50.0, f"seed {rep['seed']}"
        assert rep["proposed"].ssim_improvement_pct >= 5.0, f"seed {rep['seed']}"


def test_criterion_5_marker_baseline_improves_both_metrics(nonrigid_reports):
    for rep in nonrigid_reports:
        assert rep["marker"].rmse < rep["uncorrected"].rmse, f"seed {rep['seed']}"
        assert rep["marker"].ssim > rep["uncorrected"].ssim, f"seed {rep['seed']}"
    wins = sum(rep["proposed"].rmse < rep["marker"].rmse for rep in nonrigid_reports)
    print(
        f"\nordering (reported, not asserted): proposed beats marker on RMSE in "
        f"{wins}/{len(nonrigid_reports)} seeds"
    )


def test_criterion_6_rigid_methods_cannot_fully_restore(nonrigid_reports, exact_track_scores):
    # a single rigid track per view cannot undo two-segment motion, so both
    # corrections stay strictly above the exact-track residual
    floor = exact_track_scores["exact_rmse"]
    for rep in nonrigid_reports:
        assert rep["proposed"].rmse > floor, f"seed {rep['seed']}"
        assert rep["marker"].rmse > floor, f"seed {rep['seed']}"


# --------------------------------------------- criterion 7: component oracles

def test_criterion_7_skew_unskew_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(20):
        w = rng.standard_normal(3)
        assert np.array_equal(unskew(skew(w)), w)


def test_criterion_7_ramp_impulse_matches_closed_form():
    pitch = 1.232
    n = 64
    data = np.zeros((1, 1, n))
    data[0, 0, n // 2] = 1.0
    out = ramp_filter(ProjectionStack(data, np.zeros(1)), pitch).data[0, 0]
    h = ramp_kernel(n, pitch)
    expected = np.array([h[(i - n // 2) + (n - 1)] for i in range(n)])
    assert np.abs(out - expected).max() < 1e-9


def test_criterion_7_line_integrals_match_quadrature():
    posed = pose_at(default_leg_phantom(), static_trajectory(2), 0)
    rng = np.random.default_rng(4)
    for _ in range(4):
        origin = np.array([rng.uniform(-900, -700), rng.uniform(-650, -250), rng.uniform(-150, 150)])
        target = rng.uniform(-80, 80, size=3) + np.array([0.0, -420.0, 0.0])
        d = target - origin
        d /= np.linalg.norm(d)
        exact = line_integral(posed, origin, d)
        approx = quadrature_line_integral(posed, origin, d, t_hi=1800.0)
        assert abs(exact - approx) < 1e-4


def test_criterion_7_ssim_identity():
    from imoco.recon import VoxelVolume

    data = np.random.default_rng(2).uniform(0, 1, size=(16, 16, 16))
    vol = VoxelVolume(data, 1.0, np.zeros(3))
    assert ssim(vol, vol, np.ones(vol.shape, bool)) == pytest.approx(1.0, abs=1e-12)


def test_criterion_7_marker_recovery_noise_free():
    geom = tiny_geometry(isocenter=(0.0, -420.0, 0.0))
    traj = scan_static_trajectory(geom)
    ref = marker_world_positions(default_marker_set(), traj, 0)
    mats = build_trajectory(geom)
    motions = [
        RigidPose(
            euler_xyz(*np.deg2rad((1.5, -1.0, 0.8)) * np.sin(2 * np.pi * k / geom.n_views)),
            np.array([4.0, -2.0, 3.0]) * np.sin(2 * np.pi * k / geom.n_views),
        )
        if k
        else RigidPose.identity()
        for k in range(geom.n_views)
    ]
    det = np.stack([project_points(p, m.apply(ref)) for p, m in zip(mats, motions)])
    est = estimate_motion(det, ref, mats)
    for k, true in enumerate(motions):
        assert np.linalg.norm(est.m_t[k] - true.t) < 0.05  # mm
        angle = np.linalg.norm(axis_angle_from_rotation(est.m_r[k].T @ true.r))
        assert angle < np.deg2rad(0.01)


# ------------------------------------------------- criterion 8: determinism

def test_criterion_8_identical_runs_have_identical_manifests(tmp_path):
    cfg = ExperimentConfig(
        seed=5, geometry="tiny", volume="32", sway_joint_amp_deg=1.0,
        imu_accel_sigma=0.01, imu_gyro_sigma=0.001, marker_sigma_px=0.5,
        workers=1,
    )
    a = run(cfg, str(tmp_path / "a"))
    b = run(cfg, str(tmp_path / "b"))
    assert filecmp.cmp(a.manifest_path, b.manifest_path, shallow=False)
    assert open(a.manifest_path).read() == open(b.manifest_path).read()
