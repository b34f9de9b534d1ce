"""Sway generation, coordinate CSV ingestion, smoothing, forward kinematics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import coords_from_channels, sinusoid_coords, static_coords
from imoco.motion import (
    DEFAULT_THIGH_LENGTH,
    GeneralizedCoords,
    SwayParams,
    forward_kinematics,
    generate_sway,
    load_coords_csv,
    save_coords_csv,
    smooth,
)


def test_zero_amplitude_sway_is_constant_posture():
    params = SwayParams(duration=2.0, squat_knee=np.deg2rad(30))
    coords = generate_sway(params, seed=3)
    ch = coords.channels()
    assert np.array_equal(ch, np.tile(ch[0], (len(coords), 1)))
    assert ch[0, 9] == pytest.approx(np.deg2rad(30))
    assert ch[0, 6] == pytest.approx(np.deg2rad(15))


def test_sway_peak_to_peak_matches_amplitude():
    params = SwayParams(trans_amp=(0.005, 0, 0), base_freq=0.3, duration=10.0)
    coords = generate_sway(params, seed=1)
    x = coords.root_pos[:, 0]
    assert (x.max() - x.min()) == pytest.approx(0.010, rel=0.01)


def test_sway_deterministic():
    params = SwayParams(trans_amp=(0.005, 0.002, 0.005), root_rot_amp=(0.03, 0.03, 0.03))
    a = generate_sway(params, seed=9)
    b = generate_sway(params, seed=9)
    assert np.array_equal(a.channels(), b.channels())
    c = generate_sway(params, seed=10)
    assert not np.array_equal(a.channels(), c.channels())


def test_sway_duration_shorter_than_scan_rejected():
    params = SwayParams(duration=2.0)
    with pytest.raises(ValueError):
        generate_sway(params, seed=0, min_duration=8.0)


def test_coords_csv_round_trip(tmp_path):
    coords = sinusoid_coords(40, trans_amp=(0.004, 0.001, 0.002), rot_amp=(0.02, 0.01, 0.03))
    path = tmp_path / "coords.csv"
    save_coords_csv(coords, path)
    loaded = load_coords_csv(path)
    assert loaded.sample_rate == pytest.approx(coords.sample_rate, rel=1e-9)
    assert np.allclose(loaded.channels(), coords.channels(), atol=1e-12)


def test_coords_csv_three_rows(tmp_path):
    path = tmp_path / "c.csv"
    save_coords_csv(static_coords(3), path)
    assert len(load_coords_csv(path)) == 3


def test_coords_csv_non_numeric_cell_named(tmp_path):
    path = tmp_path / "bad.csv"
    save_coords_csv(static_coords(3), path)
    lines = path.read_text().splitlines()
    cells = lines[2].split(",")
    cells[4] = "oops"
    lines[2] = ",".join(cells)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError, match="root_rx"):
        load_coords_csv(path)


def test_coords_csv_missing_channel(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,root_x\n0.0,0.0\n0.1,0.0\n")
    with pytest.raises(ValueError, match="missing channel"):
        load_coords_csv(path)


def test_coords_csv_degrees_conversion(tmp_path):
    coords = sinusoid_coords(5, rot_amp=(0.1, 0, 0))
    path = tmp_path / "deg.csv"
    save_coords_csv(coords, path)
    text = path.read_text().replace("# units: m,rad", "# units: m,deg")
    path.write_text(text)
    loaded = load_coords_csv(path)
    assert np.allclose(loaded.root_euler, np.deg2rad(coords.root_euler), atol=1e-12)


def test_coords_csv_nonuniform_time_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    save_coords_csv(static_coords(4), path)
    lines = path.read_text().splitlines()
    lines[-1] = "9.0" + lines[-1][lines[-1].index(","):]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError, match="uniform"):
        load_coords_csv(path)


def test_smooth_constant_unchanged():
    ch = np.full((100, 10), 0.7)
    coords = coords_from_channels(ch)
    assert np.allclose(smooth(coords, 60).channels(), ch, atol=1e-12)


def test_smooth_span_one_is_identity():
    coords = sinusoid_coords(50, trans_amp=(0.01, 0.02, 0.0))
    assert np.array_equal(smooth(coords, 1).channels(), coords.channels())


def test_smooth_impulse_plateau():
    ch = np.zeros((300, 10))
    ch[150, 0] = 1.0
    out = smooth(coords_from_channels(ch), 60).channels()[:, 0]
    hits = np.flatnonzero(out > 0)
    assert len(hits) == 60
    assert np.allclose(out[hits], 1.0 / 60.0, atol=1e-12)


def test_smooth_invalid_span():
    coords = static_coords(10)
    with pytest.raises(ValueError):
        smooth(coords, 0)
    with pytest.raises(ValueError):
        smooth(coords, 11)


@settings(max_examples=15, deadline=None)
@given(
    st.floats(-2.0, 2.0, allow_nan=False),
    st.floats(-2.0, 2.0, allow_nan=False),
    st.integers(0, 100),
)
def test_smooth_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(80, 10))
    y = rng.normal(size=(80, 10))
    mixed = smooth(coords_from_channels(a * x + b * y), 15).channels()
    parts = a * smooth(coords_from_channels(x), 15).channels() + b * smooth(
        coords_from_channels(y), 15
    ).channels()
    assert np.allclose(mixed, parts, atol=1e-10)


def test_fk_reference_posture():
    traj = forward_kinematics(static_coords(4))
    assert np.allclose(traj.thigh_r[0], np.eye(3))
    assert np.allclose(traj.knee_center[0], (0, -DEFAULT_THIGH_LENGTH, 0), atol=1e-12)
    assert np.allclose(traj.ankle_center[0], (0, -0.85, 0), atol=1e-12)


def test_fk_pure_translation_transports_joint_centers():
    n = 10
    ch = np.zeros((n, 10))
    ch[:, 0] = 0.001 * np.arange(n)
    traj = forward_kinematics(coords_from_channels(ch))
    for centers in (traj.hip_center, traj.knee_center, traj.ankle_center):
        shift = centers - centers[0]
        expected = np.column_stack([0.001 * np.arange(n), np.zeros(n), np.zeros(n)])
        assert np.allclose(shift, expected, atol=1e-12)


def test_fk_right_angle_knee():
    ch = np.zeros((4, 10))
    ch[:, 9] = np.pi / 2
    traj = forward_kinematics(coords_from_channels(ch))
    # shank rotated 90 degrees about +x at the knee: -y swings to -z
    expected = np.array([0.0, -DEFAULT_THIGH_LENGTH, -0.43])
    assert np.allclose(traj.ankle_center[0], expected, atol=1e-9)


def test_fk_chain_consistency():
    coords = sinusoid_coords(60, trans_amp=(0.005, 0.002, 0.005), rot_amp=(0.02, 0.04, 0.01), knee_amp=0.3)
    traj = forward_kinematics(coords)
    # knee center from the thigh chain equals the shank origin
    knee_from_thigh = traj.thigh_t + np.einsum(
        "nij,j->ni", traj.thigh_r, (0, -DEFAULT_THIGH_LENGTH, 0)
    )
    assert np.abs(knee_from_thigh - traj.shank_t).max() < 1e-9


def test_fk_rigid_special_case():
    # constant joint angles: the shank-to-thigh relative pose is constant
    n = 30
    ch = np.zeros((n, 10))
    t = np.arange(n) / 120.0
    ch[:, 0] = 0.004 * np.sin(2 * np.pi * t)
    ch[:, 4] = 0.05 * np.sin(2 * np.pi * t)
    ch[:, 6] = 0.2
    ch[:, 9] = 0.5
    traj = forward_kinematics(coords_from_channels(ch))
    rel0_r = traj.shank_r[0].T @ traj.thigh_r[0]
    rel0_t = traj.shank_r[0].T @ (traj.thigh_t[0] - traj.shank_t[0])
    for i in range(n):
        rel_r = traj.shank_r[i].T @ traj.thigh_r[i]
        rel_t = traj.shank_r[i].T @ (traj.thigh_t[i] - traj.shank_t[i])
        assert np.abs(rel_r - rel0_r).max() < 1e-9
        assert np.abs(rel_t - rel0_t).max() < 1e-9


def test_fk_rejects_nonpositive_lengths():
    with pytest.raises(ValueError):
        forward_kinematics(static_coords(4), thigh_length=0.0)


def test_coords_validation():
    with pytest.raises(ValueError):
        GeneralizedCoords(np.zeros((3, 3)), np.zeros((3, 3)), np.zeros((3, 3)), np.zeros(3), 0.0)
    with pytest.raises(ValueError):
        GeneralizedCoords(np.zeros((2, 3)), np.zeros((3, 3)), np.zeros((3, 3)), np.zeros(3), 120.0)
