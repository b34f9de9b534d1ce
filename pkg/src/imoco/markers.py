"""Marker-based motion estimation baseline.

For each view, a single 6-DOF rigid pose is fitted to the tracked fiducial
detections by Gauss-Newton minimization of squared reprojection error,
warm-started from the previous view.  View 0 defines the reference frame,
so its motion matrix is the identity by construction.  All markers are
treated as one rigid body, mirroring the rigid-motion assumption of the
IMU pipeline so both tracks feed the reconstructor identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .se3 import RigidPose, rotation_from_rotvec, skew

__all__ = ["PoseEstimate", "estimate_motion"]

MAX_ITERATIONS = 50
STEP_TOLERANCE = 1e-10
MAX_HALVINGS = 10


@dataclass(frozen=True)
class PoseEstimate:
    """Per-view rigid motion with fit diagnostics.

    m_r/m_t: stacked motion matrices (mm); residual_rms: pixels per view;
    iterations: accepted Gauss-Newton iterations per view; converged: per
    view flag.
    """

    m_r: np.ndarray
    m_t: np.ndarray
    residual_rms: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray

    def __len__(self) -> int:
        return len(self.m_r)

    def motion(self, i: int) -> RigidPose:
        return RigidPose(self.m_r[i], self.m_t[i])


def _check_reference(points: np.ndarray) -> None:
    if len(points) < 6:
        raise ValueError(f"need at least 6 markers, got {len(points)}")
    centered = points - points.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    # thickness of the marker cloud along its flattest axis
    if sv[-1] / np.sqrt(len(points)) < 1.0:
        raise ValueError("marker set is coplanar within 1 mm; pose estimation is ill-conditioned")


def _residual_and_jacobian(p: np.ndarray, pose: RigidPose, ref: np.ndarray, obs: np.ndarray):
    # The 6-parameter update rotates about the centroid of the moved markers
    # rather than the world origin, so the rotation and translation columns of
    # the Jacobian share a scale and the normal matrix stays well conditioned
    # even when the marker cloud sits far from the origin.
    moved = pose.apply(ref)
    centroid = moved.mean(axis=0)
    h = moved @ p[:, :3].T + p[:, 3]
    w = h[:, 2]
    uv = h[:, :2] / w[:, None]
    res = (uv - obs).ravel()
    n = len(ref)
    jac = np.empty((2 * n, 6))
    for j in range(n):
        # d(uv)/dy for world point y, then y = (I + [dtheta]x)(y - c) + c + dt
        duv_dy = (p[:2, :3] - uv[j][:, None] * p[2, :3]) / w[j]
        dy = np.hstack([-skew(moved[j] - centroid), np.eye(3)])
        jac[2 * j:2 * j + 2] = duv_dy @ dy
    return res, jac, centroid


def _apply_step(step: np.ndarray, centroid: np.ndarray, pose: RigidPose) -> RigidPose:
    r = rotation_from_rotvec(step[:3])
    return RigidPose(r, step[3:] + centroid - r @ centroid) @ pose


def _fit_view(p: np.ndarray, ref: np.ndarray, obs: np.ndarray, init: RigidPose):
    pose = init
    res, jac, centroid = _residual_and_jacobian(p, pose, ref, obs)
    cost = res @ res
    iters = 0
    converged = False
    for _ in range(MAX_ITERATIONS):
        step = np.linalg.solve(jac.T @ jac, -(jac.T @ res))
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            trial = _apply_step(step, centroid, pose)
            t_res, t_jac, t_centroid = _residual_and_jacobian(p, trial, ref, obs)
            t_cost = t_res @ t_res
            if t_cost <= cost:
                pose, res, jac, cost, centroid = trial, t_res, t_jac, t_cost, t_centroid
                accepted = True
                break
            step = 0.5 * step
        if not accepted:
            break
        iters += 1
        if np.linalg.norm(step) < STEP_TOLERANCE:
            converged = True
            break
    rms = float(np.sqrt(cost / len(res)))
    return pose, rms, iters, converged


def estimate_motion(
    detections: np.ndarray,
    reference_markers: np.ndarray,
    mats: np.ndarray,
) -> PoseEstimate:
    """Fit one rigid motion matrix per view to the marker detections.

    detections: (n_views, k, 2) pixel coordinates; reference_markers:
    (k, 3) world positions (mm) at view 0; mats: (n_views, 3, 4) projection
    matrices of the uncorrected geometry.
    """
    detections = np.asarray(detections, float)
    ref = np.asarray(reference_markers, float)
    _check_reference(ref)
    n_views = len(detections)
    if len(mats) != n_views:
        raise ValueError("one projection matrix per view required")
    m_r = np.empty((n_views, 3, 3))
    m_t = np.empty((n_views, 3))
    rms = np.zeros(n_views)
    iters = np.zeros(n_views, dtype=int)
    converged = np.ones(n_views, dtype=bool)
    pose = RigidPose.identity()
    m_r[0], m_t[0] = pose.r, pose.t
    res0, _, _ = _residual_and_jacobian(mats[0], pose, ref, detections[0])
    rms[0] = float(np.sqrt(res0 @ res0 / len(res0)))
    for k in range(1, n_views):
        pose, rms[k], iters[k], converged[k] = _fit_view(mats[k], ref, detections[k], pose)
        m_r[k], m_t[k] = pose.r, pose.t
    return PoseEstimate(m_r, m_t, rms, iters, converged)


def normal_matrix_condition(p: np.ndarray, pose: RigidPose, ref: np.ndarray) -> float:
    """Condition number of the Gauss-Newton normal matrix for one view."""
    obs = np.zeros((len(ref), 2))
    _, jac, _ = _residual_and_jacobian(p, pose, ref, obs)
    return float(np.linalg.cond(jac.T @ jac))
