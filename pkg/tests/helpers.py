"""Shared builders for the test suite."""

import numpy as np

from imoco.motion import GeneralizedCoords, forward_kinematics


def coords_from_channels(channels: np.ndarray, rate: float = 120.0) -> GeneralizedCoords:
    return GeneralizedCoords.from_channels(np.asarray(channels, float), rate)


def static_coords(n: int = 16, rate: float = 120.0) -> GeneralizedCoords:
    return coords_from_channels(np.zeros((n, 10)), rate)


def static_trajectory(n: int = 16, rate: float = 120.0):
    return forward_kinematics(static_coords(n, rate))


def sinusoid_coords(
    n: int,
    rate: float = 120.0,
    trans_amp=(0.0, 0.0, 0.0),
    rot_amp=(0.0, 0.0, 0.0),
    knee_amp: float = 0.0,
    freq: float = 0.5,
) -> GeneralizedCoords:
    """Single-frequency sinusoids on root translation/rotation and knee."""
    t = np.arange(n) / rate
    wave = np.sin(2.0 * np.pi * freq * t)
    ch = np.zeros((n, 10))
    for k in range(3):
        ch[:, k] = trans_amp[k] * wave
        ch[:, 3 + k] = rot_amp[k] * wave
    ch[:, 9] = knee_amp * wave
    return coords_from_channels(ch, rate)


def scan_static_trajectory(geom, rate: float = 120.0):
    """Static trajectory long enough to cover a scan of ``geom``."""
    n = int(np.ceil(geom.duration * rate)) + 2
    return static_trajectory(n, rate)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    from imoco.se3 import rotation_from_rotvec

    v = rng.normal(size=3)
    return rotation_from_rotvec(v / max(np.linalg.norm(v), 1e-12) * rng.uniform(0, 3.0))


def attenuation_at(posed, pts: np.ndarray) -> np.ndarray:
    """Pointwise attenuation of a posed phantom, summing nested deltas."""
    pts = np.atleast_2d(np.asarray(pts, float))
    mu = np.zeros(len(pts))
    for j in range(len(posed)):
        local = (pts - posed.center[j]) @ posed.inv_map[j].T
        mu += posed.delta_mu[j] * (np.einsum("ni,ni->n", local, local) <= 1.0)
    return mu


def quadrature_line_integral(posed, origin, direction, t_hi: float, n_coarse: int = 8192) -> float:
    """Line integral by dense sampling with bisection of attenuation jumps.

    The integrand is piecewise constant, so a blind Riemann sum stalls at
    O(step) accuracy across the jumps; instead every coarse interval whose
    endpoint values differ is bisected down to 1e-9 mm and the integral is
    assembled from exactly constant segments.  Independent of the analytic
    chord computation: only pointwise attenuation is evaluated.
    """
    origin = np.asarray(origin, float)
    direction = np.asarray(direction, float)

    def mu(t):
        return attenuation_at(posed, origin + t * direction)[0]

    ts = np.linspace(0.0, t_hi, n_coarse + 1)
    mus = attenuation_at(posed, origin[None, :] + ts[:, None] * direction)
    total = 0.0
    stack = [(ts[i], ts[i + 1], mus[i], mus[i + 1]) for i in range(n_coarse)]
    while stack:
        t0, t1, m0, m1 = stack.pop()
        if m0 == m1:
            total += m0 * (t1 - t0)
            continue
        if t1 - t0 < 1e-9:
            total += 0.5 * (m0 + m1) * (t1 - t0)
            continue
        tm = 0.5 * (t0 + t1)
        mm = mu(tm)
        stack.append((t0, tm, m0, mm))
        stack.append((tm, t1, mm, m1))
    return total
