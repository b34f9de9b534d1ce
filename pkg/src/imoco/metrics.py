"""Image-quality metrics: robust normalization, masked RMSE and SSIM.

Volumes are rescaled to [0, 1] before comparison; the foreground mask is
derived once from the static reference and reused for every compared
volume so all arms are scored on the same voxels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .recon import VoxelVolume

__all__ = [
    "QualityReport",
    "normalize",
    "background_mask",
    "rmse",
    "ssim",
    "evaluate",
]

SSIM_SIGMA = 1.5
SSIM_TRUNCATE = 5.0 / SSIM_SIGMA  # 11^3 window
SSIM_C1 = (0.01) ** 2
SSIM_C2 = (0.03) ** 2


@dataclass(frozen=True)
class QualityReport:
    """Masked metrics of one volume against the static reference."""

    rmse: float
    ssim: float
    mask_voxels: int
    rmse_improvement_pct: float | None = None
    ssim_improvement_pct: float | None = None

    def as_text(self) -> str:
        lines = [
            f"rmse={self.rmse!r}",
            f"ssim={self.ssim!r}",
            f"mask_voxels={self.mask_voxels}",
        ]
        if self.rmse_improvement_pct is not None:
            lines.append(f"rmse_improvement_pct={self.rmse_improvement_pct!r}")
        if self.ssim_improvement_pct is not None:
            lines.append(f"ssim_improvement_pct={self.ssim_improvement_pct!r}")
        return "\n".join(lines) + "\n"


def normalize(vol: VoxelVolume) -> VoxelVolume:
    """Rescale to [0, 1] using the 0.1 / 99.9 percentiles, clamped.

    Percentile scaling instead of raw min-max keeps ramp-filter overshoot
    at bone edges from dictating the scale.
    """
    lo, hi = np.percentile(vol.data, (0.1, 99.9))
    if hi <= lo:
        raise ValueError("cannot normalize a constant volume")
    data = np.clip((vol.data - lo) / (hi - lo), 0.0, 1.0)
    return VoxelVolume(data, vol.spacing, vol.origin)


def background_mask(reference: VoxelVolume, threshold: float = 0.05) -> np.ndarray:
    """Foreground mask of a normalized reference: threshold plus one dilation."""
    mask = reference.data >= threshold
    mask = ndimage.binary_dilation(mask)
    if not mask.any():
        raise ValueError("mask is empty; threshold too high or reference blank")
    return mask


def rmse(a: VoxelVolume, b: VoxelVolume, mask: np.ndarray) -> float:
    if a.shape != b.shape or a.shape != mask.shape:
        raise ValueError("shape mismatch")
    diff = a.data[mask] - b.data[mask]
    return float(np.sqrt(np.mean(diff * diff)))


def _local_stats(x: np.ndarray) -> np.ndarray:
    return ndimage.gaussian_filter(x, SSIM_SIGMA, truncate=SSIM_TRUNCATE, mode="reflect")


def ssim(a: VoxelVolume, b: VoxelVolume, mask: np.ndarray) -> float:
    """Mean local SSIM over the masked voxels (Gaussian window, L = 1)."""
    if a.shape != b.shape or a.shape != mask.shape:
        raise ValueError("shape mismatch")
    x, y = a.data, b.data
    mu_x = _local_stats(x)
    mu_y = _local_stats(y)
    var_x = _local_stats(x * x) - mu_x * mu_x
    var_y = _local_stats(y * y) - mu_y * mu_y
    cov = _local_stats(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_x**2 + mu_y**2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return float(np.mean((num / den)[mask]))


def ssim_image(a: np.ndarray, b: np.ndarray) -> float:
    """Plain 2D SSIM of two normalized images (full-frame mean)."""
    va = VoxelVolume(a[:, :, None], 1.0, np.zeros(3))
    vb = VoxelVolume(b[:, :, None], 1.0, np.zeros(3))
    return ssim(va, vb, np.ones(va.shape, dtype=bool))


def evaluate(
    volume: VoxelVolume,
    reference: VoxelVolume,
    mask: np.ndarray,
    uncorrected: QualityReport | None = None,
) -> QualityReport:
    """Score a normalized volume; improvements are relative to uncorrected."""
    r = rmse(volume, reference, mask)
    s = ssim(volume, reference, mask)
    rmse_imp = ssim_imp = None
    if uncorrected is not None:
        # below 1e-6 on the 0-1 scale the volumes are indistinguishable and a
        # percentage of the near-zero baseline is numerical noise; report 0
        if uncorrected.rmse > 1e-6:
            rmse_imp = 100.0 * (uncorrected.rmse - r) / uncorrected.rmse
        else:
            rmse_imp = 0.0
        ssim_imp = 100.0 * (s - uncorrected.ssim) / uncorrected.ssim if uncorrected.ssim > 0 else 0.0
    return QualityReport(r, s, int(mask.sum()), rmse_imp, ssim_imp)
