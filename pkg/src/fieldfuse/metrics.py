"""Image and depth quality metrics.

Images are float arrays in [0, 1]. PSNR uses MAX = 1 and reports a 99.0 dB
sentinel for exact matches so reports stay finite and sortable. SSIM is the
windowed formulation with an 11-tap gaussian (sigma 1.5) evaluated on the
valid interior, averaged over channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionMismatch, EmptyMask

PSNR_SENTINEL = 99.0


@dataclass(frozen=True)
class ImageMetrics:
    psnr: float
    ssim: float

    def to_json_dict(self) -> dict:
        return {"psnr": float(self.psnr), "ssim": float(self.ssim), "lpips": None}


@dataclass(frozen=True)
class DepthMetrics:
    abs_rel: float
    sq_rel: float
    rmse: float
    delta1: float
    delta2: float
    delta3: float

    def to_json_dict(self) -> dict:
        return {
            "abs_rel": float(self.abs_rel),
            "sq_rel": float(self.sq_rel),
            "rmse": float(self.rmse),
            "delta_1.25": float(self.delta1),
            "delta_1.25^2": float(self.delta2),
            "delta_1.25^3": float(self.delta3),
        }


def psnr(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_SENTINEL
    return float(10.0 * np.log10(1.0 / mse))


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable valid-region filtering with a 1-d kernel along both axes."""
    out = sliding_window_view(img, kernel.size, axis=0) @ kernel
    return sliding_window_view(out, kernel.size, axis=1) @ kernel


def ssim(a, b, window: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.shape[0] < window or a.shape[1] < window:
        raise DimensionMismatch("image smaller than the SSIM window")
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]

    kern = _gaussian_kernel(window, sigma)
    c1 = k1 * k1
    c2 = k2 * k2
    scores = []
    for ch in range(a.shape[2]):
        x = a[..., ch]
        y = b[..., ch]
        mu_x = _filter_valid(x, kern)
        mu_y = _filter_valid(y, kern)
        var_x = _filter_valid(x * x, kern) - mu_x * mu_x
        var_y = _filter_valid(y * y, kern) - mu_y * mu_y
        cov = _filter_valid(x * y, kern) - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))


def image_metrics(a, b) -> ImageMetrics:
    return ImageMetrics(psnr=psnr(a, b), ssim=ssim(a, b))


def depth_metrics(pred, gt, mask=None, median_scale: bool = False) -> DepthMetrics:
    """Standard depth error suite over masked pixels.

    Ground-truth depths under the mask must be positive. With
    ``median_scale`` the prediction is rescaled by median(gt)/median(pred)
    first, the usual protocol for scale-ambiguous predictions.
    """
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"depth shapes differ: {pred.shape} vs {gt.shape}")
    if mask is None:
        mask = np.isfinite(pred) & np.isfinite(gt) & (gt > 0)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != gt.shape:
            raise DimensionMismatch("mask shape differs from depth shape")
    if not np.any(mask):
        raise EmptyMask("depth metric mask selects no pixels")

    p = pred[mask]
    g = gt[mask]
    if np.any(g <= 0) or np.any(~np.isfinite(p)):
        raise ValueError("masked depths must be finite and positive")
    if median_scale:
        med = np.median(p)
        if med <= 0:
            raise ValueError("median of prediction must be positive to scale")
        p = p * (np.median(g) / med)

    diff = p - g
    ratio = np.maximum(p / g, g / p)
    return DepthMetrics(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff * diff / g)),
        rmse=float(np.sqrt(np.mean(diff * diff))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25 ** 2)),
        delta3=float(np.mean(ratio < 1.25 ** 3)),
    )
