"""Perturbation norms and structural similarity."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .nn.layers import ShapeMismatch

SSIM_WINDOW = 8
DYNAMIC_RANGE = 1.0


class WindowLargerThanImage(ValueError):
    pass


@dataclass(frozen=True)
class SimilarityReport:
    l1: float
    l2: float
    linf: float
    ssim: float
    ssim_global: float

    def as_dict(self) -> dict:
        return asdict(self)


def norms(eta):
    """``(l1, l2, linf)`` over the flattened tensor."""
    v = np.abs(np.asarray(eta, dtype=float)).ravel()
    if v.size == 0:
        return 0.0, 0.0, 0.0
    top = v.max()
    if top == 0.0:
        return 0.0, 0.0, 0.0
    scaled = v / top  # avoids underflow/overflow in the sum of squares
    return float(v.sum()), float(top * np.sqrt(np.sum(scaled * scaled))), float(top)


def norm(eta, kind: str) -> float:
    l1, l2, linf = norms(eta)
    return {"l1": l1, "l2": l2, "linf": linf}[kind]


def _as_hwc(image):
    x = np.asarray(image, dtype=float)
    if x.ndim == 2:
        x = x[..., None]
    if x.ndim != 3:
        raise ShapeMismatch(f"expected an (h, w, c) image, got shape {x.shape}")
    return x


def _ssim_from_moments(mu_a, mu_b, var_a, var_b, cov, L):
    c1 = (0.01 * L) ** 2
    c2 = (0.03 * L) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, window: int = SSIM_WINDOW, dynamic_range: float = DYNAMIC_RANGE) -> float:
    """Mean SSIM over all ``window``-square uniform windows (stride 1).

    Moments use population (1/N) statistics. Channels are scored
    separately and averaged; the result is clamped to [0, 1].
    """
    a, b = _as_hwc(a), _as_hwc(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    h, w, _ = a.shape
    if window > h or window > w:
        raise WindowLargerThanImage(f"{window}x{window} window on a {h}x{w} image")
    wa = sliding_window_view(a, (window, window), axis=(0, 1))
    wb = sliding_window_view(b, (window, window), axis=(0, 1))
    mu_a = wa.mean(axis=(-2, -1))
    mu_b = wb.mean(axis=(-2, -1))
    var_a = (wa * wa).mean(axis=(-2, -1)) - mu_a * mu_a
    var_b = (wb * wb).mean(axis=(-2, -1)) - mu_b * mu_b
    cov = (wa * wb).mean(axis=(-2, -1)) - mu_a * mu_b
    s = _ssim_from_moments(mu_a, mu_b, var_a, var_b, cov, dynamic_range)
    per_channel = s.reshape(-1, s.shape[-1]).mean(axis=0)
    return float(np.clip(per_channel.mean(), 0.0, 1.0))


def ssim_global(a, b, dynamic_range: float = DYNAMIC_RANGE) -> float:
    """Single-window SSIM from whole-image mean, variance and covariance."""
    a, b = _as_hwc(a), _as_hwc(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    vals = []
    for ch in range(a.shape[2]):
        x, y = a[..., ch].ravel(), b[..., ch].ravel()
        mx, my = x.mean(), y.mean()
        vx = (x * x).mean() - mx * mx
        vy = (y * y).mean() - my * my
        cxy = (x * y).mean() - mx * my
        vals.append(_ssim_from_moments(mx, my, vx, vy, cxy, dynamic_range))
    return float(np.clip(np.mean(vals), 0.0, 1.0))


def similarity_report(original, perturbed) -> SimilarityReport:
    """Norms of the difference plus windowed and global SSIM.

    Images smaller than the default window are scored with the largest
    square window that fits.
    """
    original, perturbed = _as_hwc(original), _as_hwc(perturbed)
    l1, l2, linf = norms(perturbed - original)
    window = min(SSIM_WINDOW, original.shape[0], original.shape[1])
    return SimilarityReport(l1, l2, linf, ssim(original, perturbed, window=window),
                            ssim_global(original, perturbed))
