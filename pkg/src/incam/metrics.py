"""Depth-map quality (MS-SSIM) and authentication error rates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.ndimage import correlate1d

from incam.imgio import GrayImage


@dataclass(frozen=True)
class MsSsimParams:
    scales: int = 5
    weights: tuple[float, ...] = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
    window: int = 11
    sigma: float = 1.5
    c1: float = (0.01 * 255) ** 2
    c2: float = (0.03 * 255) ** 2

    def __post_init__(self):
        if len(self.weights) != self.scales:
            raise ValueError(f"{self.scales} scales need {self.scales} exponents")
        # the standard exponents sum to 1.0001
        if abs(sum(self.weights) - 1.0) > 1e-3:
            raise ValueError("scale exponents must sum to 1")


def _gaussian(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(a: np.ndarray, g: np.ndarray) -> np.ndarray:
    r = len(g) // 2
    out = correlate1d(correlate1d(a, g, axis=0, mode="constant"), g, axis=1, mode="constant")
    return out[r : a.shape[0] - r, r : a.shape[1] - r]


def _ssim_terms(a: np.ndarray, b: np.ndarray, p: MsSsimParams) -> tuple[float, float]:
    """Mean luminance term and mean contrast-structure term over the valid region."""
    g = _gaussian(p.window, p.sigma)
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a**2
    var_b = _filter_valid(b * b, g) - mu_b**2
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    lum = (2 * mu_a * mu_b + p.c1) / (mu_a**2 + mu_b**2 + p.c1)
    cs = (2 * cov + p.c2) / (var_a + var_b + p.c2)
    return float(lum.mean()), float(cs.mean())


def ssim(a: GrayImage, b: GrayImage, p: MsSsimParams = MsSsimParams()) -> float:
    """Single-scale SSIM with the same window and constants."""
    _check(a, b, 1, p.window)
    lum, cs = _ssim_terms(a.pixels.astype(np.float64), b.pixels.astype(np.float64), p)
    return lum * cs


def _check(a: GrayImage, b: GrayImage, scales: int, window: int):
    if a.pixels.shape != b.pixels.shape:
        raise ValueError(f"image sizes differ: {a.pixels.shape} vs {b.pixels.shape}")
    need = 2 ** (scales - 1) * window
    if min(a.pixels.shape) < need:
        raise ValueError(
            f"{a.width}x{a.height} is too small for {scales} scales (needs {need}px per side); use fewer scales"
        )


def _downsample(a: np.ndarray) -> np.ndarray:
    h, w = (a.shape[0] // 2) * 2, (a.shape[1] // 2) * 2
    a = a[:h, :w]
    return 0.25 * (a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2])


def ms_ssim(a: GrayImage, b: GrayImage, p: MsSsimParams = MsSsimParams()) -> float:
    """Multi-scale SSIM in [0, 1]; negative per-scale terms clamp to 0."""
    _check(a, b, p.scales, p.window)
    x, y = a.pixels.astype(np.float64), b.pixels.astype(np.float64)
    result = 1.0
    for j, w in enumerate(p.weights):
        lum, cs = _ssim_terms(x, y, p)
        term = lum * cs if j == p.scales - 1 else cs
        result *= max(term, 0.0) ** w
        if j < p.scales - 1:
            x, y = _downsample(x), _downsample(y)
    return float(min(max(result, 0.0), 1.0))


class ClassificationReport(NamedTuple):
    error_rate: float
    false_accept_rate: float
    false_reject_rate: float


def classification_report(predictions, labels) -> ClassificationReport:
    """Overall error, false-accept rate (over negatives) and false-reject rate (over positives)."""
    pred = np.asarray(predictions, dtype=bool)
    lab = np.asarray(labels, dtype=bool)
    if pred.shape != lab.shape:
        raise ValueError("predictions and labels differ in length")
    if pred.size == 0:
        raise ValueError("empty classification report")
    fa = np.count_nonzero(pred & ~lab)
    fr = np.count_nonzero(~pred & lab)
    neg = np.count_nonzero(~lab)
    pos = np.count_nonzero(lab)
    return ClassificationReport(
        (fa + fr) / pred.size,
        fa / neg if neg else 0.0,
        fr / pos if pos else 0.0,
    )
