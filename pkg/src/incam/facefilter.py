"""Motion gating and Viola-Jones face detection.

Feature convention ("area-normalized-v1"): a feature's raw response is the
weighted sum of its (scaled) rectangle sums. It is divided by the scaled
window area and multiplied by the window's inverse standard deviation, then
compared against the feature threshold. Below threshold yields ``left``,
otherwise ``right``. A stage passes when its summed outputs reach the stage
threshold.

Scales follow ``window_k = floor(base * scale_factor**k)`` and stop once the
window no longer fits the image. Rectangles are scaled at their corners with
round-half-up by ``window / base`` so they always stay inside the window;
the first rectangle's weight is then rebalanced to keep zero-mean features
zero-mean.
"""

from __future__ import annotations

import json
import math
from functools import lru_cache
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from incam.imgio import GrayImage

CONVENTION = "area-normalized-v1"


def motion_detect(prev: GrayImage, cur: GrayImage, pixel_thresh: float = 20, area_frac: float = 0.01) -> bool:
    """Frame differencing: True if more than ``area_frac`` of pixels moved by more than ``pixel_thresh``."""
    if prev.pixels.shape != cur.pixels.shape:
        raise ValueError(f"frame sizes differ: {prev.pixels.shape} vs {cur.pixels.shape}")
    diff = np.abs(cur.pixels.astype(np.int16) - prev.pixels.astype(np.int16))
    changed = np.count_nonzero(diff > pixel_thresh)
    return changed > area_frac * diff.size


class IntegralImage:
    """Summed-area tables with a zero first row and column.

    ``table[y, x]`` is the sum of all pixels strictly above and left of (x, y).
    """

    def __init__(self, img: GrayImage, with_squares: bool = True):
        px = img.pixels.astype(np.int64)
        h, w = px.shape
        self.width, self.height = w, h
        self.table = np.zeros((h + 1, w + 1), dtype=np.int64)
        self.table[1:, 1:] = px.cumsum(0).cumsum(1)
        self.squares = None
        if with_squares:
            self.squares = np.zeros((h + 1, w + 1), dtype=np.int64)
            self.squares[1:, 1:] = (px * px).cumsum(0).cumsum(1)

    def rect_sum(self, x, y, w, h, table=None):
        t = self.table if table is None else table
        return t[y + h, x + w] - t[y, x + w] - t[y + h, x] + t[y, x]

    def inv_std(self, x, y, size):
        """1/std of the ``size``-square window at (x, y); 0 for flat windows. Vectorized."""
        if self.squares is None:
            return np.ones_like(np.asarray(x), dtype=np.float64) if np.ndim(x) else 1.0
        n = float(size * size)
        s = self.rect_sum(x, y, size, size).astype(np.float64)
        sq = self.rect_sum(x, y, size, size, self.squares).astype(np.float64)
        var = sq / n - (s / n) ** 2
        with np.errstate(divide="ignore"):
            out = np.where(var > 1e-9, 1.0 / np.sqrt(np.maximum(var, 1e-9)), 0.0)
        return out if np.ndim(out) else float(out)


def integral_image(img: GrayImage, with_squares: bool = True) -> IntegralImage:
    return IntegralImage(img, with_squares)


class Rect(NamedTuple):
    x: int
    y: int
    w: int
    h: int
    weight: int


@dataclass(frozen=True)
class HaarFeature:
    rects: tuple[Rect, ...]
    threshold: float
    left: float
    right: float

    def __post_init__(self):
        if not 2 <= len(self.rects) <= 4:
            raise ValueError(f"a feature needs 2-4 rectangles, got {len(self.rects)}")
        for r in self.rects:
            if r.w < 0 or r.h < 0 or r.x < 0 or r.y < 0:
                raise ValueError(f"negative rectangle geometry {r}")


@dataclass(frozen=True)
class Stage:
    features: tuple[HaarFeature, ...]
    threshold: float


@dataclass(frozen=True)
class CascadeModel:
    base_window: int
    stages: tuple[Stage, ...]

    def __post_init__(self):
        for si, stage in enumerate(self.stages):
            for f in stage.features:
                for r in f.rects:
                    if r.x + r.w > self.base_window or r.y + r.h > self.base_window:
                        raise ValueError(f"stage {si}: rectangle {tuple(r)} leaves the {self.base_window}px window")

    @property
    def n_features(self) -> int:
        return sum(len(s.features) for s in self.stages)

    def to_dict(self) -> dict:
        return {
            "base_window": self.base_window,
            "convention": CONVENTION,
            "stages": [
                {
                    "threshold": s.threshold,
                    "features": [
                        {
                            "rects": [r._asdict() for r in f.rects],
                            "threshold": f.threshold,
                            "left": f.left,
                            "right": f.right,
                        }
                        for f in s.features
                    ],
                }
                for s in self.stages
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


class Detection(NamedTuple):
    x: int
    y: int
    scale: float
    window: int


def round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def window_for(base: int, scale: float) -> int:
    return round_half_up(base * scale)


def scaled_rect(r: Rect, scale: float) -> tuple[int, int, int, int]:
    x0, y0 = round_half_up(r.x * scale), round_half_up(r.y * scale)
    x1, y1 = round_half_up((r.x + r.w) * scale), round_half_up((r.y + r.h) * scale)
    return x0, y0, x1 - x0, y1 - y0


@lru_cache(maxsize=4096)
def scaled_feature(f: HaarFeature, scale: float) -> tuple[tuple[int, int, int, int, float], ...]:
    """Scaled rectangles with weights. If the feature is zero-mean at base size,
    the first weight is rebalanced so rounding cannot leak the window mean in.
    """
    rects = [scaled_rect(r, scale) for r in f.rects]
    weights = [float(r.weight) for r in f.rects]
    zero_mean = sum(r.weight * r.w * r.h for r in f.rects) == 0
    area0 = rects[0][2] * rects[0][3]
    if zero_mean and area0 > 0:
        weights[0] = -sum(w * rw * rh for w, (_, _, rw, rh) in zip(weights[1:], rects[1:])) / area0
    return tuple((*r, w) for r, w in zip(rects, weights))


def _feature_raw(f: HaarFeature, ii: IntegralImage, x, y, scale):
    total = 0.0
    for rx, ry, rw, rh, weight in scaled_feature(f, scale):
        total = total + weight * ii.rect_sum(x + rx, y + ry, rw, rh)
    return total


def feature_value(f: HaarFeature, ii: IntegralImage, x, y, scale, inv_std, window):
    """Normalized response compared against ``f.threshold``. Vectorizes over x, y, inv_std."""
    return _feature_raw(f, ii, x, y, scale) * inv_std / float(window * window)


def eval_feature(
    f: HaarFeature, ii: IntegralImage, x: int, y: int, scale: float, inv_std: float, window: int
) -> float:
    """Evaluate one feature on the ``window``-pixel square at (x, y); returns ``f.left`` or ``f.right``."""
    for r in f.rects:
        rx, ry, rw, rh = scaled_rect(r, scale)
        if x + rx < 0 or y + ry < 0 or x + rx + rw > ii.width or y + ry + rh > ii.height:
            raise IndexError(f"feature rectangle {tuple(r)} at scale {scale} leaves the image at ({x}, {y})")
    return f.left if feature_value(f, ii, x, y, scale, inv_std, window) < f.threshold else f.right


class CascadeResult(NamedTuple):
    accepted: bool
    stages_evaluated: int
    features_evaluated: int


def cascade_classify(cascade: CascadeModel, ii: IntegralImage, x: int, y: int, scale: float) -> CascadeResult:
    """Run the stages in order, stopping at the first one that fails."""
    window = window_for(cascade.base_window, scale)
    if x < 0 or y < 0 or x + window > ii.width or y + window > ii.height:
        raise IndexError(f"{window}px window at ({x}, {y}) leaves the {ii.width}x{ii.height} image")
    inv_std = ii.inv_std(x, y, window)
    n_feat = 0
    for si, stage in enumerate(cascade.stages):
        total = 0.0
        for f in stage.features:
            total += eval_feature(f, ii, x, y, scale, inv_std, window)
        n_feat += len(stage.features)
        if total < stage.threshold:
            return CascadeResult(False, si + 1, n_feat)
    return CascadeResult(True, len(cascade.stages), n_feat)


def scan_windows(base: int, width: int, height: int, scale_factor: float = 1.25) -> list[int]:
    """Distinct window sizes visited by the scan, smallest first."""
    if scale_factor <= 1:
        raise ValueError("scale_factor must be > 1")
    sizes = []
    k = 0
    while True:
        window = int(math.floor(base * scale_factor**k + 1e-9))
        if window > min(width, height):
            return sizes
        if not sizes or window != sizes[-1]:
            sizes.append(window)
        k += 1


def default_step(scale: float) -> int:
    return max(1, round_half_up(scale))


def scan(
    cascade: CascadeModel,
    img: GrayImage,
    scale_factor: float = 1.25,
    step: int | None = None,
    ii: IntegralImage | None = None,
) -> list[Detection]:
    """Slide the cascade over every scale; detections come back in (scale, y, x) order.

    ``step=None`` uses ``max(1, round(scale))`` at each scale. Windows are
    evaluated in bulk per scale with the same early exit as
    :func:`cascade_classify`.
    """
    if ii is None:
        ii = IntegralImage(img, with_squares=True)
    out = []
    for window in scan_windows(cascade.base_window, img.width, img.height, scale_factor):
        scale = window / cascade.base_window
        s = step if step is not None else default_step(scale)
        ys, xs = np.meshgrid(
            np.arange(0, img.height - window + 1, s), np.arange(0, img.width - window + 1, s), indexing="ij"
        )
        xs, ys = xs.ravel(), ys.ravel()
        inv_std = np.asarray(ii.inv_std(xs, ys, window), dtype=np.float64)
        alive = np.ones(xs.shape, dtype=bool)
        for stage in cascade.stages:
            idx = np.flatnonzero(alive)
            if idx.size == 0:
                break
            total = np.zeros(idx.size)
            for f in stage.features:
                v = feature_value(f, ii, xs[idx], ys[idx], scale, inv_std[idx], window)
                total += np.where(v < f.threshold, f.left, f.right)
            alive[idx[total < stage.threshold]] = False
        out.extend(Detection(int(x), int(y), scale, window) for x, y in zip(xs[alive], ys[alive]))
    return out


def merge_overlaps(dets: list[Detection], min_overlap: float = 0.3) -> list[Detection]:
    """Greedy grouping: keep the largest window of each cluster of overlapping detections."""
    kept: list[Detection] = []
    for d in sorted(dets, key=lambda d: (-d.window, d.y, d.x)):
        for k in kept:
            ix = max(0, min(d.x + d.window, k.x + k.window) - max(d.x, k.x))
            iy = max(0, min(d.y + d.window, k.y + k.window) - max(d.y, k.y))
            if ix * iy >= min_overlap * d.window * d.window:
                break
        else:
            kept.append(d)
    return kept
