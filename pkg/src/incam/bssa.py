"""Bilateral-space stereo: grid splat/blur/slice, SAD matching, grid refinement.

Grid vertex (i, j, k) sits at pixel (i * sigma_spatial, j * sigma_spatial) and
luma k * sigma_range. Splatting is hard binning to the nearest vertex, so mass
is conserved exactly; slicing is trilinear in homogeneous coordinates.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from incam.imgio import GrayImage, RgbImage

GRID_DTYPE = np.float64
assert np.finfo(GRID_DTYPE).bits >= 32

DEFAULT_SIGMA_SPATIAL = 8.0
DEFAULT_SIGMA_RANGE = 8.0


@dataclass(eq=False)
class BilateralGrid:
    value_sum: np.ndarray  # (nx, ny, nr)
    weight_sum: np.ndarray
    sigma_spatial: float
    sigma_range: float
    count: np.ndarray | None = None  # pixels binned per vertex

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.weight_sum.shape

    @property
    def n_vertices(self) -> int:
        return int(np.prod(self.dims))

    def ratio(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.weight_sum > 0, self.value_sum / self.weight_sum, 0.0)


def grid_dims(width: int, height: int, sigma_spatial: float, sigma_range: float) -> tuple[int, int, int]:
    return (
        int(np.floor((width - 1) / sigma_spatial + 0.5)) + 1,
        int(np.floor((height - 1) / sigma_spatial + 0.5)) + 1,
        int(np.floor(255 / sigma_range + 0.5)) + 1,
    )


def _coords(guide: GrayImage, sigma_spatial: float, sigma_range: float):
    h, w = guide.pixels.shape
    ys, xs = np.mgrid[0:h, 0:w]
    return xs / sigma_spatial, ys / sigma_spatial, guide.pixels.astype(np.float64) / sigma_range


def splat(guide: GrayImage, values, weights, sigma_spatial: float, sigma_range: float) -> BilateralGrid:
    if sigma_spatial <= 0 or sigma_range <= 0:
        raise ValueError("sigmas must be positive")
    values = np.asarray(values, dtype=GRID_DTYPE)
    weights = np.asarray(weights, dtype=GRID_DTYPE)
    if values.shape != guide.pixels.shape or weights.shape != guide.pixels.shape:
        raise ValueError("values/weights must match the guide image shape")
    dims = grid_dims(guide.width, guide.height, sigma_spatial, sigma_range)
    gx, gy, gr = _coords(guide, sigma_spatial, sigma_range)
    ix = np.floor(gx + 0.5).astype(np.intp).ravel()
    iy = np.floor(gy + 0.5).astype(np.intp).ravel()
    ir = np.floor(gr + 0.5).astype(np.intp).ravel()
    flat = np.ravel_multi_index((ix, iy, ir), dims)
    n = int(np.prod(dims))
    # bincount sums in index order: deterministic reduction
    w = weights.ravel()
    wsum = np.bincount(flat, weights=w, minlength=n).reshape(dims)
    vsum = np.bincount(flat, weights=w * values.ravel(), minlength=n).reshape(dims)
    count = np.bincount(flat, minlength=n).reshape(dims)
    return BilateralGrid(vsum, wsum, sigma_spatial, sigma_range, count)


def _blur121(a: np.ndarray, axis: int) -> np.ndarray:
    out = 2.0 * a
    src = np.moveaxis(a, axis, 0)
    dst = np.moveaxis(out, axis, 0)
    dst[1:] += src[:-1]
    dst[:-1] += src[1:]
    return out * 0.25


def grid_blur(grid: BilateralGrid) -> BilateralGrid:
    """Separable [1, 2, 1] / 4 blur on both homogeneous channels, zero padding."""
    v, w = grid.value_sum, grid.weight_sum
    for axis in range(v.ndim):
        v, w = _blur121(v, axis), _blur121(w, axis)
    return BilateralGrid(v, w, grid.sigma_spatial, grid.sigma_range, grid.count)


def _nearest_occupied(occupied: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Flat index of the nearest occupied vertex (L1), ties to the lowest index."""
    occ = np.argwhere(occupied)  # lexicographic order == ascending flat index
    out = np.empty(len(targets), dtype=np.intp)
    for i, t in enumerate(targets):
        d = np.abs(occ - t).sum(axis=1)
        out[i] = np.ravel_multi_index(tuple(occ[np.argmin(d)]), occupied.shape)
    return out


def _trilinear(arrs, gx, gy, gr):
    dims = arrs[0].shape
    coords = []
    for g, n in zip((gx, gy, gr), dims):
        g = np.clip(g, 0, n - 1)
        i0 = np.minimum(np.floor(g).astype(np.intp), max(n - 2, 0))
        f = g - i0
        i1 = np.minimum(i0 + 1, n - 1)
        coords.append((i0, i1, f))
    (x0, x1, fx), (y0, y1, fy), (r0, r1, fr) = coords
    outs = [np.zeros(gx.shape, dtype=GRID_DTYPE) for _ in arrs]
    for xi, wx in ((x0, 1 - fx), (x1, fx)):
        for yi, wy in ((y0, 1 - fy), (y1, fy)):
            for ri, wr in ((r0, 1 - fr), (r1, fr)):
                wt = wx * wy * wr
                for o, a in zip(outs, arrs):
                    o += wt * a[xi, yi, ri]
    return outs


def slice_grid(grid: BilateralGrid, guide: GrayImage) -> np.ndarray:
    """Trilinear homogeneous interpolation back to pixels.

    Pixels whose interpolation neighborhood carries no weight take the value of
    the nearest vertex with weight.
    """
    gx, gy, gr = _coords(guide, grid.sigma_spatial, grid.sigma_range)
    if grid_dims(guide.width, guide.height, grid.sigma_spatial, grid.sigma_range) != grid.dims:
        raise ValueError("guide does not match the grid geometry")
    v, w = _trilinear((grid.value_sum, grid.weight_sum), gx, gy, gr)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(w > 0, v / w, np.nan)
    holes = np.isnan(out)
    if holes.any():
        occupied = grid.weight_sum > 0
        if not occupied.any():
            out[holes] = 0.0
        else:
            targets = np.stack([np.floor(c[holes] + 0.5) for c in (gx, gy, gr)], axis=1).astype(np.intp)
            nearest = _nearest_occupied(occupied, targets)
            out[holes] = grid.ratio().ravel()[nearest]
    return out


# public short name; ``slice_grid`` avoids shadowing the builtin inside this module
slice = slice_grid  # noqa: A001


def bilateral_filter(img: GrayImage, sigma_spatial: float, sigma_range: float) -> np.ndarray:
    """Grid bilateral filter of an image by itself (splat, blur, slice)."""
    vals = img.pixels.astype(GRID_DTYPE)
    grid = splat(img, vals, np.ones_like(vals), sigma_spatial, sigma_range)
    return slice_grid(grid_blur(grid), img)


def bilateral_filter_1d(signal, sigma_spatial: float = 4.0, sigma_range: float = 2.0) -> np.ndarray:
    """Edge-aware smoothing of a 1-D signal through a (position, intensity) grid."""
    s = np.asarray(signal, dtype=GRID_DTYPE)
    if s.size == 0:
        return s.copy()
    lo = float(s.min())
    pos = np.arange(s.size) / sigma_spatial
    inten = (s - lo) / sigma_range
    ip = np.floor(pos + 0.5).astype(np.intp)
    ii = np.floor(inten + 0.5).astype(np.intp)
    dims = (int(ip.max()) + 1, int(ii.max()) + 1)
    flat = np.ravel_multi_index((ip, ii), dims)
    n = dims[0] * dims[1]
    w = np.bincount(flat, minlength=n).astype(GRID_DTYPE).reshape(dims)
    v = np.bincount(flat, weights=s, minlength=n).reshape(dims)
    for axis in range(2):
        v, w = _blur121(v, axis), _blur121(w, axis)
    pos = np.clip(pos, 0, dims[0] - 1)
    inten = np.clip(inten, 0, dims[1] - 1)
    p0 = np.minimum(np.floor(pos).astype(np.intp), max(dims[0] - 2, 0))
    r0 = np.minimum(np.floor(inten).astype(np.intp), max(dims[1] - 2, 0))
    fp, fr = pos - p0, inten - r0
    p1, r1 = np.minimum(p0 + 1, dims[0] - 1), np.minimum(r0 + 1, dims[1] - 1)
    acc_v = np.zeros_like(s)
    acc_w = np.zeros_like(s)
    for pi, wp in ((p0, 1 - fp), (p1, fp)):
        for ri, wr in ((r0, 1 - fr), (r1, fr)):
            acc_v += wp * wr * v[pi, ri]
            acc_w += wp * wr * w[pi, ri]
    return acc_v / acc_w


def moving_average(signal, width: int = 9) -> np.ndarray:
    """Box filter with edge replication; the non-edge-aware baseline."""
    s = np.asarray(signal, dtype=np.float64)
    pad = width // 2
    p = np.pad(s, (pad, width - 1 - pad), mode="edge")
    c = np.concatenate([[0.0], np.cumsum(p)])
    return (c[width:] - c[:-width]) / width


@dataclass(frozen=True)
class DisparityMap:
    disparity: np.ndarray  # (h, w) float
    confidence: np.ndarray  # (h, w) float in [0, 1]
    max_disparity: float

    @property
    def width(self) -> int:
        return self.disparity.shape[1]

    @property
    def height(self) -> int:
        return self.disparity.shape[0]

    def to_gray(self) -> GrayImage:
        """Disparity scaled so ``max_disparity`` maps to 255."""
        scale = 255.0 / self.max_disparity if self.max_disparity > 0 else 0.0
        return GrayImage(np.clip(np.floor(self.disparity * scale + 0.5), 0, 255).astype(np.uint8))


@dataclass(frozen=True)
class RefineParams:
    lam: float = 4.0
    max_iters: int = 500
    tol: float = 1e-4
    damping: float = 1.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")


def _box_sum(a: np.ndarray, block: int) -> np.ndarray:
    """Sum over a ``block`` x ``block`` window centred on each pixel (edge replicated)."""
    lo = block // 2
    hi = block - 1 - lo
    p = np.pad(a, ((0, 0), (lo, hi), (lo, hi)), mode="edge")
    c = np.zeros((p.shape[0], p.shape[1] + 1, p.shape[2] + 1), dtype=np.int64)
    c[:, 1:, 1:] = p.cumsum(1).cumsum(2)
    return c[:, block:, block:] - c[:, :-block, block:] - c[:, block:, :-block] + c[:, :-block, :-block]


def sad_cost_volume(left: GrayImage, right: GrayImage, max_disp: int, block: int) -> np.ndarray:
    """Integer SAD costs, shape (max_disp + 1, h, w); left x matches right x - d."""
    if left.pixels.shape != right.pixels.shape:
        raise ValueError("stereo pair sizes differ")
    h, w = left.pixels.shape
    if block < 1 or block > min(h, w):
        raise ValueError(f"block {block} does not fit a {w}x{h} image")
    L = left.pixels.astype(np.int64)
    R = right.pixels.astype(np.int64)
    diffs = np.empty((max_disp + 1, h, w), dtype=np.int64)
    for d in range(max_disp + 1):
        cols = np.maximum(np.arange(w) - d, 0)
        diffs[d] = np.abs(L - R[:, cols])
    return _box_sum(diffs, block)


def rough_disparity(left: GrayImage, right: GrayImage, max_disp: int = 64, block: int = 9) -> DisparityMap:
    """Winner-take-all SAD block matching; ties go to the smaller disparity.

    Confidence is the gap between the best and second-best cost, divided by the
    largest possible block cost.
    """
    cost = sad_cost_volume(left, right, max_disp, block)
    best = np.argmin(cost, axis=0)
    if max_disp == 0:
        conf = np.zeros(best.shape)
    else:
        two = np.partition(cost, 1, axis=0)[:2]
        conf = (two[1] - two[0]) / float(255 * block * block)
    return DisparityMap(best.astype(np.float64), conf.astype(np.float64), float(max_disp))


def grid_energy(v, c, t, lam, occupied) -> float:
    """E(v) = sum c (v - t)^2 + lam * sum over occupied 6-neighbour edges (v_i - v_j)^2."""
    e = float(np.sum(c * (v - t) ** 2))
    for axis in range(v.ndim):
        sl0 = [np.s_[:]] * v.ndim
        sl1 = [np.s_[:]] * v.ndim
        sl0[axis] = np.s_[:-1]
        sl1[axis] = np.s_[1:]
        both = occupied[tuple(sl0)] & occupied[tuple(sl1)]
        dv = v[tuple(sl0)] - v[tuple(sl1)]
        e += lam * float(np.sum(np.where(both, dv * dv, 0.0)))
    return e


def _neighbour_sums(v: np.ndarray, occupied: np.ndarray):
    """Sum of occupied 6-neighbour values and occupied-neighbour count per vertex."""
    vm = np.where(occupied, v, 0.0)
    om = occupied.astype(np.float64)
    s = np.zeros_like(vm)
    deg = np.zeros_like(om)
    for axis in range(v.ndim):
        for shift in (1, -1):
            s += _shifted(vm, axis, shift)
            deg += _shifted(om, axis, shift)
    return s, deg


def _shifted(a: np.ndarray, axis: int, shift: int) -> np.ndarray:
    out = np.zeros_like(a)
    src = np.moveaxis(a, axis, 0)
    dst = np.moveaxis(out, axis, 0)
    if shift > 0:
        dst[1:] = src[:-1]
    else:
        dst[:-1] = src[1:]
    return out


class SolveResult(NamedTuple):
    v: np.ndarray
    iterations: int
    energies: list
    converged: bool


def jacobi_solve(c, t, occupied, p: RefineParams, v0=None, track_energy: bool = False) -> SolveResult:
    """Damped Jacobi on (C + lam L) v = C t over occupied vertices of a grid graph.

    Each update is ``v_i <- (c_i t_i + lam * sum_j v_j) / (c_i + lam * deg_i)``.
    Vertices with a zero denominator keep their value.
    """
    c = np.where(occupied, np.asarray(c, dtype=GRID_DTYPE), 0.0)
    t = np.where(occupied, np.asarray(t, dtype=GRID_DTYPE), 0.0)
    v = t.copy() if v0 is None else np.where(occupied, np.asarray(v0, dtype=GRID_DTYPE), 0.0)
    _, deg = _neighbour_sums(v, occupied)
    denom = c + p.lam * deg
    active = occupied & (denom > 0)
    energies = [grid_energy(v, c, t, p.lam, occupied)] if track_energy else []
    it = 0
    converged = False
    while it < p.max_iters:
        nsum, _ = _neighbour_sums(v, occupied)
        with np.errstate(invalid="ignore", divide="ignore"):
            target = (c * t + p.lam * nsum) / denom
        new = np.where(active, (1 - p.damping) * v + p.damping * target, v)
        delta = float(np.max(np.abs(new - v))) if active.any() else 0.0
        v = new
        it += 1
        if track_energy:
            energies.append(grid_energy(v, c, t, p.lam, occupied))
        if delta < p.tol:
            converged = True
            break
    return SolveResult(v, it, energies, converged)


class RefineResult(NamedTuple):
    disparity: DisparityMap
    grid_dims: tuple
    iterations: int
    energies: list


def refine_disparity_detailed(
    rough: DisparityMap,
    guide: GrayImage,
    sigma_spatial: float = DEFAULT_SIGMA_SPATIAL,
    sigma_range: float = DEFAULT_SIGMA_RANGE,
    p: RefineParams = RefineParams(),
    track_energy: bool = False,
) -> RefineResult:
    if rough.disparity.shape != guide.pixels.shape:
        raise ValueError("disparity map and guide image sizes differ")
    grid = splat(guide, rough.disparity, rough.confidence, sigma_spatial, sigma_range)
    occupied = grid.count > 0
    c = grid.weight_sum
    t = grid.ratio()
    # zero-confidence vertices still need a start value: mean of their pixels
    plain = splat(guide, rough.disparity, np.ones_like(rough.disparity), sigma_spatial, sigma_range)
    v0 = np.where(c > 0, t, plain.ratio())
    sol = jacobi_solve(c, t, occupied, p, v0=v0, track_energy=track_energy)
    solved = BilateralGrid(
        np.where(occupied, sol.v, 0.0), occupied.astype(GRID_DTYPE), sigma_spatial, sigma_range, grid.count
    )
    disp = np.clip(slice_grid(solved, guide), 0.0, rough.max_disparity)
    conf = np.clip(slice_grid(grid_blur(BilateralGrid(c, occupied.astype(GRID_DTYPE), sigma_spatial, sigma_range)), guide), 0, 1)
    return RefineResult(DisparityMap(disp, conf, rough.max_disparity), grid.dims, sol.iterations, sol.energies)


def refine_disparity(
    rough: DisparityMap,
    guide: GrayImage,
    sigma_spatial: float = DEFAULT_SIGMA_SPATIAL,
    sigma_range: float = DEFAULT_SIGMA_RANGE,
    p: RefineParams = RefineParams(),
) -> DisparityMap:
    """Edge-aware smoothing of a rough disparity map by a quadratic solve in the bilateral grid."""
    return refine_disparity_detailed(rough, guide, sigma_spatial, sigma_range, p).disparity


def stitch_panorama(depth_panels, images, overlap: int):
    """Concatenate panels left to right with a linear feather over ``overlap`` columns.

    In the seam, column k blends ``a + (b - a) * k / (overlap - 1)`` from the left
    panel ``a`` to the right panel ``b`` (0.5 when ``overlap`` is 1).
    """
    if len(depth_panels) != len(images) or not images:
        raise ValueError("need one depth panel per image, at least one")
    heights = {im.height for im in images} | {d.height for d in depth_panels}
    if len(heights) != 1:
        raise ValueError(f"panel heights differ: {sorted(heights)}")
    for d, im in zip(depth_panels, images):
        if d.width != im.width:
            raise ValueError("depth panel and image widths differ")
        if overlap < 0 or overlap > im.width:
            raise ValueError(f"overlap {overlap} does not fit a {im.width}px panel")
    rgb = images[0].pixels.astype(np.float64)
    disp = depth_panels[0].disparity.astype(np.float64)
    conf = depth_panels[0].confidence.astype(np.float64)
    if overlap == 1:
        alpha = np.array([0.5])
    else:
        alpha = np.arange(overlap) / max(overlap - 1, 1)
    for d, im in zip(depth_panels[1:], images[1:]):
        nrgb = im.pixels.astype(np.float64)
        parts = []
        for acc, new in ((rgb, nrgb), (disp, d.disparity), (conf, d.confidence)):
            a = acc[:, acc.shape[1] - overlap :]
            b = new[:, :overlap]
            al = alpha.reshape((1, -1) + (1,) * (a.ndim - 2))
            seam = a + (b - a) * al
            parts.append(np.concatenate([acc[:, : acc.shape[1] - overlap], seam, new[:, overlap:]], axis=1))
        rgb, disp, conf = parts
    max_d = max(dp.max_disparity for dp in depth_panels)
    out_rgb = RgbImage(np.clip(np.floor(rgb + 0.5), 0, 255).astype(np.uint8))
    return out_rgb, DisparityMap(disp, conf, max_d)


class SweepRow(NamedTuple):
    size: float
    ms_ssim: float
    vertex_count: int
    refine_time: float


def grid_quality_sweep(
    left: GrayImage,
    right: GrayImage,
    sizes,
    max_disp: int = 64,
    block: int = 9,
    p: RefineParams = RefineParams(),
    rough: DisparityMap | None = None,
) -> list[SweepRow]:
    """Refine the same rough disparity at each grid size and score against the finest.

    A size of ``s`` pixels-per-vertex sets both the spatial and the range
    spacing of the grid to ``s``.
    """
    from incam.metrics import MsSsimParams, ms_ssim

    sizes = list(sizes)
    if not sizes:
        raise ValueError("sizes must be non-empty")
    if rough is None:
        rough = rough_disparity(left, right, max_disp, block)
    maps = {}
    rows = []
    for s in sizes:
        t0 = time.perf_counter()
        res = refine_disparity_detailed(rough, left, s, s, p)
        elapsed = time.perf_counter() - t0
        maps[s] = res.disparity.to_gray()
        rows.append((s, int(np.prod(res.grid_dims)), elapsed))
    finest = maps[min(sizes)]
    params = MsSsimParams()
    return [SweepRow(s, ms_ssim(finest, maps[s], params), n, dt) for s, n, dt in rows]
