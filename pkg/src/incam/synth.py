"""Deterministic synthetic data: face frames, training patches, stereo scenes."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from incam.imgio import GrayImage

PATCH = 20


def face_template(kind: str = "reference") -> np.ndarray:
    """20x20 cartoon face: dark eyes and mouth on bright skin."""
    f = np.full((PATCH, PATCH), 170.0)
    f[0:4, :] = 185  # forehead
    if kind == "reference":
        f[6:9, 3:8] = 40
        f[6:9, 12:17] = 40
        f[6:9, 8:12] = 185
        f[13:15, 6:14] = 60
    elif kind == "intruder":
        f[0:3, :] = 95  # hairline
        f[6:9, 4:8] = 35
        f[6:9, 12:16] = 35
        f[6:9, 8:12] = 175
        f[14:16, 4:16] = 70
    else:
        raise ValueError(f"unknown face kind {kind!r}")
    return f


def resize_nearest(a: np.ndarray, h: int, w: int) -> np.ndarray:
    ys = np.minimum(((np.arange(h) + 0.5) * a.shape[0] / h).astype(int), a.shape[0] - 1)
    xs = np.minimum(((np.arange(w) + 0.5) * a.shape[1] / w).astype(int), a.shape[1] - 1)
    return a[np.ix_(ys, xs)]


def resize_area(a: np.ndarray, h: int, w: int) -> np.ndarray:
    """Box-filter resample (exact area weights), any scale factor."""
    a = np.asarray(a, dtype=np.float64)

    def weights(n_in, n_out):
        m = np.zeros((n_out, n_in))
        edges = np.arange(n_out + 1) * n_in / n_out
        for i in range(n_out):
            lo, hi = edges[i], edges[i + 1]
            for j in range(int(np.floor(lo)), min(int(np.ceil(hi)), n_in)):
                m[i, j] = min(hi, j + 1) - max(lo, j)
        return m / m.sum(axis=1, keepdims=True)

    return weights(a.shape[0], h) @ a @ weights(a.shape[1], w).T


def background(width: int, height: int, rng: np.random.Generator) -> np.ndarray:
    """Smooth textured indoor-ish scene."""
    base = gaussian_filter(rng.normal(0, 1, (height, width)), 6)
    base = 110 + 35 * base / (np.abs(base).max() + 1e-9)
    base[: height // 3, :] += 10
    x0 = int(rng.integers(0, width // 2))
    base[height // 2 :, x0 : x0 + width // 4] -= 30  # furniture
    return base


def face_frames(width: int = 96, height: int = 72, seed: int = 7):
    """Frame sequence with a static background, a visit by the reference face
    and an intruder, then static again.

    Returns (frames, truth) where truth[i] is None or (kind, x, y, size).
    """
    rng = np.random.default_rng(seed)
    bg = background(width, height, rng)
    plan = [None] * 4 + [
        ("reference", 20, 15, 25),
        ("reference", 44, 22, 25),
        ("intruder", 52, 18, 25),
    ] + [None] * 5
    frames = []
    for item in plan:
        img = bg.copy()
        if item is not None:
            kind, x, y, s = item
            img[y : y + s, x : x + s] = resize_nearest(face_template(kind), s, s)
        img += rng.integers(-2, 3, size=img.shape)
        frames.append(_to_gray(img))
    return frames, plan


def _jitter_face(kind: str, rng: np.random.Generator) -> np.ndarray:
    s = int(rng.integers(22, 29))
    big = resize_nearest(face_template(kind), s, s)
    pad = np.pad(big, 3, mode="edge")
    dx, dy = rng.integers(0, 7, size=2)
    crop = pad[dy : dy + s, dx : dx + s]
    out = resize_area(crop, PATCH, PATCH)
    out = out + rng.uniform(-15, 15) + rng.normal(0, 5, out.shape)
    return np.clip(out, 0, 255)


def auth_patches(n_per_class: int = 150, seed: int = 11):
    """Training set for the authentication net: reference face (label 1) vs
    intruder faces, background crops and downscaled whole frames (label 0).
    Rows are 400-long vectors scaled to [0, 1].
    """
    rng = np.random.default_rng(seed)
    pos = [_jitter_face("reference", rng) for _ in range(n_per_class)]
    neg = [_jitter_face("intruder", rng) for _ in range(n_per_class // 2)]
    while len(neg) < n_per_class:
        bg = background(96, 72, rng)
        s = int(rng.integers(20, 60))
        x, y = rng.integers(0, 96 - s), rng.integers(0, 72 - s)
        crop = bg[y : y + s, x : x + s] if rng.random() < 0.7 else bg
        neg.append(np.clip(resize_area(crop, PATCH, PATCH) + rng.normal(0, 3, (PATCH, PATCH)), 0, 255))
    x = np.array([p.ravel() / 255.0 for p in pos + neg])
    y = np.array([1] * len(pos) + [0] * len(neg))
    order = rng.permutation(len(x))
    return x[order], y[order]


def gaussian_patches(n: int, seed: int = 42, dim: int = 400, separation: float = 0.08):
    """Two isotropic Gaussian classes in [0, 1]^dim; linearly separable in expectation."""
    rng = np.random.default_rng(seed)
    mu0 = np.full(dim, 0.5 - separation / 2)
    mu1 = np.full(dim, 0.5 + separation / 2)
    y = rng.integers(0, 2, n)
    x = np.where(y[:, None] == 1, mu1, mu0) + rng.normal(0, 0.15, (n, dim))
    return np.clip(x, 0, 1), y


def noise_texture(width: int, height: int, rng: np.random.Generator, smooth: float = 0.8) -> np.ndarray:
    t = gaussian_filter(rng.normal(0, 1, (height, width)), smooth)
    return t / (t.std() + 1e-12)


def shifted_noise_pair(width: int = 96, height: int = 64, shift: int = 5, seed: int = 3):
    """Textured noise pair with right(x) = left(x + shift), i.e. true disparity ``shift``."""
    rng = np.random.default_rng(seed)
    wide = np.clip(128 + 50 * noise_texture(width + shift, height, rng), 0, 255).astype(np.uint8)
    return GrayImage(wide[:, :width]), GrayImage(wide[:, shift : shift + width])


def stereo_scene(width: int = 256, height: int = 192, seed: int = 5):
    """Fronto-parallel layers: background plane plus two nearer rectangles.

    Each layer has its own mean brightness and texture, so depth edges are
    also intensity edges. Returns (left, right, true_disparity).
    """
    rng = np.random.default_rng(seed)
    layers = [
        (4, (0, 0, width, height), 120.0),
        (10, (width // 8, height // 5, width // 3, height // 2), 190.0),
        (14, (width // 2 + 10, height // 3, width // 4, height // 2), 50.0),
    ]
    pad = max(d for d, _, _ in layers) + 2
    L = np.zeros((height, width))
    R = np.zeros((height, width))
    gt = np.zeros((height, width))
    for d, (x, y, w, h), mean in layers:
        tex = mean + 12 * noise_texture(width + pad, height, rng)
        # left pixel x shows texture column x + pad; right pixel x - d shows the same point
        L[y : y + h, x : x + w] = tex[y : y + h, x + pad : x + w + pad]
        gt[y : y + h, x : x + w] = d
        for col in range(x, x + w):
            rc = col - d
            if 0 <= rc < width:
                R[y : y + h, rc] = tex[y : y + h, col + pad]
    return _to_gray(L), _to_gray(R), gt


def _to_gray(a: np.ndarray) -> GrayImage:
    return GrayImage(np.clip(np.rint(a), 0, 255).astype(np.uint8))


def toy_cascade():
    """Hand-built 3-stage cascade for the cartoon faces of :func:`face_template`.

    Thresholds sit between the face responses and the largest background
    responses measured on :func:`face_frames`.
    """
    from incam.facefilter import CascadeModel, HaarFeature, Rect, Stage

    def feat(rects, thr):
        return HaarFeature(tuple(Rect(*r) for r in rects), thr, 0.0, 1.0)

    eyes_vs_cheeks = feat([(2, 6, 16, 3, -1), (2, 9, 16, 3, 1)], 0.15)
    bridge = feat([(3, 6, 5, 3, -1), (8, 6, 4, 3, 2), (12, 6, 5, 3, -1)], 0.08)
    left_eye = feat([(3, 6, 5, 3, -1), (3, 9, 5, 3, 1)], 0.08)
    right_eye = feat([(12, 6, 5, 3, -1), (12, 9, 5, 3, 1)], 0.08)
    bridge_left = feat([(3, 6, 5, 3, -1), (8, 6, 4, 3, 1)], 0.04)
    mouth = feat([(5, 13, 10, 2, -1), (5, 11, 10, 2, 1)], 0.04)
    return CascadeModel(
        20,
        (
            Stage((eyes_vs_cheeks,), 1.0),
            Stage((bridge, left_eye), 2.0),
            Stage((right_eye, bridge_left, mouth), 2.0),
        ),
    )
