"""Handcrafted detector/descriptor frontend.

Deterministic classical components keep every downstream benchmark
number reproducible: a min-eigenvalue corner scorer, a gradient
orientation-histogram patch descriptor, and mutual-nearest-neighbor
matching with an optional ratio test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d, sobel

from .adaptation import nms
from .errors import ImageTooSmallError, InvalidSpecError, ShapeError

PATCH = 16          # descriptor support side in pixels
SPATIAL_BINS = 4    # descriptor spatial grid per side
ORIENT_BINS = 8     # orientation histogram bins per spatial cell
_BORDER = PATCH // 2


def to_gray(image: np.ndarray) -> np.ndarray:
    """Float grayscale in [0, 1] from RGB or single-channel input."""
    image = np.asarray(image)
    if image.ndim == 3 and image.shape[2] == 3:
        gray = image.astype(np.float64).mean(axis=2)
    elif image.ndim == 2:
        gray = image.astype(np.float64)
    else:
        raise ShapeError(f"expected HxW or HxWx3 image, got {image.shape}")
    if image.dtype == np.uint8:
        gray /= 255.0
    return gray


def detect(image: np.ndarray) -> np.ndarray:
    """Corner heatmap in [0, 1]: min eigenvalue of the structure tensor.

    Sobel gradients, 3x3 binomial smoothing of the tensor entries, then
    the closed-form smaller eigenvalue, normalized by the image maximum.
    """
    gray = to_gray(image)
    if gray.shape[0] < 7 or gray.shape[1] < 7:
        raise ImageTooSmallError(f"image {gray.shape} too small for detection (needs 7x7)")
    gx = sobel(gray, axis=1, mode="reflect")
    gy = sobel(gray, axis=0, mode="reflect")
    kernel = np.array([1.0, 2.0, 1.0]) / 4.0

    def smooth(a):
        return correlate1d(correlate1d(a, kernel, axis=0, mode="reflect"),
                           kernel, axis=1, mode="reflect")

    jxx, jyy, jxy = smooth(gx * gx), smooth(gy * gy), smooth(gx * gy)
    half_trace = (jxx + jyy) / 2.0
    root = np.sqrt(((jxx - jyy) / 2.0) ** 2 + jxy * jxy)
    lam = np.maximum(half_trace - root, 0.0)
    peak = lam.max()
    return lam / peak if peak > 0 else lam


@dataclass(frozen=True)
class KeypointSet:
    """Detected points with scores, strongest first."""

    xy: np.ndarray     # (N, 2) float
    score: np.ndarray  # (N,)

    def __len__(self) -> int:
        return len(self.xy)


def top_k(heatmap: np.ndarray, k: int, nms_radius: int = 4,
          threshold: float = 0.0) -> KeypointSet:
    """Non-maximum suppression followed by truncation to the k strongest."""
    if k < 1:
        raise InvalidSpecError(f"k must be >= 1, got {k}")
    pts = nms(heatmap, nms_radius, threshold)[:k]
    scores = np.asarray(heatmap, dtype=np.float64)[pts[:, 1], pts[:, 0]] if len(pts) else \
        np.zeros(0)
    return KeypointSet(pts.astype(np.float64), scores)


def describe(image: np.ndarray, xy: np.ndarray, dim: int = 128):
    """Orientation-histogram descriptors for keypoints.

    A 16x16 patch around each (rounded) keypoint is divided into a 4x4
    spatial grid; per cell, gradient magnitudes accumulate into 8
    orientation bins. The 128 raw values are resampled to ``dim``,
    mean-centered, L2-normalized, clipped at magnitude 0.2, and
    renormalized. Mean-centering removes the component shared by all
    gradient histograms, so unrelated patches score near zero.

    Keypoints closer than 8 px to the border are dropped; returns
    ``(descriptors, kept)`` with ``kept`` indexing into ``xy``.
    """
    if dim < 2:
        raise InvalidSpecError(f"descriptor dim must be >= 2, got {dim}")
    gray = to_gray(image)
    h, w = gray.shape
    xy = np.atleast_2d(np.asarray(xy, dtype=np.float64))
    xi = np.rint(xy[:, 0]).astype(int)
    yi = np.rint(xy[:, 1]).astype(int)
    kept = np.flatnonzero((xi >= _BORDER - 1) & (xi <= w - _BORDER - 1)
                          & (yi >= _BORDER - 1) & (yi <= h - _BORDER - 1))
    out = np.zeros((len(kept), dim))
    raw_len = SPATIAL_BINS * SPATIAL_BINS * ORIENT_BINS
    cell_px = PATCH // SPATIAL_BINS
    for row, idx in enumerate(kept):
        x, y = xi[idx], yi[idx]
        patch = gray[y - _BORDER + 1:y + _BORDER + 1, x - _BORDER + 1:x + _BORDER + 1]
        py, px = np.gradient(patch)
        mag = np.hypot(px, py)
        ang = np.arctan2(py, px)
        obin = np.floor((ang + np.pi) / (2.0 * np.pi) * ORIENT_BINS).astype(int) % ORIENT_BINS
        rr, cc = np.meshgrid(np.arange(PATCH), np.arange(PATCH), indexing="ij")
        sbin = (rr // cell_px) * SPATIAL_BINS + (cc // cell_px)
        hist = np.zeros(raw_len)
        np.add.at(hist, sbin.ravel() * ORIENT_BINS + obin.ravel(), mag.ravel())
        if dim != raw_len:
            hist = np.interp(np.linspace(0.0, raw_len - 1.0, dim),
                             np.arange(raw_len), hist)
        hist -= hist.mean()
        out[row] = _normalize_clipped(hist)
    return out, kept


def _normalize_clipped(vec: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        flat = np.zeros_like(vec)
        flat[0] = 1.0
        return flat
    vec = vec / norm
    vec = np.clip(vec, -0.2, 0.2)
    return vec / np.linalg.norm(vec)


@dataclass(frozen=True)
class MatchSet:
    """Mutually-nearest descriptor matches between two keypoint sets."""

    indices1: np.ndarray  # (M,) into the first set
    indices2: np.ndarray  # (M,) into the second set
    similarity: np.ndarray  # (M,) descriptor inner products

    def __len__(self) -> int:
        return len(self.indices1)


def _ratio_ok(sims: np.ndarray, nearest: np.ndarray, ratio: float) -> np.ndarray:
    """Lowe-style test per row: nearest/second-nearest distance ratio < ratio."""
    n, m = sims.shape
    if m < 2:
        return np.ones(n, dtype=bool)
    dist = np.sqrt(np.maximum(2.0 - 2.0 * sims, 0.0))
    part = np.partition(dist, 1, axis=1)
    best = dist[np.arange(n), nearest]
    second = np.where(part[:, 0] == best, part[:, 1], part[:, 0])
    # a zero second-best distance means duplicates; ratio 1 fails the test
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(second > 0, best / second, 1.0)
    return r < ratio


def match_mnn(desc1: np.ndarray, desc2: np.ndarray, ratio: float | None = None) -> MatchSet:
    """Mutual nearest neighbors by inner product, optional symmetric ratio test."""
    desc1 = np.atleast_2d(np.asarray(desc1, dtype=np.float64))
    desc2 = np.atleast_2d(np.asarray(desc2, dtype=np.float64))
    if desc1.shape[1] != desc2.shape[1]:
        raise ShapeError("descriptor dimensions differ")
    if len(desc1) == 0 or len(desc2) == 0:
        z = np.zeros(0, dtype=int)
        return MatchSet(z, z, np.zeros(0))
    sims = desc1 @ desc2.T
    nn12 = np.argmax(sims, axis=1)
    nn21 = np.argmax(sims, axis=0)
    idx1 = np.flatnonzero(nn21[nn12] == np.arange(len(desc1)))
    idx2 = nn12[idx1]
    if ratio is not None:
        if not 0.0 < ratio <= 1.0:
            raise InvalidSpecError(f"ratio must be in (0, 1], got {ratio}")
        ok = (_ratio_ok(sims, nn12, ratio)[idx1]
              & _ratio_ok(sims.T, nn21, ratio)[idx2])
        idx1, idx2 = idx1[ok], idx2[ok]
    return MatchSet(idx1, idx2, sims[idx1, idx2])


def write_features(path, kps: KeypointSet, desc: np.ndarray) -> None:
    """One `x y score d_1 ... d_D` line per keypoint."""
    if len(kps) != len(desc):
        raise ShapeError("keypoint and descriptor counts differ")
    with open(path, "w") as f:
        for (x, y), s, d in zip(kps.xy, kps.score, desc):
            f.write(f"{x:.6f} {y:.6f} {s:.8f} " + " ".join(f"{v:.8f}" for v in d) + "\n")


def read_features(path):
    xy, scores, desc = [], [], []
    with open(path) as f:
        for line in f:
            if not line.strip():
                continue
            vals = [float(v) for v in line.split()]
            xy.append(vals[:2])
            scores.append(vals[2])
            desc.append(vals[3:])
    if not xy:
        return KeypointSet(np.zeros((0, 2)), np.zeros(0)), np.zeros((0, 0))
    return KeypointSet(np.array(xy), np.array(scores)), np.array(desc)
