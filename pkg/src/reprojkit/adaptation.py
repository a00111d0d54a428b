"""Pseudo-ground-truth interest points from windows of consecutive frames.

A detector heatmap is computed on a reference frame and on a random
subset of the following frames; detections from those frames are
reprojected into the reference view, where small heatmap patches are
stamped at the landing pixels. Aggregating the stamped masks with the
reference heatmap and re-running non-maximum suppression yields the
label set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpecError, ShapeError
from .geometry import ReprojectionParams, reproject_points

AGGREGATE_MODES = ("max", "mean", "sum")


def nms(heatmap: np.ndarray, radius: int, threshold: float) -> np.ndarray:
    """Greedy non-maximum suppression; returns (N, 2) integer (x, y) points.

    Candidates at or above ``threshold`` are visited in descending score
    order (ties broken row-major); each kept point suppresses its
    (2*radius+1)^2 neighborhood. Output keeps the visit order, so scores
    are descending.
    """
    heatmap = np.asarray(heatmap, dtype=np.float64)
    if heatmap.ndim != 2:
        raise ShapeError(f"heatmap must be 2D, got shape {heatmap.shape}")
    if radius < 1:
        raise InvalidSpecError(f"nms radius must be >= 1, got {radius}")
    ys, xs = np.nonzero(heatmap >= threshold)
    if len(ys) == 0:
        return np.zeros((0, 2), dtype=int)
    scores = heatmap[ys, xs]
    order = np.lexsort((xs, ys, -scores))
    h, w = heatmap.shape
    suppressed = np.zeros((h, w), dtype=bool)
    kept = []
    for i in order:
        y, x = int(ys[i]), int(xs[i])
        if suppressed[y, x]:
            continue
        kept.append((x, y))
        suppressed[max(0, y - radius):y + radius + 1,
                   max(0, x - radius):x + radius + 1] = True
    return np.array(kept, dtype=int)


@dataclass(frozen=True)
class AdaptationParams:
    """Window shape and detection settings for pseudo-label generation."""

    window_len: int = 20
    n_sampled: int = 14
    nms_radius: int = 4
    patch: int = 3
    threshold: float = 0.015
    aggregate: str = "max"
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.n_sampled < self.window_len:
            raise InvalidSpecError(
                f"need 0 <= n_sampled < window_len, got {self.n_sampled}/{self.window_len}")
        if self.patch < 1 or self.patch % 2 == 0:
            raise InvalidSpecError(f"patch side must be odd and >= 1, got {self.patch}")
        if self.nms_radius < 1:
            raise InvalidSpecError(f"nms radius must be >= 1, got {self.nms_radius}")
        if not 0.0 <= self.threshold <= 1.0:
            raise InvalidSpecError(f"threshold must be in [0, 1], got {self.threshold}")
        if self.aggregate not in AGGREGATE_MODES:
            raise InvalidSpecError(f"aggregate must be one of {AGGREGATE_MODES}")


@dataclass(frozen=True)
class PseudoLabels:
    """Integer pixel labels for one reference frame."""

    points: np.ndarray  # (N, 2) int (x, y)
    frame_index: int


def _stamp_patch(mask: np.ndarray, src: np.ndarray, sx: int, sy: int,
                 dx: int, dy: int, radius: int) -> None:
    """Copy the (2r+1)^2 neighborhood of (sx, sy) in src onto mask at (dx, dy).

    Both neighborhoods are clipped at their image borders; overlapping
    stamps combine by per-pixel maximum so stamp order cannot matter.
    """
    h, w = mask.shape
    y0, y1 = -radius, radius + 1
    x0, x1 = -radius, radius + 1
    y0 = max(y0, -sy, -dy)
    x0 = max(x0, -sx, -dx)
    y1 = min(y1, src.shape[0] - sy, h - dy)
    x1 = min(x1, src.shape[1] - sx, w - dx)
    if y0 >= y1 or x0 >= x1:
        return
    piece = src[sy + y0:sy + y1, sx + x0:sx + x1]
    region = mask[dy + y0:dy + y1, dx + x0:dx + x1]
    np.maximum(region, piece, out=region)


def pseudo_labels_for_frame(views, ref: int, detector, params: AdaptationParams,
                            reproj: ReprojectionParams) -> PseudoLabels:
    """Labels for ``views[ref]`` from its window of following frames.

    ``views`` must expose ``views[i]`` as RenderedView and support len().
    The sampled-frame choice is seeded per (seed, ref), so every reference
    frame is reproducible in isolation.
    """
    n = len(views)
    if ref < 0 or ref + params.window_len > n:
        raise InvalidSpecError(
            f"window [{ref}, {ref + params.window_len}) exceeds {n} frames")
    rng = np.random.default_rng([params.seed, ref])
    others = np.arange(ref + 1, ref + params.window_len)
    picked = sorted(rng.choice(others, size=params.n_sampled, replace=False).tolist())

    ref_view = views[ref]
    heat = np.asarray(detector(ref_view.image), dtype=np.float64)
    if heat.shape != (ref_view.cam.height, ref_view.cam.width):
        raise ShapeError("detector heatmap shape does not match the image")
    pr = params.patch // 2
    masks = []
    for r in picked:
        view_r = views[r]
        heat_r = np.asarray(detector(view_r.image), dtype=np.float64)
        points = nms(heat_r, params.nms_radius, params.threshold)
        if len(points) == 0:
            masks.append(np.zeros_like(heat))
            continue
        targets, _, reasons = reproject_points(points.astype(np.float64),
                                               view_r, ref_view, reproj)
        mask = np.zeros_like(heat)
        for (sx, sy), target, reason in zip(points, targets, reasons):
            if reason != 0:
                continue
            dx, dy = (int(v) for v in np.rint(target))
            _stamp_patch(mask, heat_r, int(sx), int(sy), dx, dy, pr)
        masks.append(mask)

    if params.aggregate == "max" or not masks:
        agg = heat.copy()
        for m in masks:
            np.maximum(agg, m, out=agg)
    elif params.aggregate == "mean":
        agg = (heat + sum(masks)) / (1.0 + len(masks))
    else:
        agg = np.clip(heat + sum(masks), 0.0, 1.0)
    return PseudoLabels(nms(agg, params.nms_radius, params.threshold), ref)


def generate_pseudo_labels(views, detector, params: AdaptationParams,
                           reproj: ReprojectionParams) -> list[PseudoLabels]:
    """Pseudo-labels for every reference frame with a full window after it."""
    n = len(views)
    if n < params.window_len:
        raise InvalidSpecError(f"need at least {params.window_len} frames, have {n}")
    return [pseudo_labels_for_frame(views, i, detector, params, reproj)
            for i in range(n - params.window_len + 1)]


def write_labels(labels, path) -> None:
    """One `frame_idx x y` line per label point."""
    with open(path, "w") as f:
        for lab in labels:
            for x, y in lab.points:
                f.write(f"{lab.frame_index} {x} {y}\n")


def read_labels(path) -> list[PseudoLabels]:
    by_frame: dict[int, list] = {}
    with open(path) as f:
        for line in f:
            if not line.strip():
                continue
            idx, x, y = (int(v) for v in line.split())
            by_frame.setdefault(idx, []).append((x, y))
    return [PseudoLabels(np.array(pts, dtype=int), idx)
            for idx, pts in sorted(by_frame.items())]
