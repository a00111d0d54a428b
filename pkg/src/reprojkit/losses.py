"""Detector and descriptor training losses with analytic gradients.

Both losses are plain numpy and return exact gradients, checked against
central finite differences in the test suite. The descriptor loss treats
the descriptor entries as free variables: re-normalizing onto the unit
sphere is the caller's projection step, so no normalization Jacobian
appears in the gradient. At hinge kinks the subgradient 0 is used (a
margin counts as active only when strictly violated).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .correspondence import CellCorrespondence
from .errors import InvalidSpecError, ShapeError


@dataclass(frozen=True)
class DescriptorLossParams:
    positive_margin: float = 1.0
    negative_margin: float = 0.2
    positive_weight: float = 250.0

    def __post_init__(self):
        if not 0.0 <= self.negative_margin < self.positive_margin <= 1.0:
            raise InvalidSpecError(
                f"need 0 <= negative_margin < positive_margin <= 1, got "
                f"{self.negative_margin}, {self.positive_margin}")
        if not self.positive_weight > 0:
            raise InvalidSpecError(f"positive_weight must be > 0, got {self.positive_weight}")


def validate_descriptor_grid(grid: np.ndarray, atol: float = 1e-6) -> np.ndarray:
    """Check a (Hc, Wc, D) grid of unit descriptors."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 3:
        raise ShapeError(f"descriptor grid must be (Hc, Wc, D), got {grid.shape}")
    norms = np.linalg.norm(grid, axis=-1)
    if np.any(np.abs(norms - 1.0) > atol):
        raise InvalidSpecError("descriptor grid entries must be unit L2 norm")
    return grid


def hinge_term(d: np.ndarray, d2: np.ndarray, s: int, params: DescriptorLossParams) -> float:
    """Weighted positive/negative hinge on the descriptor inner product."""
    sim = float(np.dot(np.asarray(d, dtype=np.float64), np.asarray(d2, dtype=np.float64)))
    pos = params.positive_weight * s * max(0.0, params.positive_margin - sim)
    neg = (1 - s) * max(0.0, sim - params.negative_margin)
    return pos + neg


def _dense_indicator(S, src_shape, dst_shape) -> np.ndarray:
    if isinstance(S, CellCorrespondence):
        if S.src_cells != src_shape or S.dst_cells != dst_shape:
            raise ShapeError(
                f"indicator cells {S.src_cells}x{S.dst_cells} do not match "
                f"grids {src_shape}x{dst_shape}")
        return S.to_dense().reshape(np.prod(src_shape), np.prod(dst_shape))
    S = np.asarray(S, dtype=bool)
    flat = (int(np.prod(src_shape)), int(np.prod(dst_shape)))
    if S.shape != src_shape + dst_shape and S.shape != flat:
        raise ShapeError(f"indicator shape {S.shape} does not match grids")
    return S.reshape(flat)


def descriptor_loss(grid1: np.ndarray, grid2: np.ndarray, S,
                    params: DescriptorLossParams = DescriptorLossParams()):
    """Mean hinge loss over all cell pairs and its gradients.

    Returns ``(loss, grad1, grad2)`` where the gradients have the grids'
    shapes. ``S`` may be a CellCorrespondence or a dense boolean array of
    shape (Hc, Wc, Hc2, Wc2).
    """
    grid1 = np.asarray(grid1, dtype=np.float64)
    grid2 = np.asarray(grid2, dtype=np.float64)
    if grid1.ndim != 3 or grid2.ndim != 3:
        raise ShapeError("descriptor grids must be (Hc, Wc, D)")
    if grid1.shape[-1] != grid2.shape[-1]:
        raise ShapeError(
            f"descriptor dims differ: {grid1.shape[-1]} vs {grid2.shape[-1]}")
    s1, s2 = grid1.shape[:2], grid2.shape[:2]
    ind = _dense_indicator(S, s1, s2)
    d1 = grid1.reshape(-1, grid1.shape[-1])
    d2 = grid2.reshape(-1, grid2.shape[-1])
    n = d1.shape[0] * d2.shape[0]

    sims = d1 @ d2.T
    pos_active = ind & (sims < params.positive_margin)
    neg_active = ~ind & (sims > params.negative_margin)
    # compensated sums: order-independent and correctly rounded, so a
    # grid of identical contributions yields the contribution itself
    loss = (params.positive_weight * math.fsum(params.positive_margin - sims[pos_active])
            + math.fsum(sims[neg_active] - params.negative_margin)) / n
    coeff = np.where(pos_active, -params.positive_weight, 0.0) + np.where(neg_active, 1.0, 0.0)
    grad1 = (coeff @ d2 / n).reshape(grid1.shape)
    grad2 = (coeff.T @ d1 / n).reshape(grid2.shape)
    return float(loss), grad1, grad2


def detector_targets(labels: np.ndarray, grid_shape: tuple[int, int],
                     cell: int = 8) -> np.ndarray:
    """Per-cell class targets from integer label pixels.

    Class = flattened offset of the label inside its cell; cells without
    a label get the dustbin class (cell^2, the 65th for cell=8). When
    several labels share a cell the row-major smallest (y, then x) wins.
    """
    hc, wc = grid_shape
    labels = np.asarray(labels, dtype=int).reshape(-1, 2)
    dustbin = cell * cell
    targets = np.full(grid_shape, dustbin, dtype=int)
    if len(labels) == 0:
        return targets
    x, y = labels[:, 0], labels[:, 1]
    if np.any((x < 0) | (x >= wc * cell) | (y < 0) | (y >= hc * cell)):
        raise InvalidSpecError("label outside the cell grid")
    order = np.lexsort((x, y))
    taken = np.zeros(grid_shape, dtype=bool)
    for i in order:
        cy, cx = y[i] // cell, x[i] // cell
        if not taken[cy, cx]:
            taken[cy, cx] = True
            targets[cy, cx] = (y[i] % cell) * cell + (x[i] % cell)
    return targets


def detector_loss(logits: np.ndarray, labels, cell: int = 8):
    """Mean per-cell softmax cross-entropy and its gradient.

    ``logits`` is (Hc, Wc, cell^2 + 1); ``labels`` is an (N, 2) integer
    pixel array or a PseudoLabels-like object with ``.points``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 3 or logits.shape[-1] != cell * cell + 1:
        raise ShapeError(
            f"logits must be (Hc, Wc, {cell * cell + 1}), got {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise InvalidSpecError("logits must be finite")
    points = getattr(labels, "points", labels)
    targets = detector_targets(points, logits.shape[:2], cell)

    shifted = logits - logits.max(axis=-1, keepdims=True)
    expn = np.exp(shifted)
    softmax = expn / expn.sum(axis=-1, keepdims=True)
    log_z = np.log(expn.sum(axis=-1)) + logits.max(axis=-1)
    hc, wc = logits.shape[:2]
    gy, gx = np.meshgrid(np.arange(hc), np.arange(wc), indexing="ij")
    picked = logits[gy, gx, targets]
    n_cells = hc * wc
    loss = float(np.sum(log_z - picked) / n_cells)
    grad = softmax.copy()
    grad[gy, gx, targets] -= 1.0
    return loss, grad / n_cells
