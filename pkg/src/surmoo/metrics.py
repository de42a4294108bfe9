"""Multi-objective quality indicators and surrogate accuracy.

Hypervolume is computed exactly by a dimension-sweep recursion (slicing on
the last objective), practical for up to six objectives. Normalization uses
a shared nadir: objectives are divided component-wise by the component-wise
maximum across everything being compared, and the reference point sits at
1.1 in every normalized coordinate, so the theoretical maximum normalized
hypervolume is 1.1^q.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import dominates

__all__ = [
    "NormalizationContext",
    "hypervolume",
    "normalized_hypervolume",
    "normalized_hypervolumes",
    "shared_normalization",
    "hv_auc",
    "igd",
    "epsilon_additive",
    "set_coverage",
    "nrmse",
    "REFERENCE_FACTOR",
    "HV_MAX_OBJECTIVES",
]

REFERENCE_FACTOR = 1.1
HV_MAX_OBJECTIVES = 6


def _as_front(points) -> np.ndarray:
    front = np.atleast_2d(np.asarray(points, dtype=float))
    if np.any(np.isnan(front)):
        raise ValueError("fronts must be NaN-free")
    return front


def _nondominated(points: np.ndarray) -> np.ndarray:
    keep = []
    for i, p in enumerate(points):
        if not any(
            dominates(points[j], p) for j in range(points.shape[0]) if j != i
        ):
            keep.append(i)
    return points[keep]


def hypervolume(front, reference) -> float:
    """Exact Lebesgue measure of the region dominated by ``front`` up to
    ``reference``. Points beyond the reference are clipped to it first; an
    empty front has volume zero."""
    reference = np.asarray(reference, dtype=float)
    front = np.atleast_2d(np.asarray(front, dtype=float))
    if front.size == 0:
        return 0.0
    front = _as_front(front)
    q = front.shape[1]
    if q != reference.shape[0]:
        raise ValueError("front and reference dimensions differ")
    if q > HV_MAX_OBJECTIVES:
        raise ValueError(
            f"exact hypervolume supports up to {HV_MAX_OBJECTIVES} objectives"
        )
    front = np.minimum(front, reference)
    return _hv_recursive(np.unique(front, axis=0), reference)


def _hv_recursive(points: np.ndarray, reference: np.ndarray) -> float:
    q = points.shape[1]
    if points.shape[0] == 0:
        return 0.0
    if q == 1:
        return float(reference[0] - points[:, 0].min())
    # sweep the last objective: between successive cut levels the dominated
    # cross-section is that of the points at or below the slab
    order = np.argsort(points[:, -1], kind="stable")
    pts = points[order]
    levels = pts[:, -1]
    volume = 0.0
    for i in range(pts.shape[0]):
        upper = levels[i + 1] if i + 1 < pts.shape[0] else reference[-1]
        thickness = upper - levels[i]
        if thickness <= 0.0:
            continue
        slab = _nondominated(pts[: i + 1, :-1])
        volume += thickness * _hv_recursive(slab, reference[:-1])
    return volume


@dataclass(frozen=True)
class NormalizationContext:
    """Shared-nadir normalization state.

    ``shift`` is zero unless some nadir component was non-positive, in which
    case objectives are first shifted by their observed component minimum so
    every value is non-negative before dividing.
    """

    nadir: np.ndarray
    shift: np.ndarray

    @property
    def reference(self) -> np.ndarray:
        return np.full_like(self.nadir, REFERENCE_FACTOR)

    def normalize(self, points) -> np.ndarray:
        pts = _as_front(points)
        shifted = pts - self.shift
        divisor = np.where(self.nadir > 0.0, self.nadir, 1.0)
        return shifted / divisor


def shared_normalization(fronts) -> NormalizationContext:
    """Build the normalization context across all compared fronts: the nadir
    is the component-wise maximum over every point supplied."""
    stacked = np.vstack([_as_front(f) for f in fronts if np.size(f)])
    if stacked.size == 0:
        raise ValueError("no points to normalize against")
    nadir = stacked.max(axis=0)
    shift = np.zeros_like(nadir)
    if np.any(nadir <= 0.0):
        mins = stacked.min(axis=0)
        shift = np.where(nadir <= 0.0, mins, 0.0)
        nadir = (stacked - shift).max(axis=0)
    return NormalizationContext(nadir, shift)


def normalized_hypervolume(front, context: NormalizationContext) -> float:
    """Hypervolume of the normalized front against the 1.1 reference point.
    The maximum attainable value is 1.1^q. Empty fronts score zero."""
    if np.size(front) == 0:
        return 0.0
    unit = context.normalize(front)
    return hypervolume(unit, context.reference)


def normalized_hypervolumes(fronts) -> list[float]:
    """Normalized hypervolume per front under one shared nadir."""
    context = shared_normalization(fronts)
    return [normalized_hypervolume(front, context) for front in fronts]


def hv_auc(hv_per_epoch) -> float:
    """Trapezoidal area under a hypervolume-vs-epoch series."""
    series = np.asarray(hv_per_epoch, dtype=float)
    if series.size < 2:
        raise ValueError("need at least two epochs")
    return float(np.trapezoid(series))


def igd(approximation, reference) -> float:
    """Mean distance from each reference point to its nearest
    approximation-front point."""
    a = _as_front(approximation)
    r = _as_front(reference)
    diff = r[:, None, :] - a[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    return float(dist.min(axis=1).mean())


def epsilon_additive(approximation, reference) -> float:
    """Smallest additive shift making ``approximation`` weakly dominate
    every point of ``reference``; non-positive means it already does."""
    a = _as_front(approximation)
    b = _as_front(reference)
    gaps = (a[:, None, :] - b[None, :, :]).max(axis=2)  # shift needed a -> b
    return float(gaps.min(axis=0).max())


def set_coverage(a_front, b_front) -> float:
    """Fraction of ``b_front`` weakly dominated by ``a_front`` (equality
    counts as covered)."""
    a = _as_front(a_front)
    b = _as_front(b_front)
    le_all = np.all(a[:, None, :] <= b[None, :, :], axis=2)
    lt_any = np.any(a[:, None, :] < b[None, :, :], axis=2)
    equal = np.all(a[:, None, :] == b[None, :, :], axis=2)
    covered = np.any(le_all & (lt_any | equal), axis=0)
    return float(covered.mean())


def nrmse(true_values, predicted) -> float:
    """Mean over objectives of RMSE divided by the observed range.

    Zero-range objectives cannot be normalized; they are excluded from the
    mean with a warning.
    """
    y = np.atleast_2d(np.asarray(true_values, dtype=float))
    y_hat = np.atleast_2d(np.asarray(predicted, dtype=float))
    if y.shape != y_hat.shape:
        raise ValueError("shape mismatch between true and predicted values")
    if y.shape[0] < 2:
        raise ValueError("need at least two samples")
    ranges = y.max(axis=0) - y.min(axis=0)
    usable = ranges > 0.0
    if not np.all(usable):
        warnings.warn(
            "objectives with zero range excluded from NRMSE", stacklevel=2
        )
    if not np.any(usable):
        return float("nan")
    rmse = np.sqrt(((y - y_hat) ** 2).mean(axis=0))
    return float((rmse[usable] / ranges[usable]).mean())
