"""Shared brute-force oracles used across the suite.

These are deliberately naive reimplementations (pairwise loops, explicit
inclusion-exclusion) kept independent of the library code paths they check.
"""

import numpy as np
import pytest


def oracle_dominates(a, b) -> bool:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return bool(np.all(a <= b) and np.any(a < b))


def oracle_nondominated_indices(objectives) -> list:
    objs = np.atleast_2d(np.asarray(objectives, dtype=float))
    keep = []
    for i in range(objs.shape[0]):
        if not any(
            oracle_dominates(objs[j], objs[i]) for j in range(objs.shape[0]) if j != i
        ):
            keep.append(i)
    return keep


def oracle_fronts(objectives) -> list:
    """Peel non-dominated sets one at a time."""
    objs = np.atleast_2d(np.asarray(objectives, dtype=float))
    remaining = list(range(objs.shape[0]))
    fronts = []
    while remaining:
        sub = objs[remaining]
        nd_local = oracle_nondominated_indices(sub)
        front = [remaining[i] for i in nd_local]
        fronts.append(sorted(front))
        remaining = [i for i in remaining if i not in front]
    return fronts


def oracle_hypervolume_inclusion_exclusion(front, reference) -> float:
    """Exact hypervolume by inclusion-exclusion over all point subsets.

    Exponential in the front size; fine for the <= 12-point cases it
    verifies.
    """
    from itertools import combinations

    front = np.atleast_2d(np.asarray(front, dtype=float))
    reference = np.asarray(reference, dtype=float)
    front = np.minimum(front, reference)
    n = front.shape[0]
    total = 0.0
    for size in range(1, n + 1):
        for subset in combinations(range(n), size):
            corner = front[list(subset)].max(axis=0)
            vol = float(np.prod(np.maximum(reference - corner, 0.0)))
            total += vol if size % 2 == 1 else -vol
    return total


def oracle_diversity_filter(predictions, k) -> set:
    """Literal simulation of the removal loop with earlier-index tie-breaks."""
    preds = np.atleast_2d(np.asarray(predictions, dtype=float))
    n = preds.shape[0]
    span = preds.max(axis=0) - preds.min(axis=0)
    span = np.where(span > 0.0, span, 1.0)
    unit = (preds - preds.min(axis=0)) / span
    alive = list(range(n))
    while len(alive) > k:
        best_idx = None
        best_dist = np.inf
        for i in alive:
            nearest = min(
                float(np.linalg.norm(unit[i] - unit[j])) for j in alive if j != i
            )
            if nearest < best_dist:  # strict: ties keep the earliest index
                best_dist = nearest
                best_idx = i
        alive.remove(best_idx)
    return set(alive)


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
