"""Gradient-based feasibility solving on the frozen surrogate.

A candidate batch is refined by iterative descent against a composite loss
built from up to four targets: a hypervolume-style objective term against a
dynamic nadir, binary focal cross-entropy pushing constraint probabilities
toward all-feasible, a pairwise-distance exploration term, and a
non-negativity penalty. When several targets are active their gradients are
rescaled to the L2 norm of the first before summing. Coordinates are clipped
to the bounds after every step; descent stops at the iteration cap or when
the trailing loss window plateaus.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, bce_with_logits, prod_columns, take_column
from .core import ParameterSpace, Population, RandomStream
from .moea import RankedPopulation
from .surrogate import JointSurrogate, normalize_inputs

__all__ = [
    "FeasolveConfig",
    "DescentTrace",
    "TraceStep",
    "loss_objective",
    "loss_constraint",
    "loss_distance",
    "loss_zero",
    "balance_gradients",
    "make_feasible",
    "hybrid_epoch_split",
    "select_diverse",
    "trace_diversity_filter",
]

EPS = 1e-12
TARGETS = ("objective", "constraint", "distance", "zero")


@dataclass
class FeasolveConfig:
    targets: tuple[str, ...] = ("objective", "constraint")
    max_iters: int = 1000
    learning_rate: float = 0.001
    plateau_window: int = 50
    plateau_ratio: float = 0.01
    reference_factor: float = 1.1
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25

    def __post_init__(self):
        self.targets = tuple(self.targets)
        if not self.targets:
            raise ValueError("at least one descent target is required")
        unknown = set(self.targets) - set(TARGETS)
        if unknown:
            raise ValueError(f"unknown descent targets: {sorted(unknown)}")


@dataclass
class TraceStep:
    step: int
    candidates: np.ndarray          # batch snapshot at iteration start
    loss: float                     # composite loss used for this step
    pred_objectives: np.ndarray | None
    pred_feasibility: np.ndarray | None


@dataclass
class DescentTrace:
    steps: list[TraceStep] = field(default_factory=list)
    terminated_early: bool = False
    aborted: bool = False

    def __len__(self) -> int:
        return len(self.steps)


# ----------------------------------------------------------------------
# composite-loss targets
# ----------------------------------------------------------------------


def _lift(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(np.asarray(value, dtype=float))


def loss_objective(y_pred, train_objectives, reference_factor: float = 1.1) -> Tensor:
    """Negated dominated-hypervolume proxy against a dynamic nadir.

    nadir_j is the max of the batch predictions and the training history per
    objective; each candidate contributes the product over objectives of
    max(r - y_ij / (nadir_j + eps), 0).
    """
    y_pred = _lift(y_pred)
    train_y = np.atleast_2d(np.asarray(train_objectives, dtype=float))
    train_max = Tensor(train_y.max(axis=0))
    from .autodiff import maximum

    nadir = maximum(y_pred.max(axis=0), train_max)
    scaled = y_pred / (nadir + EPS)
    clamped = (Tensor(reference_factor) - scaled).relu()
    return -prod_columns(clamped).sum()


def loss_constraint(c_probs, gamma: float = 2.0, alpha: float = 0.25) -> Tensor:
    """Mean binary focal cross-entropy against the all-feasible target:
    per entry, -alpha * (1 - c)^gamma * log(c)."""
    c = _lift(c_probs)
    return (alpha * (1.0 - c) ** gamma * (-c.log())).mean()


def loss_constraint_logits(c_logits: Tensor, gamma: float = 2.0, alpha: float = 0.25) -> Tensor:
    """Focal cross-entropy parameterized by logits; identical value to
    :func:`loss_constraint` at c = sigmoid(z) but numerically stable for
    saturated probabilities."""
    # -log sigmoid(z) = softplus(-z); 1 - sigmoid(z) = sigmoid(-z)
    neg = -c_logits
    return (alpha * neg.sigmoid() ** gamma * neg.softplus()).mean()


def loss_distance(candidates_unit, train_unit) -> Tensor:
    """Negated mean pairwise Euclidean distance between bounds-normalized
    candidates and bounds-normalized training inputs."""
    x = _lift(candidates_unit)
    t = np.atleast_2d(np.asarray(train_unit, dtype=float))
    diff = x.reshape(x.shape[0], 1, x.shape[1]) - Tensor(t[None, :, :])
    dist = (diff * diff).sum(axis=2).sqrt()
    return -dist.mean()


def loss_zero(y_pred) -> Tensor:
    """Squared penalty for negative predicted objective values."""
    y = _lift(y_pred)
    return ((-y).relu() ** 2).sum()


def balance_gradients(grads: list[np.ndarray]) -> np.ndarray:
    """Sum gradients after rescaling each to the L2 norm of the first."""
    if not grads:
        raise ValueError("no gradients to balance")
    ref_norm = float(np.linalg.norm(grads[0]))
    total = np.zeros_like(grads[0])
    for g in grads:
        total = total + (ref_norm / (float(np.linalg.norm(g)) + EPS)) * g
    return total


# ----------------------------------------------------------------------
# descent
# ----------------------------------------------------------------------


def _target_gradient(
    target: str,
    x_value: np.ndarray,
    model: JointSurrogate,
    cfg: FeasolveConfig,
    train_y: np.ndarray,
    train_unit: np.ndarray,
) -> tuple[np.ndarray, float]:
    """Gradient of one descent target at the current batch, plus its value."""
    leaf = Tensor(x_value, requires_grad=True)
    if target == "distance":
        unit = (leaf - Tensor(model.space.lower)) * Tensor(1.0 / model.space.span)
        loss = loss_distance(unit, train_unit)
    else:
        y_out, c_out = model.predict_graph(leaf)
        if target == "objective":
            if y_out is None:
                raise ValueError("objective target requires an objective head")
            loss = loss_objective(y_out, train_y, cfg.reference_factor)
        elif target == "constraint":
            if c_out is None:
                raise ValueError("constraint target requires a constraint head")
            loss = loss_constraint_logits(c_out, cfg.focal_gamma, cfg.focal_alpha)
        elif target == "zero":
            if y_out is None:
                raise ValueError("zero target requires an objective head")
            loss = loss_zero(y_out)
        else:
            raise ValueError(f"unknown descent target {target!r}")
    value = loss.item()
    if not np.isfinite(value):
        return np.full_like(x_value, np.nan), value
    loss.backward()
    return leaf.grad, value


def _plateaued(losses: list[float], window: int, ratio: float) -> bool:
    if len(losses) < window:
        return False
    recent = np.array(losses[-window:])
    q75, q25 = np.percentile(recent, [75.0, 25.0])
    iqr = q75 - q25
    median = np.median(recent)
    return iqr / max(abs(median), EPS) < ratio


def make_feasible(
    candidates: Population,
    model: JointSurrogate,
    cfg: FeasolveConfig,
    train_objectives: np.ndarray | None = None,
    train_inputs: np.ndarray | None = None,
) -> tuple[Population, DescentTrace]:
    """Steer a candidate batch by descent on the frozen surrogate.

    ``train_objectives`` (history objective values, NaN-free) feed the
    dynamic nadir of the objective target; ``train_inputs`` feed the
    exploration distance term. Uses Adam, or plain SGD when the
    non-negativity target runs alone. Returns the refined batch and the full
    descent trace.
    """
    space = model.space
    x = np.array(candidates.members, dtype=float)
    train_y = (
        np.atleast_2d(np.asarray(train_objectives, dtype=float))
        if train_objectives is not None and np.size(train_objectives)
        else np.zeros((1, model.q))
    )
    train_unit = (
        normalize_inputs(np.atleast_2d(train_inputs), space)
        if train_inputs is not None and np.size(train_inputs)
        else np.zeros((1, space.dim))
    )

    use_sgd = cfg.targets == ("zero",)
    m_state = np.zeros_like(x)
    v_state = np.zeros_like(x)
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8

    trace = DescentTrace()
    losses: list[float] = []
    for step in range(cfg.max_iters):
        grads: list[np.ndarray] = []
        total_loss = 0.0
        finite = True
        for target in cfg.targets:
            g, value = _target_gradient(target, x, model, cfg, train_y, train_unit)
            if not np.isfinite(value):
                finite = False
                break
            grads.append(g)
            total_loss += value
        if not finite:
            trace.aborted = True
            break

        y_pred, c_pred = model.predict(x)
        trace.steps.append(
            TraceStep(step, x.copy(), total_loss, y_pred, c_pred)
        )
        losses.append(total_loss)

        combined = balance_gradients(grads) if len(grads) > 1 else grads[0]
        if use_sgd:
            x = x - cfg.learning_rate * combined
        else:
            t = step + 1
            m_state = beta1 * m_state + (1.0 - beta1) * combined
            v_state = beta2 * v_state + (1.0 - beta2) * combined * combined
            m_hat = m_state / (1.0 - beta1**t)
            v_hat = v_state / (1.0 - beta2**t)
            x = x - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + adam_eps)
        x = np.clip(x, space.lower, space.upper)

        if _plateaued(losses, cfg.plateau_window, cfg.plateau_ratio):
            trace.terminated_early = True
            break
    return Population(x), trace


def hybrid_epoch_split(ranked: RankedPopulation) -> tuple[np.ndarray, np.ndarray]:
    """Partition a rank-sorted population: the top half is preserved
    untouched, the rest is routed to descent. Odd sizes keep the extra
    member on the elite side."""
    ordered = ranked.sorted_members()
    n_elite = int(np.ceil(ordered.shape[0] / 2))
    return ordered[:n_elite], ordered[n_elite:]


# ----------------------------------------------------------------------
# trace diversity filtering
# ----------------------------------------------------------------------


def select_diverse(predictions: np.ndarray, k: int) -> np.ndarray:
    """Indices of k diverse points under the iterative-removal rule.

    Predictions are min-max normalized per objective once; then the point
    with the smallest minimum pairwise Euclidean distance to any remaining
    point is removed until k remain. Distance ties remove the smaller
    (earlier) index first.
    """
    preds = np.atleast_2d(np.asarray(predictions, dtype=float))
    n = preds.shape[0]
    if k >= n:
        return np.arange(n)
    if k < 1:
        raise ValueError("k must be at least 1")
    span = preds.max(axis=0) - preds.min(axis=0)
    span = np.where(span > 0.0, span, 1.0)
    unit = (preds - preds.min(axis=0)) / span
    diff = unit[:, None, :] - unit[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    np.fill_diagonal(dist, np.inf)

    alive = np.ones(n, dtype=bool)
    nearest_idx = dist.argmin(axis=1)
    nearest_val = dist[np.arange(n), nearest_idx]
    for _ in range(n - k):
        # argmin returns the first (earliest-index) minimizer on ties
        removed = int(np.argmin(np.where(alive, nearest_val, np.inf)))
        alive[removed] = False
        dist[:, removed] = np.inf
        dist[removed, :] = np.inf
        for i in np.nonzero(alive & (nearest_idx == removed))[0]:
            nearest_idx[i] = int(np.argmin(dist[i]))
            nearest_val[i] = dist[i, nearest_idx[i]]
    return np.nonzero(alive)[0]


def trace_diversity_filter(trace: DescentTrace, k: int, pool_cap: int = 512) -> np.ndarray:
    """Select k diverse parameter points along a descent trace.

    Every (step, candidate) snapshot with predicted objectives is a
    selectable point; diversity is measured in normalized predicted-objective
    space. Asking for more points than the trace holds returns all of them.

    The exact removal loop is quadratic in memory, so long traces are first
    thinned to at most ``pool_cap`` points by an even stride over steps (the
    final step always stays in the pool).
    """
    steps = [entry for entry in trace.steps if entry.pred_objectives is not None]
    if not steps:
        return np.empty((0, 0))
    batch = steps[0].candidates.shape[0]
    if batch * len(steps) > pool_cap:
        target_steps = max(1, pool_cap // batch)
        chosen = np.unique(
            np.linspace(0, len(steps) - 1, target_steps).round().astype(int)
        )
        steps = [steps[i] for i in chosen]
    points: list[np.ndarray] = []
    preds: list[np.ndarray] = []
    for entry in steps:
        for cand, pred in zip(entry.candidates, entry.pred_objectives):
            points.append(cand)
            preds.append(pred)
    points_arr = np.array(points)
    if k >= len(points):
        return points_arr
    keep = select_diverse(np.array(preds), k)
    return points_arr[keep]
