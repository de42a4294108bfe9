"""Joint differentiable surrogate: a residual-MLP backbone with a linear
objective head and a sigmoid constraint head, trained on all accumulated
evaluations with cross-validated automatic epoch selection.

The model is differentiable end to end, including the bounds input
normalizer and the inverse output transform, so exact input gradients are
available for feasibility solving and sensitivity analysis. Residual blocks
use layer normalization (not batch statistics) so single-point inference and
input gradients are batch-independent, and the default hidden activation is
softplus so gradients are smooth everywhere; a ReLU mode is available.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from scipy.special import expit

from .autodiff import Tensor, bce_with_logits, layer_norm, take_column
from .core import ParameterSpace, RandomStream

__all__ = [
    "SurrogateConfig",
    "TrainingSchedule",
    "OutputNormalizer",
    "JointSurrogate",
    "normalize_inputs",
    "epoch_budget",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]

LAYER_NORM_EPS = 1e-5
ADAM_EPS = 1e-8
MODES = ("o", "c", "c+o")
OBJECTIVE_LOSSES = ("mse", "huber", "log_cosh", "weighted_log_cosh", "distance_mse", "relative")


@dataclass
class SurrogateConfig:
    mode: str = "c+o"
    blocks: int = 2
    block_dim: int = 192
    hidden_multiplier: float = 2.0
    dropout: tuple[float, float] = (0.15, 0.0)
    learning_rate: float = 0.001
    batch_size: int = 2048
    folds: int = 3
    activation: str = "softplus"
    objective_loss: str = "mse"
    outlier_threshold: float | None = None
    exclude_infeasible: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.blocks < 1 or self.block_dim < 1:
            raise ValueError("blocks and block_dim must be positive")
        if self.activation not in ("softplus", "relu"):
            raise ValueError("activation must be 'softplus' or 'relu'")
        if self.objective_loss not in OBJECTIVE_LOSSES:
            raise ValueError(f"objective_loss must be one of {OBJECTIVE_LOSSES}")
        self.dropout = tuple(float(p) for p in self.dropout)

    @property
    def hidden_dim(self) -> int:
        return int(self.hidden_multiplier * self.block_dim)


def epoch_budget(n_samples: int) -> tuple[int, int, int]:
    """(E_max, delta_E, patience) for a training-set size."""
    e_max = max(25, min(10**8 // n_samples, 10_000))
    delta_e = max(10, e_max // 10)
    patience = min(250, e_max)
    return e_max, delta_e, patience


@dataclass
class TrainingSchedule:
    e_max: int
    delta_e: int
    patience: int
    fold_stop_epochs: list[int]
    final_epochs: int


def normalize_inputs(x: np.ndarray, space: ParameterSpace) -> np.ndarray:
    """Map points into the unit box via bounds normalization."""
    return (np.asarray(x, dtype=float) - space.lower) / space.span


class OutputNormalizer:
    """Range scheme for objective targets.

    Forward: per-objective min-max to [0, 1] (clipped), affine rescale of the
    unit value onto the shared interval [max_j y_min_j, max_j y_max_j], then
    log1p. The inverse unclips nothing, so in-range values round-trip exactly
    and out-of-range head outputs extrapolate smoothly. Degenerate objectives
    (zero range) map to constant 0 and invert to their single value.
    """

    def __init__(self, y_min: np.ndarray, y_max: np.ndarray):
        self.y_min = np.asarray(y_min, dtype=float)
        self.y_max = np.asarray(y_max, dtype=float)
        self.col_span = self.y_max - self.y_min
        self.shared_min = float(np.max(self.y_min))
        self.shared_max = float(np.max(self.y_max))
        self.shared_span = self.shared_max - self.shared_min

    @classmethod
    def fit(cls, objectives: np.ndarray) -> "OutputNormalizer":
        objectives = np.atleast_2d(np.asarray(objectives, dtype=float))
        if np.any(np.isnan(objectives)):
            raise ValueError("NaN rows must be removed before fitting the normalizer")
        return cls(objectives.min(axis=0), objectives.max(axis=0))

    def transform(self, objectives: np.ndarray) -> np.ndarray:
        y = np.atleast_2d(np.asarray(objectives, dtype=float))
        span = np.where(self.col_span > 0.0, self.col_span, 1.0)
        unit = np.clip((y - self.y_min) / span, 0.0, 1.0)
        unit = np.where(self.col_span > 0.0, unit, 0.0)
        # a degenerate shared interval would erase the unit values; keep the
        # rescale an identity map in that corner so the inverse still holds
        if self.shared_span > 0.0:
            shared = self.shared_min + unit * self.shared_span
        else:
            shared = unit
        return np.log1p(np.maximum(shared, -1.0 + 1e-12))

    def inverse(self, targets: np.ndarray) -> np.ndarray:
        t = np.atleast_2d(np.asarray(targets, dtype=float))
        shared = np.expm1(t)
        if self.shared_span > 0.0:
            unit = (shared - self.shared_min) / self.shared_span
        else:
            unit = shared
        return self.y_min + unit * self.col_span

    def inverse_tensor(self, targets: Tensor) -> Tensor:
        shared = targets.expm1()
        if self.shared_span > 0.0:
            unit = (shared - self.shared_min) * (1.0 / self.shared_span)
        else:
            unit = shared
        return unit * Tensor(self.col_span) + Tensor(self.y_min)

    def state(self) -> dict:
        return {"y_min": self.y_min.tolist(), "y_max": self.y_max.tolist()}

    @classmethod
    def from_state(cls, state: dict) -> "OutputNormalizer":
        return cls(np.array(state["y_min"]), np.array(state["y_max"]))


class JointSurrogate:
    """f: R^n -> R^(q+k) with shared residual backbone and two heads.

    A trained instance is immutable for inference purposes and safe to share
    across threads; prediction never touches batch statistics, so batched and
    row-by-row prediction agree exactly.
    """

    def __init__(
        self,
        space: ParameterSpace,
        n_objectives: int,
        n_constraints: int,
        config: SurrogateConfig,
        stream: RandomStream,
    ):
        self.space = space
        self.q = int(n_objectives)
        self.k = int(n_constraints)
        self.config = config
        self.out_norm: OutputNormalizer | None = None
        self.has_objective_head = "o" in config.mode and self.q > 0
        self.has_constraint_head = "c" in config.mode and self.k > 0
        if not (self.has_objective_head or self.has_constraint_head):
            raise ValueError("surrogate has no active output head")
        self.params: dict[str, Tensor] = {}
        self._init_weights(stream)

    # ------------------------------------------------------------------

    def _dense_init(self, rng, fan_in: int, fan_out: int, name: str) -> None:
        bound = fan_in**-0.5
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        b = rng.uniform(-bound, bound, size=(fan_out,))
        self.params[f"{name}.w"] = Tensor(w, requires_grad=True)
        self.params[f"{name}.b"] = Tensor(b, requires_grad=True)

    def _init_weights(self, stream: RandomStream) -> None:
        rng = stream.generator()
        cfg = self.config
        n, d, h = self.space.dim, cfg.block_dim, cfg.hidden_dim
        self._dense_init(rng, n, d, "proj")
        for i in range(cfg.blocks):
            self.params[f"block{i}.ln_scale"] = Tensor(np.ones(d), requires_grad=True)
            self.params[f"block{i}.ln_shift"] = Tensor(np.zeros(d), requires_grad=True)
            self._dense_init(rng, d, h, f"block{i}.fc1")
            self._dense_init(rng, h, d, f"block{i}.fc2")
        if self.has_objective_head:
            self._dense_init(rng, d, self.q, "head_obj")
        if self.has_constraint_head:
            self._dense_init(rng, d, self.k, "head_con")

    # ------------------------------------------------------------------

    def _activate(self, t: Tensor) -> Tensor:
        return t.softplus() if self.config.activation == "softplus" else t.relu()

    @staticmethod
    def _layer_norm(h: Tensor, scale: Tensor, shift: Tensor) -> Tensor:
        return layer_norm(h, scale, shift, LAYER_NORM_EPS)

    def forward(
        self,
        x: Tensor,
        train: bool = False,
        dropout_rng: np.random.Generator | None = None,
    ) -> tuple[Tensor | None, Tensor | None]:
        """Raw heads on a parameter-space tensor: (normalized-objective
        predictions, constraint logits). Dropout is applied only in training
        mode; inference is deterministic."""
        p = self.params
        x_unit = (x - Tensor(self.space.lower)) * Tensor(1.0 / self.space.span)
        h = x_unit @ p["proj.w"] + p["proj.b"]
        p1, p2 = self.config.dropout
        for i in range(self.config.blocks):
            z = self._layer_norm(h, p[f"block{i}.ln_scale"], p[f"block{i}.ln_shift"])
            a = self._activate(z @ p[f"block{i}.fc1.w"] + p[f"block{i}.fc1.b"])
            a = self._dropout(a, p1, train, dropout_rng)
            o = a @ p[f"block{i}.fc2.w"] + p[f"block{i}.fc2.b"]
            o = self._dropout(o, p2, train, dropout_rng)
            h = h + o
        y_out = h @ p["head_obj.w"] + p["head_obj.b"] if self.has_objective_head else None
        c_out = h @ p["head_con.w"] + p["head_con.b"] if self.has_constraint_head else None
        return y_out, c_out

    @staticmethod
    def _dropout(t: Tensor, p: float, train: bool, rng) -> Tensor:
        if not train or p <= 0.0:
            return t
        mask = (rng.random(t.shape) >= p) / (1.0 - p)
        return t * Tensor(mask)

    # ------------------------------------------------------------------

    def predict(self, x: np.ndarray) -> tuple[np.ndarray | None, np.ndarray | None]:
        """Denormalized objective predictions and constraint probabilities."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y_out, c_out = self.forward(Tensor(x))
        y_pred = None
        if y_out is not None:
            y_pred = self.out_norm.inverse(y_out.data) if self.out_norm else y_out.data
        c_pred = expit(c_out.data) if c_out is not None else None
        return y_pred, c_pred

    def predict_graph(self, x: Tensor) -> tuple[Tensor | None, Tensor | None]:
        """Graph-mode prediction: (denormalized objectives, constraint
        logits). Used by descent losses and sensitivity analysis so gradients
        flow through the output transform as well."""
        y_out, c_out = self.forward(x)
        if y_out is not None and self.out_norm is not None:
            y_out = self.out_norm.inverse_tensor(y_out)
        return y_out, c_out

    def input_gradient(self, x: np.ndarray, selector) -> np.ndarray:
        """Exact gradient of a scalar of the model outputs with respect to x.

        ``selector`` is ("objective", j), ("constraint", j) for a single
        denormalized objective / constraint probability component summed over
        the batch, or a callable (y_denorm, c_logits, x_tensor) -> scalar
        Tensor for composite losses.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        leaf = Tensor(x, requires_grad=True)
        y_out, c_out = self.predict_graph(leaf)
        if callable(selector):
            scalar = selector(y_out, c_out, leaf)
        else:
            kind, j = selector
            if kind == "objective":
                scalar = take_column(y_out, j).sum()
            elif kind == "constraint":
                scalar = take_column(c_out, j).sigmoid().sum()
            else:
                raise ValueError(f"unknown selector kind {kind!r}")
        scalar.backward()
        return leaf.grad.reshape(x.shape)

    # ------------------------------------------------------------------

    def weight_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.params.items()}

    def load_weight_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, t in self.params.items():
            t.data = np.asarray(arrays[name], dtype=np.float64)


# ----------------------------------------------------------------------
# training
# ----------------------------------------------------------------------


class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = 0.9, 0.999
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data = p.data - self.lr * (m / b1c) / (np.sqrt(v / b2c) + ADAM_EPS)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


def _objective_loss(pred: Tensor, targets: np.ndarray, kind: str) -> Tensor:
    r = pred - Tensor(targets)
    if kind == "mse":
        return (r * r).mean()
    if kind == "huber":
        # quadratic within |r| <= 1, linear outside
        a = r.abs()
        quad = 0.5 * (r * r)
        lin = a - 0.5
        mask = (np.abs(r.data) <= 1.0).astype(float)
        return (quad * Tensor(mask) + lin * Tensor(1.0 - mask)).mean()
    if kind in ("log_cosh", "weighted_log_cosh"):
        a = r.abs()
        log_cosh = a + (a * -2.0).exp().log1p() - np.log(2.0)
        if kind == "weighted_log_cosh":
            return (log_cosh * Tensor(1.0 / (np.abs(targets) + 1.0))).mean()
        return log_cosh.mean()
    if kind == "distance_mse":
        return (r * r * Tensor(1.0 / (1.0 + np.abs(targets)))).mean()
    if kind == "relative":
        return (r.abs() * Tensor(1.0 / (np.abs(targets) + 1e-12))).mean()
    raise ValueError(f"unknown objective loss {kind!r}")


def _composite_loss(model: JointSurrogate, x, y_targets, c_targets, train, rng) -> Tensor:
    y_out, c_out = model.forward(x, train=train, dropout_rng=rng)
    parts = []
    if y_out is not None:
        parts.append(_objective_loss(y_out, y_targets, model.config.objective_loss))
    if c_out is not None:
        parts.append(bce_with_logits(c_out, c_targets).mean())
    loss = parts[0]
    for part in parts[1:]:
        loss = loss + part
    return loss


def _filter_training_data(records, cfg: SurrogateConfig):
    viable = [r for r in records if r.viable]
    if not viable:
        raise ValueError("no NaN-free records to train on")
    x = np.array([r.params for r in viable])
    y = np.array([r.objectives for r in viable])
    c = np.array([np.asarray(r.constraints, dtype=float) for r in viable])
    if cfg.exclude_infeasible and c.shape[1] > 0:
        keep = c.sum(axis=1) > 0.0  # drop samples violating every constraint
        x, y, c = x[keep], y[keep], c[keep]
    if cfg.outlier_threshold is not None and y.shape[0] > 1:
        logged = np.log1p(np.maximum(y, -1.0 + 1e-12))
        std = logged.std(axis=0)
        std = np.where(std > 0.0, std, 1.0)
        z = (logged - logged.mean(axis=0)) / std
        keep = np.all(np.abs(z) <= cfg.outlier_threshold, axis=1)
        x, y, c = x[keep], y[keep], c[keep]
    return x, y, c


def _epoch_pass(model, opt, x, y_t, c_t, batch_size, rng) -> float:
    n = x.shape[0]
    if n > batch_size:
        order = rng.permutation(n)
    else:
        order = np.arange(n)
    total = 0.0
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        opt.zero_grad()
        loss = _composite_loss(model, Tensor(x[idx]), y_t[idx], c_t[idx], True, rng)
        value = loss.item()
        if not np.isfinite(value):
            return value
        loss.backward()
        opt.step()
        total += value * len(idx)
    return total / n


def _train_single(model, x, y_targets, c_targets, epochs, cfg, rng, val=None,
                  patience=None, e_increment=None):
    """Train up to ``epochs`` epochs; returns the epoch count actually run.

    With a validation split, early stopping monitors the validation loss at
    the given patience; weights are never restored to the best epoch. A
    non-finite loss aborts at the current epoch.
    """
    opt = Adam(model.params, cfg.learning_rate)
    best_val = np.inf
    since_best = 0
    done = 0
    increment = e_increment or epochs
    while done < epochs:
        chunk = min(increment, epochs - done)
        for _ in range(chunk):
            train_loss = _epoch_pass(
                model, opt, x, y_targets, c_targets, cfg.batch_size, rng
            )
            if not np.isfinite(train_loss):
                return done
            done += 1
            if val is not None:
                vx, vy, vc = val
                vloss = _composite_loss(model, Tensor(vx), vy, vc, False, None).item()
                if not np.isfinite(vloss):
                    return done
                if vloss < best_val:
                    best_val = vloss
                    since_best = 0
                else:
                    since_best += 1
                    if patience is not None and since_best >= patience:
                        return done
    return done


def train(
    records,
    space: ParameterSpace,
    config: SurrogateConfig,
    stream: RandomStream,
) -> tuple[JointSurrogate, TrainingSchedule]:
    """Fit the joint surrogate on evaluation records.

    The epoch count is chosen by K-fold cross-validation: each fold trains
    with early stopping on its validation loss, the stop epochs are averaged,
    and the returned model is retrained from scratch on all data for that
    mean count.
    """
    x, y, c = _filter_training_data(records, config)
    n = x.shape[0]
    if n < 2 * config.folds:
        raise ValueError(
            f"need at least {2 * config.folds} NaN-free records, got {n}"
        )
    q = y.shape[1]
    k = c.shape[1]
    e_max, delta_e, patience = epoch_budget(n)

    fold_chunks = np.array_split(np.arange(n), config.folds)
    stops: list[int] = []
    for f, val_idx in enumerate(fold_chunks):
        train_idx = np.setdiff1d(np.arange(n), val_idx)
        fold_stream = stream.child(f"fold{f}")
        model = JointSurrogate(space, q, k, config, fold_stream.child("init"))
        norm = OutputNormalizer.fit(y[train_idx]) if model.has_objective_head else None
        y_tr = norm.transform(y[train_idx]) if norm else np.zeros((len(train_idx), 0))
        y_va = norm.transform(y[val_idx]) if norm else np.zeros((len(val_idx), 0))
        stop = _train_single(
            model,
            x[train_idx],
            y_tr,
            c[train_idx],
            e_max,
            config,
            fold_stream.child("epochs").generator(),
            val=(x[val_idx], y_va, c[val_idx]),
            patience=patience,
            e_increment=delta_e,
        )
        stops.append(max(stop, 1))

    final_epochs = max(1, int(round(float(np.mean(stops)))))
    final_stream = stream.child("final")
    model = JointSurrogate(space, q, k, config, final_stream.child("init"))
    norm = OutputNormalizer.fit(y) if model.has_objective_head else None
    model.out_norm = norm
    y_all = norm.transform(y) if norm else np.zeros((n, 0))
    _train_single(
        model,
        x,
        y_all,
        c,
        final_epochs,
        config,
        final_stream.child("epochs").generator(),
    )
    schedule = TrainingSchedule(e_max, delta_e, patience, stops, final_epochs)
    return model, schedule


# ----------------------------------------------------------------------
# checkpointing
# ----------------------------------------------------------------------


def save_checkpoint(model: JointSurrogate, path) -> None:
    """Write a self-describing checkpoint that round-trips bit-exactly."""
    meta = {
        "config": asdict(model.config),
        "q": model.q,
        "k": model.k,
        "names": list(model.space.names),
        "out_norm": model.out_norm.state() if model.out_norm else None,
    }
    arrays = {f"w::{name}": data for name, data in model.weight_arrays().items()}
    arrays["space_lower"] = model.space.lower
    arrays["space_upper"] = model.space.upper
    arrays["meta_json"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path) -> JointSurrogate:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta_json"]).decode("utf-8"))
        cfg_dict = dict(meta["config"])
        cfg_dict["dropout"] = tuple(cfg_dict["dropout"])
        config = SurrogateConfig(**cfg_dict)
        space = ParameterSpace(
            tuple(meta["names"]), data["space_lower"], data["space_upper"]
        )
        model = JointSurrogate(
            space, meta["q"], meta["k"], config, RandomStream(0, "checkpoint")
        )
        model.load_weight_arrays(
            {key[3:]: data[key] for key in data.files if key.startswith("w::")}
        )
        if meta["out_norm"] is not None:
            model.out_norm = OutputNormalizer.from_state(meta["out_norm"])
    return model
