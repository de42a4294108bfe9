"""The surrogate-assisted optimization loop.

Each run draws an initial design, evaluates it, and then iterates epochs:
retrain the surrogate on all accumulated data, optionally derive
sensitivity-informed distribution indices, run NSGA-II generations entirely
on surrogate predictions, optionally refine the non-elite half of the
ranked population by gradient-based feasibility solving, evaluate the final
candidates on the true problem, and snapshot metrics. The exact evaluation
budget is initial_samples + epochs * evals_per_epoch: trace re-anchoring
points, when enabled, replace the lowest-ranked explorer candidates instead
of adding evaluations.

If surrogate training fails in an epoch (for example, too few viable
records), the epoch falls back to plain NSGA-II variation on the best
true-evaluated parents and the event is logged.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import feasolve as fs
from . import moea
from .core import (
    EpochMetrics,
    EvaluationRecord,
    ParetoArchive,
    Population,
    Provenance,
    RandomStream,
    RunHistory,
)
from .evaluator import evaluate_batch
from .metrics import normalized_hypervolume, nrmse, set_coverage, shared_normalization
from .problems import ProblemDefinition, get_problem
from .sensitivity import compute_elasticities, indices_from_sensitivity, invert_indices
from .stopping import StopExpression
from .surrogate import JointSurrogate, SurrogateConfig
from .surrogate import train as train_surrogate
from .sampling import get_sampler

logger = logging.getLogger("surmoo")

__all__ = ["RunConfig", "RunResult", "run", "select_surrogate_mode", "recompute_archive"]

DYNAMIC_SUB_BLOCKS = 4
MIN_CONSTRAINT_PATTERNS = 3


@dataclass
class RunConfig:
    problem: str
    problem_params: dict = field(default_factory=dict)
    seed: int = 0
    epochs: int = 25
    stop: str | None = None
    population_size: int = 100
    evals_per_epoch: int | None = None
    generations: int = 10
    initial_samples: int = 100
    sampler: str = "slhc"
    workers: int = 1
    optimizer: str = "nsga2"
    optimizer_params: dict = field(default_factory=dict)
    surrogate_enabled: bool = True
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    feasolve_enabled: bool = False
    feasolve: fs.FeasolveConfig = field(default_factory=fs.FeasolveConfig)
    trace_samples: int = 0
    sensitivity_enabled: bool = False
    sensitivity_inverted: bool = False
    dynamic_sampling: bool = False
    export_traces: bool = False
    save_surrogates: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.population_size < 2:
            raise ValueError("population_size must be at least 2")
        if self.evals_per_epoch is None:
            self.evals_per_epoch = self.population_size
        elif self.evals_per_epoch != self.population_size:
            raise ValueError(
                "evals_per_epoch must equal population_size: the loop "
                "evaluates the final population"
            )
        if self.optimizer != "nsga2":
            raise ValueError("only the nsga2 optimizer is implemented")
        unknown = set(self.optimizer_params) - {"resampling_fraction"}
        if unknown:
            raise ValueError(f"unknown optimizer_params: {sorted(unknown)}")
        if self.trace_samples < 0:
            raise ValueError("trace_samples must be non-negative")
        if self.trace_samples > self.population_size // 2:
            raise ValueError(
                "trace_samples cannot exceed the explorer half of the population"
            )
        if self.dynamic_sampling and self.population_size % DYNAMIC_SUB_BLOCKS:
            raise ValueError(
                f"dynamic sampling splits epochs into {DYNAMIC_SUB_BLOCKS} "
                "sub-iterations; population_size must be divisible by 4"
            )
        if self.stop is not None:
            StopExpression(self.stop)  # fail at config time, not mid-run


@dataclass
class SensitivitySnapshot:
    epoch: int
    s_bar: np.ndarray
    eta: np.ndarray


@dataclass
class RunResult:
    config: RunConfig
    problem: ProblemDefinition
    history: RunHistory
    archive: ParetoArchive
    sensitivity: list[SensitivitySnapshot] = field(default_factory=list)
    traces: list[tuple[int, fs.DescentTrace]] = field(default_factory=list)
    surrogates: list[tuple[int, JointSurrogate]] = field(default_factory=list)


def select_surrogate_mode(history: RunHistory, configured: str) -> str:
    """Fall back from joint to objective-only when the observed constraint
    patterns are too few for meaningful classification."""
    records = history.viable_records()
    if not records:
        return "o"
    if records[0].constraints.size == 0:
        return "o"
    if "c" not in configured:
        return configured
    if len(history.constraint_patterns()) < MIN_CONSTRAINT_PATTERNS:
        return "o"
    return configured


def recompute_archive(history: RunHistory) -> ParetoArchive:
    return ParetoArchive.from_records(history.records)


def recompute_metrics(records) -> list[dict]:
    """Replay the derivable metric columns from an evaluation log alone.

    Reproduces epoch, cumulative_evals, hv_norm, and feasible_count exactly
    as the engine recorded them: the archive grows record by record and each
    epoch's hypervolume is normalized by the nadir of the feasible history
    seen so far.
    """
    if not records:
        return []
    last_epoch = max(r.epoch for r in records)
    by_epoch: dict[int, list] = {}
    for rec in records:
        by_epoch.setdefault(rec.epoch, []).append(rec)
    history = RunHistory()
    archive = ParetoArchive()
    rows = []
    for epoch in range(last_epoch + 1):
        for rec in by_epoch.get(epoch, []):
            history.append(rec)
            archive.insert(rec)
        rows.append(
            {
                "epoch": epoch,
                "cumulative_evals": len(history),
                "hv_norm": _archive_hv(archive, history),
                "feasible_count": len(history.feasible_records()),
            }
        )
    return rows


def _history_context(history: RunHistory):
    feasible = history.feasible_records()
    if not feasible:
        return None
    return shared_normalization([np.array([r.objectives for r in feasible])])


def _archive_hv(archive: ParetoArchive, history: RunHistory) -> float:
    context = _history_context(history)
    if context is None or len(archive) == 0:
        return 0.0
    return normalized_hypervolume(archive.objectives(), context)


def _select_parents(
    history: RunHistory, count: int, problem: ProblemDefinition, stream: RandomStream
) -> np.ndarray:
    """Best ``count`` parameter vectors from the true-evaluated history by
    feasibility-first rank and crowding; pads with uniform draws when the
    history holds fewer viable records."""
    records = history.viable_records()
    if records:
        members = np.array([r.params for r in records])
        objs = np.array([r.objectives for r in records])
        feas = np.array([r.feasible for r in records])
        ranked = moea.rank_population(members, objs, feas)
        parents = ranked.sorted_members()[:count]
    else:
        parents = np.empty((0, problem.space.dim))
    if parents.shape[0] < count:
        rng = stream.generator()
        extra = problem.space.lower + rng.random(
            (count - parents.shape[0], problem.space.dim)
        ) * problem.space.span
        parents = np.vstack([parents, extra]) if parents.size else extra
    return parents


def _fallback_candidates(
    parents: np.ndarray,
    history: RunHistory,
    count: int,
    indices: moea.DistributionIndices,
    problem: ProblemDefinition,
    stream: RandomStream,
) -> np.ndarray:
    """No-surrogate epoch: NSGA-II variation operators applied to the
    true-evaluated parents."""
    rng = stream.generator()
    lookup = {tuple(r.params): r for r in history.viable_records()}
    objs = []
    feas = []
    for row in parents:
        rec = lookup.get(tuple(row))
        if rec is None:
            objs.append(np.full(problem.n_objectives, np.inf))
            feas.append(False)
        else:
            objs.append(rec.objectives)
            feas.append(rec.feasible)
    ranked = moea.rank_population(parents, np.array(objs), np.array(feas))
    children: list[np.ndarray] = []
    while len(children) < count:
        i1 = moea.constrained_tournament(
            rng.integers(len(parents)), rng.integers(len(parents)), ranked, rng
        )
        i2 = moea.constrained_tournament(
            rng.integers(len(parents)), rng.integers(len(parents)), ranked, rng
        )
        if rng.random() < moea.CROSSOVER_PROB:
            c1, c2 = moea.sbx_crossover(
                parents[i1], parents[i2], indices, problem.space, rng
            )
        else:
            c1, c2 = parents[i1].copy(), parents[i2].copy()
        children.append(moea.polynomial_mutation(c1, indices, problem.space, rng))
        if len(children) < count:
            children.append(moea.polynomial_mutation(c2, indices, problem.space, rng))
    return np.array(children[:count])


def _evaluate_and_log(
    problem: ProblemDefinition,
    params: np.ndarray,
    provenances,
    epoch: int,
    history: RunHistory,
    archive: ParetoArchive,
    workers: int,
) -> list[EvaluationRecord]:
    results = evaluate_batch(problem, Population(params), workers=workers, batch_id=epoch)
    records = []
    for result, provenance in zip(results, provenances):
        rec = EvaluationRecord(
            params=params[result.index],
            objectives=result.objectives,
            constraints=result.constraints,
            epoch=epoch,
            provenance=provenance,
        )
        history.append(rec)
        archive.insert(rec)
        records.append(rec)
    return records


def _surrogate_predictor(model: JointSurrogate):
    def predictor(batch: np.ndarray):
        y, c = model.predict(batch)
        if y is None:
            y = np.zeros((batch.shape[0], 1))
        return y, c

    return predictor


def run(config: RunConfig) -> RunResult:
    problem = get_problem(config.problem, **config.problem_params)
    space = problem.space
    root = RandomStream(config.seed)
    history = RunHistory()
    archive = ParetoArchive()
    stop = StopExpression(config.stop) if config.stop else None
    sample = get_sampler(config.sampler)
    result = RunResult(config, problem, history, archive)
    series: dict[str, list[float]] = {
        "hv": [],
        "feasible_count": [],
        "nrmse": [],
        "ecov": [],
        "evals": [],
    }

    start = time.perf_counter()
    design = sample(space, config.initial_samples, root.child("init"))
    _evaluate_and_log(
        problem,
        design.points,
        [Provenance.INIT] * design.points.shape[0],
        0,
        history,
        archive,
        config.workers,
    )
    _snapshot(
        history, archive, series, 0, float("nan"), "-", 0,
        time.perf_counter() - start, prev_front=None,
    )
    prev_front = archive.objectives() if len(archive) else None

    n_e = config.evals_per_epoch
    sub_blocks = DYNAMIC_SUB_BLOCKS if config.dynamic_sampling else 1
    n_sub = n_e // sub_blocks

    for epoch in range(1, config.epochs + 1):
        epoch_start = time.perf_counter()
        epoch_stream = root.child(f"epoch{epoch}")
        mode = (
            select_surrogate_mode(history, config.surrogate.mode)
            if config.surrogate_enabled
            else "none"
        )
        feasolve_steps = 0
        effective_mode = mode
        nrmse_pairs: list[tuple[np.ndarray, np.ndarray]] = []

        for sub in range(sub_blocks):
            sub_stream = epoch_stream.child(f"sub{sub}")
            model = None
            if mode != "none":
                cfg = SurrogateConfig(**{**_config_dict(config.surrogate), "mode": mode})
                try:
                    model, _ = train_surrogate(
                        history.viable_records(), space, cfg, sub_stream.child("train")
                    )
                except Exception as exc:
                    logger.warning(
                        "epoch %d: surrogate training failed (%s); "
                        "falling back to no-surrogate variation",
                        epoch,
                        exc,
                    )
                    model = None

            indices = moea.DistributionIndices.default(space.dim)
            if model is not None and config.sensitivity_enabled and model.has_objective_head:
                train_x = np.array([r.params for r in history.viable_records()])
                sens = compute_elasticities(model, train_x)
                indices = indices_from_sensitivity(sens)
                if config.sensitivity_inverted:
                    indices = invert_indices(indices)
                result.sensitivity.append(
                    SensitivitySnapshot(epoch, sens.s_bar, indices.eta_cross.copy())
                )

            if model is None:
                effective_mode = "none"
                parents = _select_parents(
                    history, n_sub, problem, sub_stream.child("parents")
                )
                candidates = _fallback_candidates(
                    parents, history, n_sub, indices, problem,
                    sub_stream.child("variation"),
                )
                provenances = [Provenance.MOEA] * n_sub
            else:
                parents = _select_parents(
                    history, n_sub, problem, sub_stream.child("parents")
                )
                predictor = _surrogate_predictor(model)
                pop = moea.generate(
                    Population(parents),
                    predictor,
                    config.generations,
                    indices,
                    space,
                    sub_stream.child("moea"),
                )
                candidates = pop.members
                provenances = [Provenance.MOEA] * n_sub
                if config.feasolve_enabled:
                    candidates, provenances, steps = _feasolve_stage(
                        candidates, model, config, predictor, history, epoch, result
                    )
                    feasolve_steps += steps

            new_records = _evaluate_and_log(
                problem, candidates, provenances, epoch, history, archive,
                config.workers,
            )
            if model is not None and model.has_objective_head:
                y_pred, _ = model.predict(candidates)
                for rec, pred in zip(new_records, y_pred):
                    if rec.viable:
                        nrmse_pairs.append((rec.objectives, pred))
            if config.save_surrogates and model is not None and sub == sub_blocks - 1:
                result.surrogates.append((epoch, model))

        epoch_nrmse = _epoch_nrmse(nrmse_pairs)
        _snapshot(
            history, archive, series, epoch, epoch_nrmse, effective_mode,
            feasolve_steps, time.perf_counter() - epoch_start, prev_front,
        )
        prev_front = archive.objectives() if len(archive) else None
        if stop is not None and stop.evaluate(epoch, series):
            logger.info("dynamic stop %r satisfied after epoch %d", config.stop, epoch)
            break
    return result


def _config_dict(cfg: SurrogateConfig) -> dict:
    return asdict(cfg)


def _feasolve_stage(candidates, model, config, predictor, history, epoch, result):
    """Rank the generated population, preserve the elite half, and refine
    the rest by descent; optionally swap the lowest-ranked explorers for
    diverse trace samples."""
    targets = _usable_targets(config.feasolve.targets, model)
    if not targets:
        logger.warning(
            "epoch %d: no feasolve target usable in mode %r; skipping descent",
            epoch,
            model.config.mode,
        )
        return candidates, [Provenance.MOEA] * candidates.shape[0], 0
    fs_cfg = fs.FeasolveConfig(**{**_feasolve_dict(config.feasolve), "targets": targets})
    objs, probs = model.predict(candidates)
    if objs is None:
        objs = np.zeros((candidates.shape[0], 1))
    feas = (
        np.all(probs >= moea.FEASIBILITY_THRESHOLD, axis=1)
        if probs is not None
        else np.ones(candidates.shape[0], dtype=bool)
    )
    ranked = moea.rank_population(candidates, objs, feas)
    elite, explore = fs.hybrid_epoch_split(ranked)
    if explore.shape[0] == 0:
        return candidates, [Provenance.MOEA] * candidates.shape[0], 0
    viable = history.viable_records()
    train_y = np.array([r.objectives for r in viable]) if viable else None
    train_x = np.array([r.params for r in viable]) if viable else None
    refined, trace = fs.make_feasible(
        Population(explore), model, fs_cfg, train_objectives=train_y,
        train_inputs=train_x,
    )
    if config.export_traces:
        result.traces.append((epoch, trace))
    explore_out = refined.members
    provenances = [Provenance.MOEA] * elite.shape[0] + [
        Provenance.FEASOLVE
    ] * explore_out.shape[0]
    batch = np.vstack([elite, explore_out])
    n_trace = min(config.trace_samples, explore_out.shape[0])
    if n_trace > 0 and len(trace):
        picks = fs.trace_diversity_filter(trace, n_trace)
        if picks.shape[0] == n_trace:
            batch = np.vstack([batch[: batch.shape[0] - n_trace], picks])
            provenances = provenances[: len(provenances) - n_trace] + [
                Provenance.TRACE
            ] * n_trace
    return batch, provenances, len(trace)


def _usable_targets(targets, model: JointSurrogate):
    usable = []
    for t in targets:
        if t in ("objective", "zero") and not model.has_objective_head:
            continue
        if t == "constraint" and not model.has_constraint_head:
            continue
        usable.append(t)
    return tuple(usable)


def _feasolve_dict(cfg: fs.FeasolveConfig) -> dict:
    return asdict(cfg)


def _epoch_nrmse(pairs) -> float:
    if len(pairs) < 2:
        return float("nan")
    y_true = np.array([p[0] for p in pairs])
    y_pred = np.array([p[1] for p in pairs])
    ranges = y_true.max(axis=0) - y_true.min(axis=0)
    if not np.any(ranges > 0.0):
        return float("nan")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return nrmse(y_true, y_pred)


def _snapshot(history, archive, series, epoch, nrmse_value, mode, feasolve_steps,
              wall_seconds, prev_front):
    hv_value = _archive_hv(archive, history)
    feasible_count = len(history.feasible_records())
    current_front = archive.objectives() if len(archive) else None
    if epoch == 0 or prev_front is None or not np.size(prev_front):
        ecov = 1.0 if current_front is not None else 0.0
    elif current_front is None:
        ecov = 0.0
    else:
        ecov = set_coverage(current_front, prev_front)
    metrics = EpochMetrics(
        epoch=epoch,
        cumulative_evals=len(history),
        hv_norm=hv_value,
        feasible_count=feasible_count,
        nrmse=nrmse_value,
        mode=mode,
        feasolve_steps=feasolve_steps,
        wall_seconds=wall_seconds,
    )
    history.snapshot(metrics)
    series["hv"].append(hv_value)
    series["feasible_count"].append(float(feasible_count))
    series["nrmse"].append(nrmse_value)
    series["ecov"].append(ecov)
    series["evals"].append(float(len(history)))
