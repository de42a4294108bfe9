"""Run configuration files and run-directory persistence.

Configs are YAML with a strict schema: unknown keys are rejected with the
offending line and a close-match suggestion. Results are written as
newline-delimited JSON records (one evaluation per line; NaN objectives are
serialized as null for language neutrality) plus a per-epoch metrics CSV.
Floats serialize via their shortest round-trip decimal representation, so
re-parsing a log reproduces the values bit-exactly.
"""

from __future__ import annotations

import difflib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np
import yaml

from .core import EvaluationRecord, EpochMetrics
from .engine import RunConfig, RunResult
from .feasolve import FeasolveConfig
from .surrogate import SurrogateConfig, save_checkpoint

__all__ = [
    "ConfigError",
    "load_config",
    "config_to_dict",
    "write_run_directory",
    "read_evaluations",
    "read_metrics",
    "EVALUATIONS_FILE",
    "METRICS_FILE",
    "CONFIG_FILE",
]

EVALUATIONS_FILE = "evaluations.ndjson"
METRICS_FILE = "metrics.csv"
CONFIG_FILE = "config.yaml"
SENSITIVITY_FILE = "sensitivity.csv"
TRACES_FILE = "traces.ndjson"

METRICS_COLUMNS = (
    "epoch",
    "cumulative_evals",
    "hv_norm",
    "feasible_count",
    "nrmse",
    "mode",
    "feasolve_steps",
    "wall_seconds",
)

# schema: key -> None for a leaf, or a nested dict for a section
CONFIG_SCHEMA: dict = {
    "problem": None,
    "problem_params": "free",  # validated by the problem factory
    "seed": None,
    "epochs": None,
    "stop": None,
    "population_size": None,
    "evals_per_epoch": None,
    "generations": None,
    "initial_samples": None,
    "sampler": None,
    "workers": None,
    "optimizer": None,
    "optimizer_params": {"resampling_fraction": None},
    "dynamic_sampling": None,
    "export_traces": None,
    "save_surrogates": None,
    "surrogate": {
        "enabled": None,
        "mode": None,
        "blocks": None,
        "block_dim": None,
        "hidden_multiplier": None,
        "dropout": None,
        "learning_rate": None,
        "batch_size": None,
        "folds": None,
        "activation": None,
        "objective_loss": None,
        "outlier_threshold": None,
        "exclude_infeasible": None,
    },
    "feasolve": {
        "enabled": None,
        "targets": None,
        "max_iters": None,
        "learning_rate": None,
        "plateau_window": None,
        "plateau_ratio": None,
        "reference_factor": None,
        "focal_gamma": None,
        "focal_alpha": None,
        "trace_samples": None,
    },
    "sensitivity": {"enabled": None, "inverted": None},
}


class ConfigError(ValueError):
    pass


def _key_lines(text: str) -> dict[str, int]:
    """Map dotted key paths to 1-based line numbers using the YAML node
    graph; best effort, used only for diagnostics."""
    lines: dict[str, int] = {}
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return lines
    if root is None:
        return lines

    def walk(node, prefix: str):
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                path = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
                lines[path] = key_node.start_mark.line + 1
                walk(value_node, path)

    walk(root, "")
    return lines


def _check_keys(data: dict, schema: dict, lines: dict[str, int], prefix: str = ""):
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else str(key)
        if key not in schema:
            line = lines.get(path)
            where = f" at line {line}" if line else ""
            suggestion = difflib.get_close_matches(str(key), list(schema), n=1)
            hint = f"; did you mean {suggestion[0]!r}?" if suggestion else ""
            raise ConfigError(f"unknown config key {path!r}{where}{hint}")
        sub = schema[key]
        if isinstance(sub, dict):
            if value is None:
                continue
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path!r} must be a mapping")
            _check_keys(value, sub, lines, path)


def load_config(path) -> RunConfig:
    """Parse and validate a YAML run configuration."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    _check_keys(data, CONFIG_SCHEMA, _key_lines(text))
    return build_run_config(data)


def build_run_config(data: dict) -> RunConfig:
    if "problem" not in data:
        raise ConfigError("config must name a problem")
    surrogate_section = dict(data.get("surrogate") or {})
    surrogate_enabled = bool(surrogate_section.pop("enabled", True))
    if "dropout" in surrogate_section:
        surrogate_section["dropout"] = tuple(surrogate_section["dropout"])
    feasolve_section = dict(data.get("feasolve") or {})
    feasolve_enabled = bool(feasolve_section.pop("enabled", False))
    trace_samples = int(feasolve_section.pop("trace_samples", 0))
    if "targets" in feasolve_section:
        feasolve_section["targets"] = tuple(feasolve_section["targets"])
    sensitivity_section = dict(data.get("sensitivity") or {})

    try:
        return RunConfig(
            problem=data["problem"],
            problem_params=dict(data.get("problem_params") or {}),
            seed=int(data.get("seed", 0)),
            epochs=int(data.get("epochs", 25)),
            stop=data.get("stop"),
            population_size=int(data.get("population_size", 100)),
            evals_per_epoch=(
                int(data["evals_per_epoch"])
                if data.get("evals_per_epoch") is not None
                else None
            ),
            generations=int(data.get("generations", 10)),
            initial_samples=int(data.get("initial_samples", 100)),
            sampler=data.get("sampler", "slhc"),
            workers=int(data.get("workers", 1)),
            optimizer=data.get("optimizer", "nsga2"),
            optimizer_params=dict(data.get("optimizer_params") or {}),
            surrogate_enabled=surrogate_enabled,
            surrogate=SurrogateConfig(**surrogate_section),
            feasolve_enabled=feasolve_enabled,
            feasolve=FeasolveConfig(**feasolve_section),
            trace_samples=trace_samples,
            sensitivity_enabled=bool(sensitivity_section.get("enabled", False)),
            sensitivity_inverted=bool(sensitivity_section.get("inverted", False)),
            dynamic_sampling=bool(data.get("dynamic_sampling", False)),
            export_traces=bool(data.get("export_traces", False)),
            save_surrogates=bool(data.get("save_surrogates", False)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def config_to_dict(config: RunConfig) -> dict:
    """Resolved configuration snapshot, YAML-serializable."""
    data = asdict(config)
    surrogate = data.pop("surrogate")
    surrogate["dropout"] = list(surrogate["dropout"])
    surrogate["enabled"] = data.pop("surrogate_enabled")
    feasolve = data.pop("feasolve")
    feasolve["targets"] = list(feasolve["targets"])
    feasolve["enabled"] = data.pop("feasolve_enabled")
    feasolve["trace_samples"] = data.pop("trace_samples")
    data["surrogate"] = surrogate
    data["feasolve"] = feasolve
    data["sensitivity"] = {
        "enabled": data.pop("sensitivity_enabled"),
        "inverted": data.pop("sensitivity_inverted"),
    }
    return data


# ----------------------------------------------------------------------
# writing
# ----------------------------------------------------------------------


def _json_vector(values: np.ndarray) -> list:
    return [None if np.isnan(v) else float(v) for v in np.asarray(values, dtype=float)]


def _record_line(rec: EvaluationRecord) -> str:
    payload = {
        "epoch": rec.epoch,
        "provenance": rec.provenance.value,
        "params": [float(v) for v in rec.params],
        "objectives": _json_vector(rec.objectives),
        "constraints": [int(v) for v in rec.constraints],
    }
    return json.dumps(payload, separators=(",", ":"))


def _metrics_row(m: EpochMetrics) -> str:
    return ",".join(
        [
            str(m.epoch),
            str(m.cumulative_evals),
            repr(float(m.hv_norm)),
            str(m.feasible_count),
            repr(float(m.nrmse)),
            m.mode,
            str(m.feasolve_steps),
            repr(float(m.wall_seconds)),
        ]
    )


def write_run_directory(result: RunResult, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / CONFIG_FILE).write_text(
        yaml.safe_dump(config_to_dict(result.config), sort_keys=False)
    )
    with open(out / EVALUATIONS_FILE, "w") as fh:
        for rec in result.history.records:
            fh.write(_record_line(rec) + "\n")
    with open(out / METRICS_FILE, "w") as fh:
        fh.write(",".join(METRICS_COLUMNS) + "\n")
        for m in result.history.epoch_metrics:
            fh.write(_metrics_row(m) + "\n")
    if result.sensitivity:
        names = result.problem.space.names
        with open(out / SENSITIVITY_FILE, "w") as fh:
            fh.write("epoch,name,s_bar,eta\n")
            for snap in result.sensitivity:
                for name, s, eta in zip(names, snap.s_bar, snap.eta):
                    fh.write(f"{snap.epoch},{name},{s!r},{eta!r}\n")
    if result.traces:
        with open(out / TRACES_FILE, "w") as fh:
            for epoch, trace in result.traces:
                for entry in trace.steps:
                    for i, cand in enumerate(entry.candidates):
                        payload = {
                            "epoch": epoch,
                            "step": entry.step,
                            "candidate": i,
                            "params": [float(v) for v in cand],
                            "pred_objectives": (
                                _json_vector(entry.pred_objectives[i])
                                if entry.pred_objectives is not None
                                else None
                            ),
                            "pred_feasibility": (
                                _json_vector(entry.pred_feasibility[i])
                                if entry.pred_feasibility is not None
                                else None
                            ),
                            "loss": entry.loss,
                        }
                        fh.write(json.dumps(payload, separators=(",", ":")) + "\n")
    if result.surrogates:
        ckpt_dir = out / "surrogates"
        ckpt_dir.mkdir(exist_ok=True)
        for epoch, model in result.surrogates:
            save_checkpoint(model, ckpt_dir / f"epoch_{epoch:04d}.npz")
    return out


# ----------------------------------------------------------------------
# reading
# ----------------------------------------------------------------------


def read_evaluations(run_dir) -> list[EvaluationRecord]:
    """Parse an evaluations log; a truncated final line is an error, not a
    silent drop."""
    path = Path(run_dir) / EVALUATIONS_FILE
    records: list[EvaluationRecord] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                payload = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise ValueError(
                    f"{path}:{lineno}: truncated or corrupt record ({exc})"
                ) from None
            objectives = [
                np.nan if v is None else float(v) for v in payload["objectives"]
            ]
            records.append(
                EvaluationRecord(
                    params=np.array(payload["params"], dtype=float),
                    objectives=np.array(objectives, dtype=float),
                    constraints=np.array(payload["constraints"], dtype=np.int8),
                    epoch=int(payload["epoch"]),
                    provenance=payload["provenance"],
                )
            )
    return records


def read_metrics(run_dir) -> list[dict]:
    path = Path(run_dir) / METRICS_FILE
    rows: list[dict] = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != METRICS_COLUMNS:
            raise ValueError(f"{path}: unexpected metrics header {header}")
        for line in fh:
            if not line.strip():
                continue
            parts = line.strip().split(",")
            row = dict(zip(METRICS_COLUMNS, parts))
            for key in ("epoch", "cumulative_evals", "feasible_count", "feasolve_steps"):
                row[key] = int(row[key])
            for key in ("hv_norm", "nrmse", "wall_seconds"):
                row[key] = float(row[key])
            rows.append(row)
    return rows
