"""Experiment harness: config parsing, seeded comparison runs, trace CSVs.

Configs are flat INI-style key-value text with one section per optimizer:

    [experiment]
    name = quad64
    seed = 0
    query_budget = 20000
    eval_every = 10
    loss_thresholds = 0.5, 0.05          ; optional, absolute
    loss_threshold_fractions = 0.01      ; optional, x initial loss

    [objective]
    kind = quadratic                     ; quadratic | logreg | mlp | logreg_csv
    m = 64
    n = 64
    rank = 8
    seed = 3

    [optimizer:zo_muon]
    kind = zo_muon
    learning_rate = 1e-2
    n_queries = 4
    rank = 8

Every optimizer's step count is derived from the shared query budget and its
per-step query cost, so compared runs consume (up to remainder) the same
number of function evaluations.  One CSV per optimizer is written with the
header ``step,queries,loss,elapsed_ms``; content is deterministic for a fixed
config and seed apart from the elapsed_ms column.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from . import objectives as objectives_mod
from .optimizers import (
    MEZO,
    OPTIMIZER_KINDS,
    OptimizerConfig,
    StepRecord,
    run,
    steps_for_budget,
)

OUT_DIR_ENV = "ZOMAT_OUT_DIR"
OBJECTIVE_KINDS = ("quadratic", "logreg", "mlp", "logreg_csv")


class ConfigError(ValueError):
    """Malformed experiment config; the message names the section and field."""


@dataclass(frozen=True)
class ObjectiveSpec:
    kind: str
    options: dict = field(default_factory=dict)


@dataclass(frozen=True)
class OptimizerEntry:
    label: str
    kind: str
    config: OptimizerConfig


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    seed: int
    query_budget: int
    objective: ObjectiveSpec
    optimizers: tuple
    eval_every: int = 1
    out_dir: str | None = None
    loss_thresholds: tuple = ()
    loss_threshold_fractions: tuple = ()


def _get(section, key, cast, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"[{section.name}] is missing required field {key!r}")
        return default
    raw = section[key]
    try:
        return cast(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(
            f"[{section.name}] field {key!r} has invalid value {raw!r}: {exc}"
        ) from exc


def _float_list(raw):
    return tuple(float(part) for part in str(raw).split(",") if part.strip())


def _int_list(raw):
    return tuple(int(part) for part in str(raw).split(",") if part.strip())


_OPTIMIZER_FIELDS = {
    "learning_rate": float,
    "mu": float,
    "n_queries": int,
    "rank": int,
    "resample_interval": int,
    "msign_backend": str,
    "ns_iterations": int,
    "projection_strategy": str,
    "sketch_momentum_beta": float,
}


def parse_config_text(text: str, origin: str = "<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from exc

    if "experiment" not in parser:
        raise ConfigError(f"{origin}: missing [experiment] section")
    if "objective" not in parser:
        raise ConfigError(f"{origin}: missing [objective] section")
    exp = parser["experiment"]
    name = _get(exp, "name", str, default="experiment")
    seed = _get(exp, "seed", int, default=0)
    budget = _get(exp, "query_budget", int, required=True)
    if budget < 0:
        raise ConfigError("[experiment] query_budget must be non-negative")
    eval_every = _get(exp, "eval_every", int, default=1)
    if eval_every < 1:
        raise ConfigError("[experiment] eval_every must be positive")
    out_dir = _get(exp, "out_dir", str, default=None)
    thresholds = _get(exp, "loss_thresholds", _float_list, default=())
    fractions = _get(exp, "loss_threshold_fractions", _float_list, default=())

    obj_section = parser["objective"]
    kind = _get(obj_section, "kind", str, required=True)
    if kind not in OBJECTIVE_KINDS:
        raise ConfigError(
            f"[objective] unknown kind {kind!r}; valid: {', '.join(OBJECTIVE_KINDS)}"
        )
    options = {}
    if kind == "quadratic":
        options["m"] = _get(obj_section, "m", int, required=True)
        options["n"] = _get(obj_section, "n", int, required=True)
        options["k"] = _get(obj_section, "rank", int, required=True)
        options["seed"] = _get(obj_section, "seed", int, default=0)
        for key, cast in (
            ("delta", float), ("block_condition", float), ("init_offset", float),
        ):
            value = _get(obj_section, key, cast, default=None)
            if value is not None:
                options[key] = value
    elif kind == "logreg":
        options["n_samples"] = _get(obj_section, "n_samples", int, required=True)
        options["n_features"] = _get(obj_section, "n_features", int, required=True)
        options["seed"] = _get(obj_section, "seed", int, default=0)
    elif kind == "mlp":
        options["widths"] = _get(obj_section, "widths", _int_list, required=True)
        options["n_samples"] = _get(obj_section, "n_samples", int, required=True)
        options["seed"] = _get(obj_section, "seed", int, default=0)
    elif kind == "logreg_csv":
        options["path"] = _get(obj_section, "path", str, required=True)

    entries = []
    for section_name in parser.sections():
        if not section_name.startswith("optimizer"):
            continue
        section = parser[section_name]
        label = section_name.split(":", 1)[1] if ":" in section_name else None
        opt_kind = _get(section, "kind", str, default=label)
        if opt_kind is None:
            raise ConfigError(f"[{section_name}] needs a kind (or a :label naming one)")
        if opt_kind not in OPTIMIZER_KINDS:
            raise ConfigError(
                f"[{section_name}] unknown optimizer kind {opt_kind!r}; "
                f"valid: {', '.join(OPTIMIZER_KINDS)}"
            )
        label = label or opt_kind
        fields = {}
        for key, cast in _OPTIMIZER_FIELDS.items():
            value = _get(section, key, cast, default=None)
            if value is not None:
                fields[key] = value
        if "learning_rate" not in fields:
            raise ConfigError(f"[{section_name}] is missing required field 'learning_rate'")
        try:
            config = OptimizerConfig(**fields)
        except ValueError as exc:
            raise ConfigError(f"[{section_name}]: {exc}") from exc
        entries.append(OptimizerEntry(label=label, kind=opt_kind, config=config))
    if not entries:
        raise ConfigError(f"{origin}: no [optimizer:*] sections")
    labels = [e.label for e in entries]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"{origin}: duplicate optimizer labels: {labels}")

    return ExperimentConfig(
        name=name,
        seed=seed,
        query_budget=budget,
        objective=ObjectiveSpec(kind=kind, options=options),
        optimizers=tuple(entries),
        eval_every=eval_every,
        out_dir=out_dir,
        loss_thresholds=thresholds,
        loss_threshold_fractions=fractions,
    )


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, origin=str(path))


def build_objective(spec: ObjectiveSpec):
    """Fresh objective instance (its query counter starts at zero)."""
    opts = dict(spec.options)
    if spec.kind == "quadratic":
        return objectives_mod.make_quadratic(**opts)
    if spec.kind == "logreg":
        return objectives_mod.make_logreg(**opts)
    if spec.kind == "mlp":
        return objectives_mod.make_mlp(**opts)
    if spec.kind == "logreg_csv":
        return objectives_mod.make_logreg_from_csv(opts["path"])
    raise ConfigError(f"unknown objective kind {spec.kind!r}")


def resolve_out_dir(cli_value=None, config_value=None) -> Path:
    """Output directory precedence: CLI flag, config, environment, ./runs."""
    for candidate in (cli_value, config_value, os.environ.get(OUT_DIR_ENV)):
        if candidate:
            return Path(candidate)
    return Path("runs")


def write_trace_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "queries", "loss", "elapsed_ms"])
        for rec in records:
            writer.writerow([rec.step, rec.queries, repr(rec.loss), repr(rec.elapsed_ms)])


def read_trace_csv(path):
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["step", "queries", "loss", "elapsed_ms"]:
            raise ValueError(f"{path}: unexpected header {header}")
        for row in reader:
            records.append(
                StepRecord(
                    step=int(row[0]),
                    queries=int(row[1]),
                    loss=float(row[2]),
                    elapsed_ms=float(row[3]),
                )
            )
    return records


def queries_to_threshold(records, threshold: float):
    """First cumulative query count at which the recorded loss reaches the
    threshold, or None when it never does."""
    for rec in records:
        if rec.loss <= threshold:
            return rec.queries
    return None


def _threshold_table(exp, initial_loss):
    thresholds = {f"{t:g}": t for t in exp.loss_thresholds}
    for frac in exp.loss_threshold_fractions:
        thresholds[f"{frac:g}x_initial"] = frac * initial_loss
    return thresholds


def run_experiment(exp: ExperimentConfig, out_dir=None, seed=None, eval_every=None) -> dict:
    """Run every configured optimizer under the shared query budget.

    Writes one ``<experiment>_<label>.csv`` per optimizer plus a
    ``summary.json`` holding final losses, queries-to-threshold for every
    configured threshold, and an echo of the configuration.  Returns the
    summary dict.
    """
    out_path = resolve_out_dir(out_dir, exp.out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    seed = exp.seed if seed is None else int(seed)
    eval_every = exp.eval_every if eval_every is None else int(eval_every)

    probe = build_objective(exp.objective)
    initial_loss = probe.loss(probe.initial_params)
    thresholds = _threshold_table(exp, initial_loss)

    results = {}
    for entry in exp.optimizers:
        objective = build_objective(exp.objective)
        total_steps = steps_for_budget(entry.kind, entry.config, exp.query_budget)
        config = dataclasses.replace(entry.config, total_steps=total_steps)
        result = run(
            objective,
            objective.initial_params,
            config,
            entry.kind,
            seed=seed,
            eval_every=eval_every,
        )
        csv_path = out_path / f"{exp.name}_{entry.label}.csv"
        write_trace_csv(csv_path, result.records)
        results[entry.label] = {
            "kind": entry.kind,
            "steps": total_steps,
            "queries": result.queries,
            "eval_queries": result.eval_queries,
            "final_loss": result.records[-1].loss if result.records else None,
            "queries_to_threshold": {
                key: queries_to_threshold(result.records, value)
                for key, value in thresholds.items()
            },
            "trace_csv": csv_path.name,
        }

    summary = {
        "experiment": exp.name,
        "seed": seed,
        "query_budget": exp.query_budget,
        "eval_every": eval_every,
        "initial_loss": initial_loss,
        "thresholds": thresholds,
        "objective": {"kind": exp.objective.kind, **exp.objective.options},
        "optimizers": {
            entry.label: {
                "kind": entry.kind,
                **{
                    k: v
                    for k, v in dataclasses.asdict(entry.config).items()
                    if k != "total_steps"
                },
            }
            for entry in exp.optimizers
        },
        "results": results,
    }
    with open(out_path / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary


def compare_experiment(exp: ExperimentConfig, out_dir=None, seed=None, eval_every=None):
    """Queries-to-threshold table with ratios against the mezo row.

    Requires at least one configured threshold.  Returns (summary, rows)
    where each row is (label, threshold_key, queries or None, ratio or None).
    """
    if not exp.loss_thresholds and not exp.loss_threshold_fractions:
        raise ConfigError(
            "compare needs loss_thresholds or loss_threshold_fractions in [experiment]"
        )
    summary = run_experiment(exp, out_dir=out_dir, seed=seed, eval_every=eval_every)
    baseline_label = None
    for entry in exp.optimizers:
        if entry.kind == MEZO:
            baseline_label = entry.label
            break
    rows = []
    for key in summary["thresholds"]:
        base_q = (
            summary["results"][baseline_label]["queries_to_threshold"][key]
            if baseline_label
            else None
        )
        for entry in exp.optimizers:
            q = summary["results"][entry.label]["queries_to_threshold"][key]
            ratio = None
            if q is not None and base_q:
                ratio = q / base_q
            rows.append((entry.label, key, q, ratio))
    return summary, rows
