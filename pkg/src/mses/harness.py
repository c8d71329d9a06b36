"""Batch execution of experiments and the on-disk result tree.

Layout under `out_dir`:

    <arm>/<problem_id>/run-<index>-s<seed>.csv   one convergence log per run
    summary.csv                                  final-objective statistics
    events.jsonl                                 transfer / reconstruction events
    mses.log                                     rotating log

Runs are independent and execute through joblib; each writes only its own
CSV. Aggregation happens afterwards in a single pass.
"""

import csv
import io
import json
import logging
import os
import re
import sys
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field, replace
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any

import numpy as np
from joblib import Parallel, delayed

from . import bench, engine
from .config import ArmSpec, ExperimentSpec
from .constants import (
    APP_NAME,
    CSV_FLOAT_FORMAT,
    CSV_HEADER,
    EVENTS_FILE,
    LOG_FILE_NAME,
    LOG_MAX_BYTES,
    RUN_FILE_PATTERN,
    SUMMARY_FILE,
    SWEEP_PARAMS,
)
from .engine import ConvergenceLog
from .errors import InvalidArgumentError, SpecError

logger = logging.getLogger(APP_NAME)

_RUN_FILE_RE = re.compile(r"^run-(\d+)-s(\d+)\.csv$")


def setup_logging(out_dir: Path | None = None, verbose: bool = False) -> None:
    """Configures the package logger: stderr plus a rotating file in `out_dir`.

    Calling it again replaces the handlers installed by a previous call.
    """
    formatter = logging.Formatter(
        "[%(asctime)s] %(levelname)s: %(message)s", "%Y-%m-%d %H:%M:%S"
    )
    for handler in [h for h in logger.handlers if getattr(h, "_mses", False)]:
        logger.removeHandler(handler)
        handler.close()
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)

    stream_handler = logging.StreamHandler(sys.stderr)
    stream_handler.setFormatter(formatter)
    stream_handler.setLevel(logging.DEBUG if verbose else logging.WARNING)
    setattr(stream_handler, "_mses", True)
    logger.addHandler(stream_handler)

    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(
            out_dir / LOG_FILE_NAME, maxBytes=LOG_MAX_BYTES, backupCount=5
        )
        file_handler.setFormatter(formatter)
        setattr(file_handler, "_mses", True)
        logger.addHandler(file_handler)


# --- Convergence CSVs ---


def format_log(log: ConvergenceLog) -> str:
    """Renders a log as `fe,best` CSV text with LF endings and 17 digits."""
    rows = [CSV_HEADER]
    rows += [f"{fe},{best:{CSV_FLOAT_FORMAT}}" for fe, best in zip(log.fe, log.best, strict=True)]
    return "\n".join(rows) + "\n"


def atomic_write(path: Path, text: str) -> None:
    """Writes through a temporary sibling and an atomic rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_file = path.with_suffix(path.suffix + ".tmp")
    try:
        with open(tmp_file, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp_file, path)
    finally:
        if tmp_file.exists():
            tmp_file.unlink()


def read_log(path: Path) -> ConvergenceLog:
    """Parses a convergence CSV.

    Raises:
        InvalidArgumentError: If the header is wrong or the file has no rows.
    """
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise InvalidArgumentError(f"{path} is not a convergence CSV")
    if len(lines) < 2:
        raise InvalidArgumentError(f"{path} has no records")
    fe, best = zip(*(line.split(",") for line in lines[1:]), strict=True)
    return ConvergenceLog.from_records([int(v) for v in fe], [float(v) for v in best])


def run_path(out_dir: Path, arm: str, problem_id: str, index: int, seed: int) -> Path:
    return out_dir / arm / problem_id / f"run-{index}-s{seed}.csv"


def run_files(problem_dir: Path) -> list[Path]:
    """Run CSVs of one problem directory, ordered by run index."""
    files = [p for p in problem_dir.glob(RUN_FILE_PATTERN) if _RUN_FILE_RE.match(p.name)]
    return sorted(files, key=lambda p: int(_RUN_FILE_RE.match(p.name).group(1)))  # type: ignore[union-attr]


# --- Execution ---


@dataclass(frozen=True)
class RunTask:
    arm: ArmSpec
    problem_id: str
    run_index: int
    seed: int
    max_FEs: int
    out_dir: Path

    @property
    def path(self) -> Path:
        return run_path(self.out_dir, self.arm.name, self.problem_id, self.run_index, self.seed)


@dataclass(frozen=True)
class RunRecord:
    """A finished run and where its log was written."""

    arm: str
    problem_id: str
    run_index: int
    seed: int
    final_best: float
    fe_used: int
    generations: int
    path: Path
    events: tuple[dict[str, Any], ...] = ()


@dataclass(frozen=True)
class RunFailure:
    """A run that raised; the batch carries on without it."""

    arm: str
    problem_id: str
    run_index: int
    seed: int
    error: str


@dataclass
class ExperimentResult:
    records: list[RunRecord] = field(default_factory=list)
    failures: list[RunFailure] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def finals(self, arm: str) -> dict[str, list[float]]:
        """Problem id -> final objectives of `arm`, in run order."""
        out: dict[str, list[float]] = {}
        for r in sorted(self.records, key=lambda r: (r.problem_id, r.run_index)):
            if r.arm == arm:
                out.setdefault(r.problem_id, []).append(r.final_best)
        return out


def execute_run(task: RunTask) -> RunRecord | RunFailure:
    """Runs one (arm, problem, seed) and writes its convergence CSV."""
    try:
        problem = bench.resolve(task.problem_id)
        config = task.arm.resolve(problem.dim, task.max_FEs)
        if task.arm.mode == "single":
            result = engine.run_single_space(problem, config, task.seed)
        else:
            result = engine.run(problem, config, task.seed)
        atomic_write(task.path, format_log(result.log))
    except Exception as e:
        logger.exception(
            f"Run {task.run_index} of {task.arm.name} on {task.problem_id} failed."
        )
        return RunFailure(
            arm=task.arm.name,
            problem_id=task.problem_id,
            run_index=task.run_index,
            seed=task.seed,
            error=f"{type(e).__name__}: {e}",
        )
    return RunRecord(
        arm=task.arm.name,
        problem_id=task.problem_id,
        run_index=task.run_index,
        seed=task.seed,
        final_best=result.best_f,
        fe_used=result.fe_used,
        generations=result.generations,
        path=task.path,
        events=result.events,
    )


def plan(spec: ExperimentSpec) -> list[RunTask]:
    """Every run of the experiment, ordered arm, problem, run index."""
    return [
        RunTask(arm, pid, i, seed, spec.max_FEs, spec.out_dir)
        for arm in spec.arms
        for pid in spec.problem_ids()
        for i, seed in enumerate(spec.seeds())
    ]


def run_experiment(
    spec: ExperimentSpec,
    on_result: Callable[[RunRecord | RunFailure], None] | None = None,
) -> ExperimentResult:
    """Executes runs x arms x problems and writes the result tree.

    Args:
        spec (ExperimentSpec): A validated spec.
        on_result (Callable | None): Called after every finished run.

    Returns:
        ExperimentResult: Successful runs and recorded failures.
    """
    spec.validate()
    for arm in spec.arms:
        if arm.gated_keys():
            logger.warning(
                f"Arm '{arm.name}' is single-space; ignoring {', '.join(arm.gated_keys())}."
            )
    tasks = plan(spec)
    logger.info(f"Starting {len(tasks)} runs with {spec.workers} worker(s).")

    if spec.workers > 1:
        outcomes: Iterable[RunRecord | RunFailure] = Parallel(
            n_jobs=spec.workers, backend="loky", return_as="generator"
        )(delayed(execute_run)(t) for t in tasks)
    else:
        outcomes = (execute_run(t) for t in tasks)

    result = ExperimentResult()
    for outcome in outcomes:
        if isinstance(outcome, RunFailure):
            result.failures.append(outcome)
        else:
            result.records.append(outcome)
        if on_result is not None:
            on_result(outcome)

    write_summary(spec.out_dir / SUMMARY_FILE, result.records)
    write_events(spec.out_dir / EVENTS_FILE, result.records)
    logger.info(
        f"Finished: {len(result.records)} runs written, {len(result.failures)} failed."
    )
    return result


# --- Aggregation ---

SUMMARY_HEADER = ["arm", "problem", "runs", "mean", "std", "median", "best", "worst"]


def summary_rows(finals: dict[str, dict[str, list[float]]]) -> list[list[str]]:
    """arm -> problem -> finals, flattened into summary.csv rows."""
    rows = []
    for arm in sorted(finals):
        for pid in sorted(finals[arm]):
            values = np.asarray(finals[arm][pid], dtype=np.float64)
            std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
            rows.append(
                [
                    arm,
                    pid,
                    str(values.size),
                    repr(float(np.mean(values))),
                    repr(std),
                    repr(float(np.median(values))),
                    repr(float(values.min())),
                    repr(float(values.max())),
                ]
            )
    return rows


def write_summary(path: Path, records: list[RunRecord]) -> None:
    finals: dict[str, dict[str, list[float]]] = {}
    for r in sorted(records, key=lambda r: (r.arm, r.problem_id, r.run_index)):
        finals.setdefault(r.arm, {}).setdefault(r.problem_id, []).append(r.final_best)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SUMMARY_HEADER)
    writer.writerows(summary_rows(finals))
    atomic_write(path, buffer.getvalue())
    logger.info(f"Wrote {path}.")


def write_events(path: Path, records: list[RunRecord]) -> None:
    """One JSON object per event, tagged with arm, problem, run and seed."""
    lines = []
    for r in sorted(records, key=lambda r: (r.arm, r.problem_id, r.run_index)):
        for event in r.events:
            tagged = {
                "arm": r.arm,
                "problem": r.problem_id,
                "run": r.run_index,
                "seed": r.seed,
                **event,
            }
            lines.append(json.dumps(tagged, sort_keys=True))
    atomic_write(path, "\n".join(lines) + ("\n" if lines else ""))


def read_events(path: Path) -> list[dict[str, Any]]:
    if not path.exists():
        return []
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def load_logs(arm_dir: Path) -> dict[str, list[ConvergenceLog]]:
    """Problem id -> convergence logs of every run found under an arm directory.

    Raises:
        InvalidArgumentError: If the directory holds no run files.
    """
    if not arm_dir.is_dir():
        raise InvalidArgumentError(f"{arm_dir} is not a directory")
    logs = {}
    for problem_dir in sorted(p for p in arm_dir.iterdir() if p.is_dir()):
        files = run_files(problem_dir)
        if files:
            logs[problem_dir.name] = [read_log(f) for f in files]
    if not logs:
        raise InvalidArgumentError(f"no run files under {arm_dir}")
    return logs


def load_arm(arm_dir: Path) -> dict[str, list[float]]:
    """Problem id -> final objectives (the last CSV row of each run)."""
    return {pid: [log.best[-1] for log in logs] for pid, logs in load_logs(arm_dir).items()}


# --- Sensitivity sweeps ---


@dataclass(frozen=True)
class SweepResult:
    """Mean final objective per (arm, value, problem), raw and normalized.

    Attributes:
        param (str): The swept parameter.
        rows (tuple): (arm, value, problem, mean_best) rows.
        normalized (tuple): (arm, value, problem, normalized) rows.
        experiment (ExperimentResult): The underlying runs.
    """

    param: str
    rows: tuple[tuple[str, str, str, float], ...]
    normalized: tuple[tuple[str, str, str, float], ...]
    experiment: ExperimentResult


def _sweep_value(param: str, raw: int | str) -> int | str:
    text = str(raw).strip()
    if text.isdigit():
        return int(text)
    if param in ("G_t", "G_r"):
        raise SpecError(f"{param} must be a positive integer, got '{raw}'", key=param)
    return text


def _label(arm: str, param: str, value: int | str) -> str:
    return re.sub(r"[^A-Za-z0-9_.=-]", "x", f"{arm}.{param}={value}")


def normalize_by_worst(values: dict[str, float]) -> dict[str, float]:
    """Divides every entry by the largest one; the worst becomes 1.0."""
    worst = max(values.values())
    if worst == 0.0:
        return {k: 0.0 for k in values}
    return {k: v / worst for k, v in values.items()}


def sweep_spec(
    spec: ExperimentSpec, param: str, values: list[int | str]
) -> tuple[ExperimentSpec, dict[str, str]]:
    """Expands a spec into one arm per (multi-space arm, value).

    Single-space arms are kept once as baselines.

    Returns:
        tuple: The expanded, validated spec and arm name -> swept value.

    Raises:
        SpecError: On an unknown parameter or any invalid value.
    """
    if param not in SWEEP_PARAMS:
        raise SpecError(
            f"Cannot sweep '{param}'; choose one of {', '.join(SWEEP_PARAMS)}", key=param
        )
    if not values:
        raise SpecError("sweep needs at least one value", key=param)
    parsed = [_sweep_value(param, v) for v in values]
    arms: list[ArmSpec] = []
    labels: dict[str, str] = {}
    for arm in spec.arms:
        if arm.mode == "single":
            arms.append(arm)
            labels[arm.name] = "baseline"
            continue
        for value in parsed:
            name = _label(arm.name, param, value)
            arms.append(
                replace(
                    arm,
                    name=name,
                    mses=replace(arm.mses, **{param: value}),
                    explicit=arm.explicit | {param},
                )
            )
            labels[name] = str(value)
    expanded = replace(spec, arms=arms)
    expanded.validate()
    return expanded, labels


def sweep(
    spec: ExperimentSpec,
    param: str,
    values: list[int | str],
    on_result: Callable[[RunRecord | RunFailure], None] | None = None,
) -> SweepResult:
    """Runs the experiment once per value and writes the sweep tables.

    Every value is validated before the first run starts. Writes
    `sweep-<param>.csv` and `sweep-<param>-normalized.csv` into `out_dir`,
    the latter divided per problem by the worst (largest) mean objective.
    """
    expanded, labels = sweep_spec(spec, param, values)
    result = run_experiment(expanded, on_result)

    means: dict[str, dict[str, float]] = {}
    for arm in expanded.arms:
        for pid, finals in result.finals(arm.name).items():
            means.setdefault(pid, {})[arm.name] = float(np.mean(finals))

    rows, normalized = [], []
    for pid in sorted(means):
        scaled = normalize_by_worst(means[pid])
        for arm in expanded.arms:
            if arm.name in means[pid]:
                rows.append((arm.name, labels[arm.name], pid, means[pid][arm.name]))
                normalized.append((arm.name, labels[arm.name], pid, scaled[arm.name]))

    for suffix, header, table in (
        ("", "mean_best", rows),
        ("-normalized", "normalized", normalized),
    ):
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["arm", param, "problem", header])
        writer.writerows([a, v, p, repr(x)] for a, v, p, x in table)
        atomic_write(spec.out_dir / f"sweep-{param}{suffix}.csv", buffer.getvalue())
    logger.info(f"Sweep over {param} written to {spec.out_dir}.")
    return SweepResult(
        param=param, rows=tuple(rows), normalized=tuple(normalized), experiment=result
    )
