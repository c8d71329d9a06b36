"""SVG charts: averaged convergence curves and transfer diagnostics."""

import csv
import io
import logging
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import numpy.typing as npt  # noqa: E402

from .constants import APP_NAME, CSV_FLOAT_FORMAT  # noqa: E402
from .engine import ConvergenceLog  # noqa: E402
from .errors import InvalidArgumentError  # noqa: E402

logger = logging.getLogger(APP_NAME)

_SVG_SETTINGS = {"svg.hashsalt": APP_NAME, "svg.fonttype": "none"}


def step_values(log: ConvergenceLog, grid: npt.ArrayLike) -> npt.NDArray[np.float64]:
    """Best-so-far of one run at every grid point (step interpolation).

    Grid points before the first record take the first recorded value.
    """
    fe = np.asarray(log.fe)
    best = np.asarray(log.best, dtype=np.float64)
    pos = np.searchsorted(fe, np.asarray(grid), side="right") - 1
    return best[np.maximum(pos, 0)]


def average_series(
    logs: Sequence[ConvergenceLog], grid: npt.ArrayLike | None = None
) -> tuple[npt.NDArray[np.int64], npt.NDArray[np.float64]]:
    """Mean best-so-far over runs on a common FE grid.

    The default grid is the union of every run's FE counts.

    Raises:
        InvalidArgumentError: If no non-empty log is given.
    """
    logs = [log for log in logs if len(log)]
    if not logs:
        raise InvalidArgumentError("no convergence records to average")
    if grid is None:
        grid = np.unique(np.concatenate([np.asarray(log.fe) for log in logs]))
    points = np.asarray(grid, dtype=np.int64)
    values = np.mean([step_values(log, points) for log in logs], axis=0)
    return points, values


def averaged_csv(series: Mapping[str, tuple[npt.ArrayLike, npt.ArrayLike]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["arm", "fe", "mean_best"])
    for arm, (fe, mean) in series.items():
        for f, m in zip(np.asarray(fe).tolist(), np.asarray(mean).tolist(), strict=True):
            writer.writerow([arm, int(f), format(float(m), CSV_FLOAT_FORMAT)])
    return buffer.getvalue()


def _save(fig: Any, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_plot(
    runs: Mapping[str, Sequence[ConvergenceLog]],
    path: Path,
    title: str | None = None,
    csv_path: Path | None = None,
) -> dict[str, tuple[npt.NDArray[np.int64], npt.NDArray[np.float64]]]:
    """Draws one averaged convergence curve per arm.

    The y axis is logarithmic; if any averaged value is not positive a
    symlog scale is used instead and a note is logged. The averaged series
    are also written as `arm,fe,mean_best` CSV (next to the SVG by default).

    Args:
        runs (Mapping[str, Sequence[ConvergenceLog]]): Arm name -> run logs.
        path (Path): SVG destination.
        title (str | None): Chart title.
        csv_path (Path | None): Destination of the averaged CSV.

    Returns:
        dict: Arm name -> (FE grid, mean best-so-far).

    Raises:
        InvalidArgumentError: If no arm has any records.
    """
    if not runs:
        raise InvalidArgumentError("nothing to plot")
    all_logs = [log for logs in runs.values() for log in logs if len(log)]
    if not all_logs:
        raise InvalidArgumentError("nothing to plot")
    grid = np.unique(np.concatenate([np.asarray(log.fe) for log in all_logs]))
    series = {arm: average_series(logs, grid) for arm, logs in runs.items() if logs}

    with plt.rc_context(_SVG_SETTINGS):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for arm, (fe, mean) in series.items():
            marker = "o" if fe.size == 1 else None
            ax.plot(fe, mean, label=arm, marker=marker, linewidth=1.5)
        if min(float(mean.min()) for _, mean in series.values()) > 0.0:
            ax.set_yscale("log")
        else:
            logger.warning("Non-positive averaged objectives; using a symlog axis.")
            ax.set_yscale("symlog")
        ax.set_xlabel("Fitness evaluations")
        ax.set_ylabel("Averaged best objective")
        if title:
            ax.set_title(title)
        ax.legend()
        ax.grid(True, which="major", alpha=0.3)
        fig.tight_layout()
        _save(fig, path)

    target = csv_path or path.with_suffix(".csv")
    target.write_text(averaged_csv(series), encoding="utf-8")
    logger.info(f"Wrote {path} and {target}.")
    return series


def emit_transfer_plot(
    events: Sequence[Mapping[str, Any]], path: Path, title: str | None = None
) -> int:
    """Scatters every solution transferred into P against its generation.

    The best objective of P just before each transfer is drawn as a line, so
    points below it are transfers that improved the original population.

    Returns:
        int: Number of transfer events plotted.

    Raises:
        InvalidArgumentError: If there are no transfer events.
    """
    transfers = [e for e in events if e.get("event") == "transfer"]
    if not transfers:
        raise InvalidArgumentError("no transfer events to plot")
    gens = [int(e["generation"]) for e in transfers]
    xs = [g for g, e in zip(gens, transfers, strict=True) for _ in e["to_P_objectives"]]
    ys = [float(v) for e in transfers for v in e["to_P_objectives"]]
    best = [float(e["best_P_before"]) for e in transfers]

    with plt.rc_context(_SVG_SETTINGS):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        ax.scatter(xs, ys, s=6, alpha=0.5, label="transferred to P")
        ax.plot(gens, best, color="black", linewidth=1.2, label="best in P before transfer")
        values = np.asarray(ys + best)
        ax.set_yscale("log" if np.all(values > 0) else "symlog")
        ax.set_xlabel("Generation")
        ax.set_ylabel("Objective")
        if title:
            ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        _save(fig, path)
    logger.info(f"Wrote {path}.")
    return len(transfers)
