"""Wilcoxon rank-sum testing and the arm-versus-arm comparison report."""

import csv
import io
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from rich.console import Console
from rich.table import Table
from scipy.stats import norm, rankdata, tiecorrect

from .constants import EXACT_WILCOXON_MAX_N, SIGNIFICANCE_LEVEL
from .errors import InvalidArgumentError

VERDICTS = ("+", "-", "≈")


@dataclass(frozen=True)
class WilcoxonResult:
    """Rank-sum statistic of the first sample and its two-sided p-value.

    Attributes:
        statistic (float): Sum of the midranks of sample a in the pooled data.
        p_value (float): Two-sided p-value in [0, 1].
        exact (bool): True when p was obtained by enumeration.
    """

    statistic: float
    p_value: float
    exact: bool


def _sample(values: npt.ArrayLike, name: str) -> npt.NDArray[np.float64]:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise InvalidArgumentError(f"sample {name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"sample {name} contains NaN or Inf")
    return arr


def rank_sum_counts(n: int, total: int) -> npt.NDArray[np.int64]:
    """Number of n-subsets of {1..total} for every possible rank sum.

    Index s of the result counts the subsets whose elements add up to s.
    """
    max_sum = total * (total + 1) // 2
    counts = np.zeros((n + 1, max_sum + 1), dtype=np.int64)
    counts[0, 0] = 1
    for r in range(1, total + 1):
        shifted = counts[:-1, :-r].copy()
        counts[1:, r:] += shifted
    return counts[n]


def exact_p_value(statistic: float, n: int, m: int) -> float:
    """Two-sided enumeration p-value, 2·min(P(W <= w), P(W >= w)) capped at 1."""
    counts = rank_sum_counts(n, n + m)
    total = math.comb(n + m, n)
    w = int(round(statistic))
    lower = counts[: w + 1].sum() / total
    upper = counts[w:].sum() / total
    return float(min(1.0, 2.0 * min(lower, upper)))


def wilcoxon_rank_sum(a: npt.ArrayLike, b: npt.ArrayLike) -> WilcoxonResult:
    """Two-sided Wilcoxon rank-sum test.

    Ties receive midranks. When the pooled size is at most 20 and there are
    no ties the p-value is exact; otherwise the normal approximation is used
    with tie and continuity corrections.

    Raises:
        InvalidArgumentError: If either sample is empty or non-finite.
    """
    x = _sample(a, "a")
    y = _sample(b, "b")
    n, m = x.size, y.size
    pooled = np.concatenate([x, y])
    ranks = rankdata(pooled)
    statistic = float(ranks[:n].sum())

    has_ties = np.unique(pooled).size < pooled.size
    if n + m <= EXACT_WILCOXON_MAX_N and not has_ties:
        return WilcoxonResult(statistic, exact_p_value(statistic, n, m), exact=True)

    mean = n * (n + m + 1) / 2.0
    variance = n * m * (n + m + 1) / 12.0 * float(tiecorrect(ranks))
    if variance <= 0.0:
        return WilcoxonResult(statistic, 1.0, exact=False)
    z = max(abs(statistic - mean) - 0.5, 0.0) / math.sqrt(variance)
    return WilcoxonResult(statistic, float(min(1.0, 2.0 * norm.sf(z))), exact=False)


@dataclass(frozen=True)
class ArmSummary:
    mean: float
    std: float
    median: float

    @classmethod
    def of(cls, values: Sequence[float]) -> "ArmSummary":
        arr = np.asarray(values, dtype=np.float64)
        std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
        return cls(mean=float(np.mean(arr)), std=std, median=float(np.median(arr)))


@dataclass(frozen=True)
class ComparisonRow:
    """One problem of a comparison. Verdicts are from arm A's point of view."""

    problem_id: str
    a: ArmSummary
    b: ArmSummary
    statistic: float
    p_value: float
    verdict: str
    note: str = ""


@dataclass(frozen=True)
class ComparisonReport:
    """Per-problem statistics of two arms with +/-/≈ verdicts for arm A."""

    name_a: str
    name_b: str
    rows: tuple[ComparisonRow, ...]

    def tally(self) -> dict[str, int]:
        return {v: sum(r.verdict == v for r in self.rows) for v in VERDICTS}

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(
            [
                "problem",
                "arm_a",
                "mean_a",
                "std_a",
                "median_a",
                "arm_b",
                "mean_b",
                "std_b",
                "median_b",
                "statistic",
                "p_value",
                "verdict",
                "note",
            ]
        )
        for r in self.rows:
            writer.writerow(
                [
                    r.problem_id,
                    self.name_a,
                    repr(r.a.mean),
                    repr(r.a.std),
                    repr(r.a.median),
                    self.name_b,
                    repr(r.b.mean),
                    repr(r.b.std),
                    repr(r.b.median),
                    repr(r.statistic),
                    repr(r.p_value),
                    r.verdict,
                    r.note,
                ]
            )
        return buffer.getvalue()

    def to_table(self) -> Table:
        table = Table(title=f"{self.name_a} vs {self.name_b}")
        table.add_column("Problem", style="cyan")
        table.add_column(f"{self.name_a} mean ± std", justify="right")
        table.add_column(f"{self.name_a} median", justify="right")
        table.add_column(f"{self.name_b} mean ± std", justify="right")
        table.add_column(f"{self.name_b} median", justify="right")
        table.add_column("p", justify="right")
        table.add_column("", justify="center")
        for r in self.rows:
            verdict = r.verdict + (f" ({r.note})" if r.note else "")
            table.add_row(
                r.problem_id,
                f"{r.a.mean:.4e} ± {r.a.std:.2e}",
                f"{r.a.median:.4e}",
                f"{r.b.mean:.4e} ± {r.b.std:.2e}",
                f"{r.b.median:.4e}",
                f"{r.p_value:.3g}",
                verdict,
            )
        return table

    def to_text(self) -> str:
        """Aligned plain text, free of terminal escape codes."""
        buffer = io.StringIO()
        console = Console(file=buffer, width=160, color_system=None, force_terminal=False)
        console.print(self.to_table())
        t = self.tally()
        console.print(f"+ / - / ≈ : {t['+']} / {t['-']} / {t['≈']}")
        return buffer.getvalue()


def _verdict(
    a: ArmSummary, b: ArmSummary, test: WilcoxonResult, null_statistic: float
) -> str:
    """+, - or ≈ from A's point of view; ≈ exactly when p >= the level.

    Median decides, then mean. When both tie, the rank sum decides: a
    significant p-value means it differs from its null expectation.
    """
    if test.p_value >= SIGNIFICANCE_LEVEL:
        return "≈"
    if a.median != b.median:
        return "+" if a.median < b.median else "-"
    if a.mean != b.mean:
        return "+" if a.mean < b.mean else "-"
    return "+" if test.statistic < null_statistic else "-"


def compare(
    results_a: Mapping[str, Sequence[float]],
    results_b: Mapping[str, Sequence[float]],
    name_a: str = "A",
    name_b: str = "B",
) -> ComparisonReport:
    """Compares final objectives of two arms problem by problem.

    Args:
        results_a (Mapping[str, Sequence[float]]): Problem id -> final
            objectives of arm A, one per run.
        results_b (Mapping[str, Sequence[float]]): The same for arm B.
        name_a (str): Label of arm A.
        name_b (str): Label of arm B.

    Returns:
        ComparisonReport: Rows in sorted problem order.

    Raises:
        InvalidArgumentError: If the problem sets or run counts differ.
    """
    if set(results_a) != set(results_b):
        only = sorted(set(results_a) ^ set(results_b))
        raise InvalidArgumentError(f"problem sets differ: {', '.join(only)}")
    rows = []
    for pid in sorted(results_a):
        a, b = list(results_a[pid]), list(results_b[pid])
        if len(a) != len(b):
            raise InvalidArgumentError(
                f"{pid}: {name_a} has {len(a)} runs but {name_b} has {len(b)}"
            )
        test = wilcoxon_rank_sum(a, b)
        sa, sb = ArmSummary.of(a), ArmSummary.of(b)
        if len(a) < 2:
            verdict, note = "≈", "insufficient runs"
        else:
            null_statistic = len(a) * (len(a) + len(b) + 1) / 2.0
            verdict, note = _verdict(sa, sb, test, null_statistic), ""
        rows.append(
            ComparisonRow(
                problem_id=pid,
                a=sa,
                b=sb,
                statistic=test.statistic,
                p_value=test.p_value,
                verdict=verdict,
                note=note,
            )
        )
    return ComparisonReport(name_a=name_a, name_b=name_b, rows=tuple(rows))
