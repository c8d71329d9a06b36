"""Tests for experiment execution, the result tree and sweeps."""

import logging
from collections.abc import Iterator
from dataclasses import replace
from pathlib import Path
from unittest.mock import MagicMock

import pytest

from mses import harness
from mses.config import ArmSpec, ExperimentSpec, MsesSection
from mses.constants import APP_NAME
from mses.engine import ConvergenceLog
from mses.errors import InvalidArgumentError, SpecError


@pytest.fixture
def tiny_spec(tmp_path: Path) -> ExperimentSpec:
    """Two arms, one 10-D problem, three short runs each."""
    return ExperimentSpec(
        problems=["partial-elliptic-d10-s1"],
        runs=3,
        base_seed=11,
        max_FEs=300,
        out_dir=tmp_path / "out",
        arms=[
            ArmSpec(name="mses-de", mses=MsesSection(NP=10)),
            ArmSpec(name="de", mode="single", mses=MsesSection(NP=10)),
        ],
    )


@pytest.fixture
def clean_logger() -> Iterator[logging.Logger]:
    """Removes handlers installed by `setup_logging` after the test."""
    logger = logging.getLogger(APP_NAME)
    yield logger
    for handler in list(logger.handlers):
        if getattr(handler, "_mses", False):
            logger.removeHandler(handler)
            handler.close()
    logger.setLevel(logging.NOTSET)


def test_run_experiment_writes_result_tree(tiny_spec: ExperimentSpec) -> None:
    """Verifies one CSV per run plus the summary and event files.

    Args:
        tiny_spec (ExperimentSpec): The two-arm fixture spec.
    """
    result = harness.run_experiment(tiny_spec)
    out = tiny_spec.out_dir

    assert result.ok
    assert len(result.records) == 6
    for arm in ("mses-de", "de"):
        files = harness.run_files(out / arm / "partial-elliptic-d10-s1")
        assert [f.name for f in files] == [
            "run-0-s11.csv",
            "run-1-s12.csv",
            "run-2-s13.csv",
        ]

    summary = (out / "summary.csv").read_text().splitlines()
    assert summary[0] == "arm,problem,runs,mean,std,median,best,worst"
    assert [row.split(",")[0] for row in summary[1:]] == ["de", "mses-de"]
    assert all(row.split(",")[2] == "3" for row in summary[1:])

    events = harness.read_events(out / "events.jsonl")
    assert {e["arm"] for e in events} == {"mses-de"}
    assert sum(e["event"] == "init" for e in events) == 3
    assert all({"problem", "run", "seed", "fe"} <= set(e) for e in events)


def test_final_rows_match_records(tiny_spec: ExperimentSpec) -> None:
    """Verifies the last CSV row of every run is its reported final objective.

    Args:
        tiny_spec (ExperimentSpec): The two-arm fixture spec.
    """
    result = harness.run_experiment(tiny_spec)
    for arm in ("mses-de", "de"):
        loaded = harness.load_arm(tiny_spec.out_dir / arm)
        assert loaded == result.finals(arm)
    for record in result.records:
        log = harness.read_log(record.path)
        assert log.fe[-1] == record.fe_used


def test_runs_are_reproducible(tiny_spec: ExperimentSpec, tmp_path: Path) -> None:
    """Verifies identical bytes across repeated and parallel executions.

    Args:
        tiny_spec (ExperimentSpec): The two-arm fixture spec.
        tmp_path (Path): Pytest fixture for a temporary directory.
    """
    first = harness.run_experiment(tiny_spec)
    again = harness.run_experiment(tiny_spec.with_overrides(out_dir=tmp_path / "again"))
    parallel = harness.run_experiment(
        tiny_spec.with_overrides(out_dir=tmp_path / "parallel", workers=2)
    )
    for a, b, c in zip(first.records, again.records, parallel.records, strict=True):
        assert a.path.read_bytes() == b.path.read_bytes() == c.path.read_bytes()
    assert (tiny_spec.out_dir / "summary.csv").read_bytes() == (
        tmp_path / "parallel" / "summary.csv"
    ).read_bytes()


def test_failed_run_is_recorded(tiny_spec: ExperimentSpec, mocker: MagicMock) -> None:
    """Verifies a raising run becomes a failure while the batch completes.

    Args:
        tiny_spec (ExperimentSpec): The two-arm fixture spec.
        mocker (MagicMock): Pytest fixture for mocking.
    """
    mocker.patch("mses.engine.run", side_effect=RuntimeError("boom"))
    seen: list[object] = []

    result = harness.run_experiment(tiny_spec, on_result=seen.append)
    assert not result.ok
    assert len(result.failures) == 3
    assert all(f.error == "RuntimeError: boom" for f in result.failures)
    assert len(result.records) == 3
    assert len(seen) == 6

    summary = (tiny_spec.out_dir / "summary.csv").read_text().splitlines()
    assert len(summary) == 2
    assert not (tiny_spec.out_dir / "mses-de").exists()


def test_gated_keys_are_warned_about(
    tiny_spec: ExperimentSpec, caplog: pytest.LogCaptureFixture
) -> None:
    """Verifies multi-space keys on a single-space arm produce a warning.

    Args:
        tiny_spec (ExperimentSpec): The two-arm fixture spec.
        caplog (LogCaptureFixture): Pytest fixture for captured logs.
    """
    single = replace(tiny_spec.arms[1], explicit=frozenset({"NP", "G_t"}))
    harness.run_experiment(replace(tiny_spec, arms=[single], runs=1))
    assert "Arm 'de' is single-space; ignoring G_t." in caplog.text


def test_invalid_spec_fails_before_running(tiny_spec: ExperimentSpec) -> None:
    """Verifies validation happens before any run is written.

    Args:
        tiny_spec (ExperimentSpec): The two-arm fixture spec.
    """
    wide = replace(tiny_spec.arms[0], mses=MsesSection(NP=10, d_s=10))
    with pytest.raises(SpecError):
        harness.run_experiment(replace(tiny_spec, arms=[wide]))
    assert not tiny_spec.out_dir.exists()


# --- Files ---


def test_convergence_csv_is_lossless(tmp_path: Path) -> None:
    """Verifies 17 significant digits survive a write and read.

    Args:
        tmp_path (Path): Pytest fixture for a temporary directory.
    """
    log = ConvergenceLog.from_records([1, 50, 100], [1 / 3, 0.1 + 0.2, 1e-300])
    path = tmp_path / "run-0-s0.csv"
    harness.atomic_write(path, harness.format_log(log))

    text = path.read_text()
    assert text.startswith("fe,best\n")
    assert "\r" not in text
    loaded = harness.read_log(path)
    assert loaded.fe == log.fe
    assert loaded.best == log.best
    assert not list(tmp_path.glob("*.tmp"))


def test_read_log_rejects_other_files(tmp_path: Path) -> None:
    """Verifies a wrong header or an empty body is an error.

    Args:
        tmp_path (Path): Pytest fixture for a temporary directory.
    """
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n")
    with pytest.raises(InvalidArgumentError):
        harness.read_log(bad)
    bad.write_text("fe,best\n")
    with pytest.raises(InvalidArgumentError):
        harness.read_log(bad)


def test_run_files_order_numerically(tmp_path: Path) -> None:
    """Verifies run-10 sorts after run-2 and strangers are ignored.

    Args:
        tmp_path (Path): Pytest fixture for a temporary directory.
    """
    for name in ("run-10-s10.csv", "run-2-s2.csv", "run-x-s1.csv", "notes.txt"):
        (tmp_path / name).write_text("fe,best\n1,1\n")
    names = [p.name for p in harness.run_files(tmp_path)]
    assert names == ["run-2-s2.csv", "run-10-s10.csv"]


def test_load_logs_requires_runs(tmp_path: Path) -> None:
    """Verifies an arm directory without run files is an error.

    Args:
        tmp_path (Path): Pytest fixture for a temporary directory.
    """
    (tmp_path / "arm" / "p").mkdir(parents=True)
    with pytest.raises(InvalidArgumentError, match="no run files"):
        harness.load_logs(tmp_path / "arm")
    with pytest.raises(InvalidArgumentError, match="not a directory"):
        harness.load_logs(tmp_path / "missing")


def test_setup_logging_writes_file_once(
    tmp_path: Path, clean_logger: logging.Logger
) -> None:
    """Verifies the rotating file handler and that repeated calls do not stack.

    Args:
        tmp_path (Path): Pytest fixture for a temporary directory.
        clean_logger (logging.Logger): The package logger, cleaned afterwards.
    """
    harness.setup_logging(tmp_path)
    harness.setup_logging(tmp_path, verbose=True)
    ours = [h for h in clean_logger.handlers if getattr(h, "_mses", False)]
    assert len(ours) == 2

    clean_logger.info("hello from the test")
    for handler in ours:
        handler.flush()
    assert "hello from the test" in (tmp_path / "mses.log").read_text()


# --- Sweeps ---


def test_normalize_by_worst() -> None:
    """Verifies the worst entry maps to 1 and scaling leaves the result unchanged."""
    values = {"a": 2.0, "b": 8.0, "c": 0.0}
    assert harness.normalize_by_worst(values) == {"a": 0.25, "b": 1.0, "c": 0.0}
    scaled = {k: 7.0 * v for k, v in values.items()}
    assert harness.normalize_by_worst(scaled) == harness.normalize_by_worst(values)
    assert harness.normalize_by_worst({"a": 0.0, "b": 0.0}) == {"a": 0.0, "b": 0.0}


def test_sweep_spec_expands_arms(tiny_spec: ExperimentSpec) -> None:
    """Verifies one arm per value and a single baseline per single-space arm.

    Args:
        tiny_spec (ExperimentSpec): The two-arm fixture spec.
    """
    expanded, labels = harness.sweep_spec(tiny_spec, "A_size", [20, "3*NP"])
    assert [a.name for a in expanded.arms] == [
        "mses-de.A_size=20",
        "mses-de.A_size=3xNP",
        "de",
    ]
    assert labels == {
        "mses-de.A_size=20": "20",
        "mses-de.A_size=3xNP": "3*NP",
        "de": "baseline",
    }
    assert expanded.arms[1].resolve(10, 300).archive_capacity == 30


@pytest.mark.parametrize(
    ("param", "values"),
    [("F", [0.5]), ("d_s", []), ("G_t", ["0.5*NP"]), ("d_s", [3, 10])],
)
def test_sweep_spec_rejects_bad_requests(
    tiny_spec: ExperimentSpec, param: str, values: list[int | str]
) -> None:
    """Verifies unknown parameters and invalid values fail up front.

    Args:
        tiny_spec (ExperimentSpec): The two-arm fixture spec.
        param (str): The swept parameter.
        values (list[int | str]): The requested values.
    """
    with pytest.raises(SpecError):
        harness.sweep_spec(tiny_spec, param, values)


def test_sweep_writes_tables(tiny_spec: ExperimentSpec) -> None:
    """Verifies the raw and normalized sweep tables.

    Args:
        tiny_spec (ExperimentSpec): The two-arm fixture spec.
    """
    spec = replace(tiny_spec, runs=2)
    result = harness.sweep(spec, "d_s", [3, 6])

    raw = (spec.out_dir / "sweep-d_s.csv").read_text().splitlines()
    assert raw[0] == "arm,d_s,problem,mean_best"
    assert len(raw) == 4
    normalized = (spec.out_dir / "sweep-d_s-normalized.csv").read_text().splitlines()
    assert normalized[0] == "arm,d_s,problem,normalized"

    assert max(value for *_, value in result.normalized) == 1.0
    assert all(0.0 <= value <= 1.0 for *_, value in result.normalized)
    assert {(arm, value) for arm, value, _, _ in result.rows} == {
        ("mses-de.d_s=3", "3"),
        ("mses-de.d_s=6", "6"),
        ("de", "baseline"),
    }
