"""Tests for experiment spec parsing and validation."""

from dataclasses import fields
from pathlib import Path

import pytest

from mses import config
from mses.config import ArmSpec, ExperimentSpec, MsesSection, parse_spec
from mses.errors import SpecError

MINIMAL = '[experiment]\nproblems = ["partial-elliptic-d20-s1"]\n'


def test_minimal_spec_defaults() -> None:
    """Verifies a spec with only problems is fully defaulted."""
    spec = parse_spec(MINIMAL)
    assert spec.runs == 25
    assert spec.base_seed == 0
    assert spec.workers == 1
    assert spec.out_dir == Path("results")
    assert [a.name for a in spec.arms] == ["mses-de", "de"]
    assert [a.mode for a in spec.arms] == ["mses", "single"]
    assert spec.arms[0].NP == 50

    resolved = spec.arms[0].resolve(20, spec.max_FEs)
    assert (resolved.d_s, resolved.Q, resolved.P_count) == (12, 10, 10)
    assert resolved.archive_capacity == 250


@pytest.mark.parametrize(
    ("value", "expected"),
    [(12, 12), ("0.2*NP", 10), ("0.6 * dim", 5), ("5*NP", 250), ("1*dim", 7)],
)
def test_parse_scaled(value: int | str, expected: int) -> None:
    """Verifies integer and scaled counts with NP = 50, dim = 7.

    Args:
        value (int | str): The count as written in a spec.
        expected (int): The resolved count.
    """
    assert config.parse_scaled(value, NP=50, dim=7) == expected


@pytest.mark.parametrize("value", ["0.2*N", "NP", "-1*NP", True])
def test_parse_scaled_rejects_garbage(value: int | str) -> None:
    """Verifies malformed counts raise ValueError.

    Args:
        value (int | str): The malformed count.
    """
    with pytest.raises(ValueError):
        config.parse_scaled(value, NP=50, dim=7)


def test_unknown_key_names_the_intended_one() -> None:
    """Verifies a typo in [arms.mses] reports the key, a suggestion and the line."""
    text = (
        "[experiment]\n"
        'problems = ["partial-elliptic-d20-s1"]\n'
        "max_FEs = 1000\n"
        "\n"
        "[[arms]]\n"
        'name = "a"\n'
        "[arms.mses]\n"
        "gt_interval = 3\n"
    )
    with pytest.raises(SpecError) as exc:
        parse_spec(text)
    assert exc.value.key == "gt_interval"
    assert exc.value.line == 8
    assert "did you mean 'G_t'?" in str(exc.value)
    assert str(exc.value).endswith("(line 8)")


def test_suggest_key() -> None:
    """Verifies prefix and fuzzy suggestions."""
    valid = [f.name for f in fields(MsesSection)]
    assert config.suggest_key("gt_interval", valid) == "G_t"
    assert config.suggest_key("budget", valid) is None
    assert config.suggest_key("archive_elite", valid) == "archive_elites"
    assert config.suggest_key("dedup_tolerance", valid) == "dedup_tol"
    assert config.suggest_key("a-size", valid) == "A_size"


def test_unknown_table_is_rejected() -> None:
    """Verifies a misspelt top-level table is reported."""
    with pytest.raises(SpecError, match="did you mean 'experiment'"):
        parse_spec('[experimnt]\nproblems = ["partial-elliptic-d20-s1"]\n')


def test_syntax_error_reports_line() -> None:
    """Verifies TOML syntax errors carry their line."""
    with pytest.raises(SpecError) as exc:
        parse_spec(MINIMAL + "runs = = 3\n")
    assert exc.value.line == 3


@pytest.mark.parametrize(
    ("text", "key"),
    [
        ("[experiment]\nruns = 3\n", "problems"),
        (MINIMAL + 'runs = "many"\n', "runs"),
        (MINIMAL + "runs = 0\n", "runs"),
        (MINIMAL + "workers = 0\n", "workers"),
        ('[experiment]\nproblems = ["diagonal-elliptic-d20-s1"]\n', "problems"),
    ],
)
def test_experiment_errors_name_the_key(text: str, key: str) -> None:
    """Verifies invalid experiment values name the offending key.

    Args:
        text (str): The spec text.
        key (str): The key the error must name.
    """
    with pytest.raises(SpecError) as exc:
        parse_spec(text)
    assert exc.value.key == key


def test_engine_invariant_violation_points_at_key() -> None:
    """Verifies d_s >= dim is reported against the d_s line."""
    text = MINIMAL + '\n[[arms]]\nname = "wide"\n[arms.mses]\nd_s = 20\n'
    with pytest.raises(SpecError) as exc:
        parse_spec(text)
    assert exc.value.key == "d_s"
    assert exc.value.line == 7
    assert "d_s must satisfy" in str(exc.value)


def test_arm_tables_are_parsed() -> None:
    """Verifies every arm sub-table lands in its section."""
    text = (
        MINIMAL
        + "[[arms]]\n"
        + 'name = "swarm"\n'
        + 'optimizer = "llso"\n'
        + "[arms.mses]\n"
        + "NP = 40\n"
        + 'Q = "0.1*NP"\n'
        + "G_r = 5\n"
        + "[arms.llso]\n"
        + "phi = 0\n"
        + "[arms.simplified]\n"
        + 'optimizer = "de"\n'
        + "F = 1\n"
    )
    spec = parse_spec(text)
    (arm,) = spec.arms
    assert arm.NP == 40
    assert arm.explicit == frozenset({"NP", "Q", "G_r"})
    assert arm.llso.phi == 0.0
    assert isinstance(arm.simplified.F, float)

    resolved = arm.resolve(20, spec.max_FEs)
    assert resolved.Q == 4
    assert resolved.G_r == 5
    assert resolved.optimizer_P.kind == "llso"
    assert resolved.optimizer_simplified.kind == "de"
    assert resolved.optimizer_simplified.F == 1.0
    assert resolved.optimizer_simplified.phi == 0.0


def test_unknown_key_line_stays_inside_its_arm() -> None:
    """Verifies a typo is located in its own arm's [arms.mses], not the n-th one."""
    text = (
        "[experiment]\n"
        'problems = ["partial-elliptic-d20-s1"]\n'
        "max_FEs = 1000\n"
        "\n"
        "[[arms]]\n"
        'name = "a"\n'
        "\n"
        "[[arms]]\n"
        'name = "b"\n'
        "[arms.mses]\n"
        "gt_interval = 3\n"
        "\n"
        "[[arms]]\n"
        'name = "c"\n'
        "[arms.mses]\n"
        "G_t = 2\n"
    )
    with pytest.raises(SpecError) as exc:
        parse_spec(text)
    assert exc.value.key == "gt_interval"
    assert exc.value.line == 11


@pytest.mark.parametrize(("value", "expected"), [("true", True), ("false", False)])
def test_archive_elites_switch(value: str, expected: bool) -> None:
    """Verifies `archive_elites` reaches the engine configuration.

    Args:
        value (str): The TOML literal.
        expected (bool): The resolved setting.
    """
    text = MINIMAL + f'[[arms]]\nname = "m"\n[arms.mses]\narchive_elites = {value}\n'
    (arm,) = parse_spec(text).arms
    assert arm.resolve(20, 1000).archive_elites is expected


def test_archive_elites_rejects_non_bool() -> None:
    """Verifies a string for the boolean switch is a typed error."""
    text = MINIMAL + '[[arms]]\nname = "m"\n[arms.mses]\narchive_elites = "yes"\n'
    with pytest.raises(SpecError) as exc:
        parse_spec(text)
    assert exc.value.key == "archive_elites"
    assert exc.value.line == 6


def test_single_arm_reports_gated_keys() -> None:
    """Verifies multi-space keys on a single-space arm are listed as ignored."""
    arm = ArmSpec(name="de", mode="single", explicit=frozenset({"NP", "G_t", "Q"}))
    assert arm.gated_keys() == ["G_t", "Q"]
    assert ArmSpec(name="m", explicit=frozenset({"G_t"})).gated_keys() == []

    resolved = arm.resolve(20, 1000)
    assert not resolved.simplified_enabled
    assert not resolved.transfer_enabled


def test_duplicate_arm_names() -> None:
    """Verifies two arms may not share a results directory."""
    text = MINIMAL + '[[arms]]\nname = "x"\n[[arms]]\nname = "x"\nmode = "single"\n'
    with pytest.raises(SpecError, match="duplicate arm names"):
        parse_spec(text)


def test_dims_expand_problem_ids() -> None:
    """Verifies `dims` re-instantiates every id at every dimension."""
    spec = ExperimentSpec(
        problems=["partial-elliptic-d100-s1", "separable-ackley-d50-s0"], dims=[20, 40]
    )
    assert spec.problem_ids() == [
        "partial-elliptic-d20-s1",
        "partial-elliptic-d40-s1",
        "separable-ackley-d20-s0",
        "separable-ackley-d40-s0",
    ]


def test_cli_overrides_take_precedence() -> None:
    """Verifies seed, workers and out_dir overrides."""
    spec = parse_spec(MINIMAL + "runs = 3\nbase_seed = 7\n")
    assert spec.seeds() == [7, 8, 9]
    moved = spec.with_overrides(seed=100, workers=4, out_dir=Path("elsewhere"))
    assert moved.seeds() == [100, 101, 102]
    assert moved.workers == 4
    assert moved.out_dir == Path("elsewhere")
    assert spec.with_overrides() == spec


def test_load_spec(tmp_path: Path) -> None:
    """Verifies loading from disk and the missing-file error.

    Args:
        tmp_path (Path): Pytest fixture for a temporary directory.
    """
    path = tmp_path / "exp.toml"
    path.write_text(MINIMAL + 'out_dir = "out"\n', encoding="utf-8")
    assert config.load_spec(path).out_dir == Path("out")

    with pytest.raises(SpecError, match="not found"):
        config.load_spec(tmp_path / "missing.toml")


def test_schema_lists_every_mses_key() -> None:
    """Verifies the schema table documents every [arms.mses] key."""
    keys = {key for table, key, _, _ in config.schema_rows() if table == "arms.mses"}
    assert keys == {f.name for f in fields(MsesSection)}
