import difflib
import logging
import math
import re
import tomllib
import types
import typing
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from . import bench
from .constants import (
    APP_NAME,
    DEDUP_TOL,
    DEFAULT_ARCHIVE_FACTOR,
    DEFAULT_DS_FRACTION,
    DEFAULT_G_R,
    DEFAULT_G_T,
    DEFAULT_MAX_FES,
    DEFAULT_NP,
    DEFAULT_RUNS,
    DEFAULT_TRANSFER_FRACTION,
)
from .engine import MsesConfig
from .errors import InvalidArgumentError, SpecError
from .optimizers import OPTIMIZER_KINDS, OptimizerParams

logger = logging.getLogger(APP_NAME)

MODES = ("mses", "single")

_SCALED_RE = re.compile(r"^(\d+(?:\.\d+)?)\s*\*\s*(NP|dim)$")


def parse_scaled(value: int | str, NP: int, dim: int) -> int:
    """Resolves a count given as an integer or as '<number>*NP' / '<number>*dim'.

    The product is rounded to 9 decimals before taking the ceiling, so
    '0.2*NP' with NP = 50 is 10, not 11.
    """
    if isinstance(value, bool):
        raise ValueError(f"Invalid count '{value}'")
    if isinstance(value, int):
        return value
    match = _SCALED_RE.match(str(value).strip())
    if not match:
        raise ValueError(f"Invalid count '{value}' (expected an integer, '<x>*NP' or '<x>*dim')")
    num, base = float(match.group(1)), match.group(2)
    return math.ceil(round(num * (NP if base == "NP" else dim), 9))


def suggest_key(key: str, valid: list[str]) -> str | None:
    """Finds the valid key a typo most likely meant ('gt_interval' -> 'G_t')."""

    def norm(k: str) -> str:
        return k.lower().replace("_", "").replace("-", "")

    typed = norm(key)
    prefixed = [v for v in valid if typed.startswith(norm(v))]
    if prefixed:
        return max(prefixed, key=lambda v: len(norm(v)))
    by_norm = {norm(v): v for v in valid}
    close = difflib.get_close_matches(typed, list(by_norm), n=1, cutoff=0.6)
    return by_norm[close[0]] if close else None


@dataclass
class MsesSection:
    """The [arms.mses] table. Count fields accept scaled expressions.

    Attributes:
        NP (int | None): Population size; None picks the optimizer default.
        d_s (int | str): Simplified-space dimension.
        G_t (int): Transfer interval.
        G_r (int): Reconstruction interval.
        Q (int | str): Elites sent P_s -> P.
        P (int | str): Elites sent P -> P_s.
        A_size (int | str): Archive capacity.
        dedup_tol (float): Duplicate threshold of the archive and of transfers.
        archive_elites (bool): Archive the P elites sent to P_s as well.
    """

    NP: int | None = None
    d_s: int | str = f"{DEFAULT_DS_FRACTION}*dim"
    G_t: int = DEFAULT_G_T
    G_r: int = DEFAULT_G_R
    Q: int | str = f"{DEFAULT_TRANSFER_FRACTION}*NP"
    P: int | str = f"{DEFAULT_TRANSFER_FRACTION}*NP"
    A_size: int | str = f"{DEFAULT_ARCHIVE_FACTOR}*NP"
    dedup_tol: float = DEDUP_TOL
    archive_elites: bool = True


@dataclass
class DeSection:
    F: float = 0.5
    CR: float = 0.9


@dataclass
class LlsoSection:
    NL: int = 4
    phi: float = 0.4


@dataclass
class SimplifiedSection:
    """Overrides for the simplified-space optimizer; unset keys inherit."""

    optimizer: str | None = None
    F: float | None = None
    CR: float | None = None
    NL: int | None = None
    phi: float | None = None


@dataclass
class ArmSpec:
    """One compared algorithm.

    Attributes:
        name (str): Directory name of the arm's results.
        mode (str): "mses" or "single".
        optimizer (str): Optimizer kind of the original space.
        mses (MsesSection): Multi-space parameters.
        de (DeSection): DE constants.
        llso (LlsoSection): Swarm constants.
        simplified (SimplifiedSection): Simplified-space optimizer overrides.
        explicit (frozenset[str]): [arms.mses] keys set in the file.
    """

    name: str
    mode: str = "mses"
    optimizer: str = "de"
    mses: MsesSection = field(default_factory=MsesSection)
    de: DeSection = field(default_factory=DeSection)
    llso: LlsoSection = field(default_factory=LlsoSection)
    simplified: SimplifiedSection = field(default_factory=SimplifiedSection)
    explicit: frozenset[str] = frozenset()

    @property
    def NP(self) -> int:
        return self.mses.NP if self.mses.NP is not None else DEFAULT_NP[self.optimizer]

    def optimizer_params(self) -> tuple[OptimizerParams, OptimizerParams]:
        """Parameters of the original-space and simplified-space optimizers."""
        params = OptimizerParams(
            kind=self.optimizer,
            F=self.de.F,
            CR=self.de.CR,
            NL=self.llso.NL,
            phi=self.llso.phi,
        )
        s = self.simplified
        overrides = {
            k: v
            for k, v in (
                ("kind", s.optimizer),
                ("F", s.F),
                ("CR", s.CR),
                ("NL", s.NL),
                ("phi", s.phi),
            )
            if v is not None
        }
        return params, replace(params, **overrides)

    def gated_keys(self) -> list[str]:
        """Multi-space keys a single-space arm ignores."""
        if self.mode != "single":
            return []
        return sorted(self.explicit - {"NP"})

    def resolve(self, dim: int, max_FEs: int) -> MsesConfig:
        """Builds the engine configuration of this arm for a `dim`-D problem.

        Raises:
            SpecError: If a count expression is invalid or the result
                violates an engine invariant.
        """
        NP = self.NP
        m = self.mses
        counts: dict[str, int] = {}
        for key in ("d_s", "Q", "P", "A_size"):
            try:
                counts[key] = parse_scaled(getattr(m, key), NP, dim)
            except ValueError as e:
                raise SpecError(f"[arms.mses].{key} of arm '{self.name}': {e}", key=key) from e
        params_P, params_S = self.optimizer_params()
        single = self.mode == "single"
        config = MsesConfig(
            NP=NP,
            d_s=counts["d_s"],
            max_FEs=max_FEs,
            Q=counts["Q"],
            P_count=counts["P"],
            archive_capacity=counts["A_size"],
            G_t=m.G_t,
            G_r=m.G_r,
            dedup_tol=m.dedup_tol,
            archive_elites=m.archive_elites,
            optimizer_P=params_P,
            optimizer_S=params_S,
            transfer_enabled=not single,
            simplified_enabled=not single,
        )
        try:
            config.validate(dim)
        except InvalidArgumentError as e:
            first = str(e).split()[0]
            key = first if first in MsesSection.__dataclass_fields__ else None
            raise SpecError(f"arm '{self.name}' at dim {dim}: {e}", key=key) from e
        return config


def default_arms() -> list[ArmSpec]:
    return [ArmSpec(name="mses-de"), ArmSpec(name="de", mode="single")]


@dataclass
class ExperimentSpec:
    """A complete, defaulted experiment.

    Attributes:
        problems (list[str]): Registry ids.
        dims (list[int]): Optional dimensions every id is re-instantiated at.
        runs (int): Independent runs per (arm, problem).
        base_seed (int): Seed of run 0; run i uses base_seed + i.
        max_FEs (int): Evaluation budget per run.
        workers (int): Concurrent runs.
        out_dir (Path): Root of the result tree.
        arms (list[ArmSpec]): Compared algorithms.
    """

    problems: list[str]
    dims: list[int] = field(default_factory=list)
    runs: int = DEFAULT_RUNS
    base_seed: int = 0
    max_FEs: int = DEFAULT_MAX_FES
    workers: int = 1
    out_dir: Path = Path("results")
    arms: list[ArmSpec] = field(default_factory=default_arms)

    def problem_ids(self) -> list[str]:
        """Every problem instance, with `dims` expansion applied, in order."""
        if not self.dims:
            return list(self.problems)
        return [bench.with_dim(pid, d) for pid in self.problems for d in self.dims]

    def seeds(self) -> list[int]:
        return [self.base_seed + i for i in range(self.runs)]

    def with_overrides(
        self,
        seed: int | None = None,
        workers: int | None = None,
        out_dir: Path | None = None,
    ) -> "ExperimentSpec":
        """Applies the CLI flags that take precedence over the file."""
        updates: dict[str, Any] = {}
        if seed is not None:
            updates["base_seed"] = seed
        if workers is not None:
            updates["workers"] = workers
        if out_dir is not None:
            updates["out_dir"] = Path(out_dir)
        return replace(self, **updates)

    def validate(self) -> None:
        """Checks every invariant, resolving all arms against all problems.

        Raises:
            SpecError: On the first violation.
        """
        if not self.problems:
            raise SpecError("[experiment].problems must list at least one id", key="problems")
        if self.runs < 1:
            raise SpecError(f"runs must be >= 1, got {self.runs}", key="runs")
        if self.max_FEs < 1:
            raise SpecError(f"max_FEs must be >= 1, got {self.max_FEs}", key="max_FEs")
        if self.workers < 1:
            raise SpecError(f"workers must be >= 1, got {self.workers}", key="workers")
        if not self.arms:
            raise SpecError("at least one arm is required", key="arms")
        names = [a.name for a in self.arms]
        duplicates = {n for n in names if names.count(n) > 1}
        if duplicates:
            raise SpecError(f"duplicate arm names: {', '.join(sorted(duplicates))}", key="name")
        try:
            problem_ids = self.problem_ids()
            dims = {pid: bench.parse_problem_id(pid).dim for pid in problem_ids}
        except InvalidArgumentError as e:
            raise SpecError(str(e), key="problems") from e
        for arm in self.arms:
            if arm.mode not in MODES:
                raise SpecError(
                    f"mode of arm '{arm.name}' must be one of {', '.join(MODES)}", key="mode"
                )
            if arm.optimizer not in OPTIMIZER_KINDS:
                raise SpecError(
                    f"optimizer of arm '{arm.name}' must be one of "
                    f"{', '.join(OPTIMIZER_KINDS)}",
                    key="optimizer",
                )
            for dim in sorted(set(dims.values())):
                arm.resolve(dim, self.max_FEs)


def _line_of(lines: list[str], key: str, after: int = 0) -> int | None:
    """1-based line of the first `key = ...` at or after line `after`."""
    pattern = re.compile(rf"^\s*[\"']?{re.escape(key)}[\"']?\s*=")
    for number, text in enumerate(lines[after:], start=after + 1):
        if pattern.match(text):
            return number
    return None


def _header_line(lines: list[str], table: str, index: int = 0) -> int:
    """0-based line of the `index`-th header of `table`, or 0."""
    hits = _header_hits(lines, table)
    return hits[index] if index < len(hits) else (hits[-1] if hits else 0)


def _header_hits(lines: list[str], table: str) -> list[int]:
    pattern = re.compile(rf"^\s*\[\[?\s*{re.escape(table)}\s*\]\]?\s*(#.*)?$")
    return [n for n, text in enumerate(lines) if pattern.match(text)]


def _arm_table_line(lines: list[str], table: str, index: int) -> int:
    """0-based line of `[arms.<table>]` inside the `index`-th `[[arms]]` block.

    Falls back to the block's own header when the sub-table is inline.
    """
    arms = _header_hits(lines, "arms")
    start = _header_line(lines, "arms", index)
    end = arms[index + 1] if index + 1 < len(arms) else len(lines)
    for n in _header_hits(lines, f"arms.{table}"):
        if start < n < end:
            return n
    return start


def _accepts(annotation: Any, value: Any) -> bool:
    """Whether a TOML value fits a section field's annotation."""
    if isinstance(value, bool):
        return annotation is bool
    options = typing.get_args(annotation) if isinstance(annotation, types.UnionType) else ()
    for option in options or (annotation,):
        if option is float and isinstance(value, int | float):
            return True
        if option is Path and isinstance(value, str):
            return True
        origin = typing.get_origin(option)
        if origin is list and isinstance(value, list):
            return all(_accepts(typing.get_args(option)[0], v) for v in value)
        if origin is None and option is not type(None) and isinstance(value, option):
            return True
    return False


def _update_dataclass(
    section_name: str,
    instance: Any,
    updates: Any,
    lines: list[str],
    after: int = 0,
) -> Any:
    """Updates a dataclass section, rejecting unknown keys and mistyped values."""
    if not isinstance(updates, dict):
        raise SpecError(
            f"[{section_name}] must be a table",
            key=section_name,
            line=_line_of(lines, section_name),
        )
    hints = typing.get_type_hints(type(instance))
    valid_keys = [f.name for f in fields(instance) if f.name != "explicit"]
    coerced = {}
    for k, v in updates.items():
        if k not in valid_keys:
            hint = suggest_key(k, valid_keys)
            message = f"Unknown key '{k}' in [{section_name}]"
            if hint:
                message += f"; did you mean '{hint}'?"
            raise SpecError(message, key=k, line=_line_of(lines, k, after))
        if not _accepts(hints[k], v):
            raise SpecError(
                f"[{section_name}].{k} has the wrong type ({type(v).__name__})",
                key=k,
                line=_line_of(lines, k, after),
            )
        if hints[k] is float or hints[k] == float | None:
            v = float(v)
        coerced[k] = v
    return replace(instance, **coerced)


def _parse_arm(raw: Any, index: int, lines: list[str]) -> ArmSpec:
    if not isinstance(raw, dict):
        raise SpecError("[[arms]] entries must be tables", key="arms")
    after = _header_line(lines, "arms", index)
    raw = dict(raw)
    sections: dict[str, Any] = {}
    tables = {
        "mses": MsesSection,
        "de": DeSection,
        "llso": LlsoSection,
        "simplified": SimplifiedSection,
    }
    for name, cls in tables.items():
        table = raw.pop(name, {})
        start = _arm_table_line(lines, name, index) if table else after
        sections[name] = _update_dataclass(f"arms.{name}", cls(), table, lines, start)
        if name == "mses":
            explicit = frozenset(table)
    raw.setdefault("name", f"arm-{index}")
    arm = _update_dataclass("arms", ArmSpec(name=raw["name"]), raw, lines, after)
    return replace(arm, explicit=explicit, **sections)


def parse_spec(text: str, source: str = "<spec>") -> ExperimentSpec:
    """Parses TOML text into a fully defaulted, validated ExperimentSpec.

    Raises:
        SpecError: On syntax errors, unknown keys or invalid values; the
            message names the key and its line where they can be located.
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        match = re.search(r"line (\d+)", str(e))
        raise SpecError(
            f"Spec syntax error in {source}: {e}", line=int(match.group(1)) if match else None
        ) from e

    lines = text.splitlines()
    unknown = set(data) - {"experiment", "arms"}
    if unknown:
        key = sorted(unknown)[0]
        hint = suggest_key(key, ["experiment", "arms"])
        message = f"Unknown table '{key}'" + (f"; did you mean '{hint}'?" if hint else "")
        raise SpecError(message, key=key, line=_line_of(lines, key) or _header_line(lines, key) + 1)

    experiment = data.get("experiment")
    if not isinstance(experiment, dict):
        raise SpecError(f"{source} has no [experiment] table", key="experiment")
    after = _header_line(lines, "experiment")
    experiment = dict(experiment)
    if "problems" not in experiment:
        raise SpecError("[experiment].problems is required", key="problems")
    spec = _update_dataclass(
        "experiment", ExperimentSpec(problems=[]), experiment, lines, after
    )
    spec = replace(spec, out_dir=Path(spec.out_dir))

    raw_arms = data.get("arms")
    if raw_arms is not None:
        if not isinstance(raw_arms, list):
            raise SpecError("arms must be an array of tables ([[arms]])", key="arms")
        spec = replace(spec, arms=[_parse_arm(a, i, lines) for i, a in enumerate(raw_arms)])

    try:
        spec.validate()
    except SpecError as e:
        if e.line is None and e.key is not None:
            raise SpecError(str(e), key=e.key, line=_line_of(lines, e.key)) from e
        raise
    return spec


def load_spec(path: Path | str) -> ExperimentSpec:
    """Loads an experiment spec file.

    Args:
        path (Path | str): The TOML spec.

    Returns:
        ExperimentSpec: The defaulted and validated spec.

    Raises:
        SpecError: If the file is missing or fails to parse or validate.
    """
    p = Path(path)
    if not p.is_file():
        raise SpecError(f"Spec file not found: {p}")
    return parse_spec(p.read_text(encoding="utf-8"), source=str(p))


def schema_rows() -> list[tuple[str, str, str, str]]:
    """(table, key, default, description) rows of the spec schema."""
    return [
        ("experiment", "problems", "(required)", "registry ids, e.g. partial-elliptic-d100-s1"),
        ("experiment", "dims", "[]", "re-instantiate every id at these dimensions"),
        ("experiment", "runs", str(DEFAULT_RUNS), "independent runs; seeds base_seed + i"),
        ("experiment", "base_seed", "0", "seed of run 0"),
        ("experiment", "max_FEs", str(DEFAULT_MAX_FES), "evaluation budget per run"),
        ("experiment", "workers", "1", "concurrent runs"),
        ("experiment", "out_dir", '"results"', "root of the result tree"),
        ("arms", "name", "arm-<i>", "results directory of the arm"),
        ("arms", "mode", '"mses"', "mses | single"),
        ("arms", "optimizer", '"de"', " | ".join(OPTIMIZER_KINDS)),
        ("arms.mses", "NP", "50 (de) / 500 (llso)", "population size of each space"),
        ("arms.mses", "d_s", f'"{DEFAULT_DS_FRACTION}*dim"', "simplified-space dimension"),
        ("arms.mses", "G_t", str(DEFAULT_G_T), "generations between transfers"),
        ("arms.mses", "G_r", str(DEFAULT_G_R), "generations between reconstructions"),
        ("arms.mses", "Q", f'"{DEFAULT_TRANSFER_FRACTION}*NP"', "elites sent P_s -> P"),
        ("arms.mses", "P", f'"{DEFAULT_TRANSFER_FRACTION}*NP"', "elites sent P -> P_s"),
        ("arms.mses", "A_size", f'"{DEFAULT_ARCHIVE_FACTOR}*NP"', "archive capacity"),
        ("arms.mses", "dedup_tol", f"{DEDUP_TOL:g}", "duplicate threshold (L-inf)"),
        ("arms.mses", "archive_elites", "true", "also archive the elites sent P -> P_s"),
        ("arms.de", "F", "0.5", "scale factor"),
        ("arms.de", "CR", "0.9", "crossover rate"),
        ("arms.llso", "NL", "4", "swarm levels"),
        ("arms.llso", "phi", "0.4", "social factor"),
        ("arms.simplified", "optimizer, F, CR, NL, phi", "inherit", "simplified-space optimizer"),
    ]
