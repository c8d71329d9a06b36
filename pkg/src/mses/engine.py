"""The multi-space evolutionary search loop.

One population searches the original space P while a second one searches a
PCA-derived simplified space P_s. Learned affine maps move elites both ways
every `G_t` generations, the simplified population and the elites sent to it
are archived in P coordinates, and every `G_r` generations P_s is rebuilt
from that archive.

Every objective call goes through `evaluate_in_P`, which clamps to the box,
counts the evaluation and maintains the best-so-far log, so `fe_used` is
always the exact number of objective evaluations.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
import numpy.typing as npt

from . import optimizers
from .archive import Archive
from .bench import Problem
from .constants import (
    APP_NAME,
    DEDUP_TOL,
    DEFAULT_ARCHIVE_FACTOR,
    DEFAULT_DS_FRACTION,
    DEFAULT_G_R,
    DEFAULT_G_T,
    DEFAULT_MAX_FES,
    DEFAULT_NP,
    DEFAULT_TRANSFER_FRACTION,
)
from .errors import BudgetExhaustedError, InvalidArgumentError
from .linalg import (
    AffineMap,
    Matrix,
    PcaModel,
    Vector,
    apply_map,
    learn_affine_map,
    pca_fit,
    pca_project,
)
from .optimizers import OptimizerParams, Population

logger = logging.getLogger(APP_NAME)


def scaled_count(fraction: float, base: int) -> int:
    """ceil(fraction * base), immune to float noise such as 0.2 * 50."""
    return math.ceil(round(fraction * base, 9))


@dataclass(frozen=True)
class MsesConfig:
    """Resolved parameters of one multi-space run.

    Attributes:
        NP (int): Population size of each space.
        d_s (int): Requested simplified-space dimension.
        max_FEs (int): Evaluation budget.
        G_t (int): Transfer interval in generations.
        G_r (int): Reconstruction interval in generations.
        Q (int): Elites transferred P_s -> P.
        P_count (int): Elites transferred P -> P_s.
        archive_capacity (int): Archive size (A_size).
        dedup_tol (float): Duplicate threshold (max-norm) of the archive and
            of transfer injections.
        archive_elites (bool): Also archive the P elites sent to P_s, in
            their original coordinates.
        optimizer_P (OptimizerParams): Optimizer of the original space.
        optimizer_S (OptimizerParams | None): Optimizer of the simplified
            space; None reuses `optimizer_P`.
        transfer_enabled (bool): Ablation switch for knowledge transfer.
        simplified_enabled (bool): Ablation switch for the whole P_s search.
    """

    NP: int
    d_s: int
    max_FEs: int
    Q: int
    P_count: int
    archive_capacity: int
    G_t: int = DEFAULT_G_T
    G_r: int = DEFAULT_G_R
    dedup_tol: float = DEDUP_TOL
    archive_elites: bool = True
    optimizer_P: OptimizerParams = field(default_factory=OptimizerParams)
    optimizer_S: OptimizerParams | None = None
    transfer_enabled: bool = True
    simplified_enabled: bool = True

    @classmethod
    def for_problem(
        cls,
        dim: int,
        optimizer: OptimizerParams | None = None,
        NP: int | None = None,
        max_FEs: int = DEFAULT_MAX_FES,
        **overrides: Any,
    ) -> "MsesConfig":
        """Builds the default configuration for a `dim`-dimensional problem.

        Defaults: NP per optimizer kind, Q = P = ceil(0.2·NP), G_t = 1,
        G_r = 10, archive = 5·NP, d_s = ceil(0.6·dim). Keyword overrides
        replace any field.
        """
        params = optimizer or OptimizerParams()
        np_size = NP if NP is not None else DEFAULT_NP[params.kind]
        transfer = scaled_count(DEFAULT_TRANSFER_FRACTION, np_size)
        base = cls(
            NP=np_size,
            d_s=scaled_count(DEFAULT_DS_FRACTION, dim),
            max_FEs=max_FEs,
            Q=transfer,
            P_count=transfer,
            archive_capacity=DEFAULT_ARCHIVE_FACTOR * np_size,
            optimizer_P=params,
        )
        return replace(base, **overrides)

    @property
    def optimizer_simplified(self) -> OptimizerParams:
        return self.optimizer_S if self.optimizer_S is not None else self.optimizer_P

    def validate(self, dim: int) -> None:
        """Checks every invariant against the problem dimension.

        Raises:
            InvalidArgumentError: Naming the first violated parameter.
        """
        if self.simplified_enabled and not 1 <= self.d_s < dim:
            raise InvalidArgumentError(f"d_s must satisfy 1 <= d_s < {dim}, got {self.d_s}")
        if not 1 <= self.Q <= self.NP:
            raise InvalidArgumentError(f"Q must be in [1, NP={self.NP}], got {self.Q}")
        if not 1 <= self.P_count <= self.NP:
            raise InvalidArgumentError(f"P must be in [1, NP={self.NP}], got {self.P_count}")
        if self.G_t < 1 or self.G_r < 1:
            raise InvalidArgumentError(f"G_t and G_r must be >= 1, got {self.G_t}, {self.G_r}")
        if self.archive_capacity < self.NP:
            raise InvalidArgumentError(
                f"A_size must be >= NP={self.NP}, got {self.archive_capacity}"
            )
        if self.max_FEs < 1:
            raise InvalidArgumentError(f"max_FEs must be >= 1, got {self.max_FEs}")
        if self.dedup_tol < 0:
            raise InvalidArgumentError(f"dedup_tol must be >= 0, got {self.dedup_tol}")
        for params in (self.optimizer_P, self.optimizer_simplified):
            params.validate()
            if self.NP < params.min_population():
                raise InvalidArgumentError(
                    f"NP={self.NP} is too small for {params.kind} "
                    f"(needs >= {params.min_population()})"
                )


class ConvergenceLog:
    """Best-so-far objective against evaluations consumed.

    `fe` is strictly increasing and `best` non-increasing.
    """

    def __init__(self) -> None:
        self.fe: list[int] = []
        self.best: list[float] = []

    def __len__(self) -> int:
        return len(self.fe)

    def record(self, fe: int, best: float) -> None:
        if self.fe and fe <= self.fe[-1]:
            self.best[-1] = min(self.best[-1], best)
            return
        self.fe.append(fe)
        self.best.append(best)

    @classmethod
    def from_records(cls, fe: npt.ArrayLike, best: npt.ArrayLike) -> "ConvergenceLog":
        log = cls()
        for f, b in zip(np.asarray(fe).tolist(), np.asarray(best).tolist(), strict=True):
            log.record(int(f), float(b))
        return log


def spawn_rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent generators for the original and simplified populations."""
    seq_P, seq_S = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(seq_P), np.random.default_rng(seq_S)


@dataclass
class EngineState:
    """Mutable state of one run. Simplified-space fields stay None in
    single-space mode."""

    problem: Problem
    config: MsesConfig
    rng_P: np.random.Generator
    rng_S: np.random.Generator
    pop_P: Population | None = None
    pop_S: Population | None = None
    pca: PcaModel | None = None
    map_S_to_P: AffineMap | None = None
    map_P_to_S: AffineMap | None = None
    archive: Archive | None = None
    generation: int = 0
    fe_used: int = 0
    best_x: Vector | None = None
    best_f: float = math.inf
    log: ConvergenceLog = field(default_factory=ConvergenceLog)
    events: list[dict[str, Any]] = field(default_factory=list)

    @property
    def hard_cap(self) -> int:
        """No evaluation may start once this many have been spent."""
        return self.config.max_FEs + 2 * self.config.NP

    @property
    def effective_ds(self) -> int | None:
        return self.pca.k if self.pca is not None else None

    def clamp(self, x: npt.ArrayLike) -> Vector:
        return np.clip(np.asarray(x, dtype=np.float64), self.problem.lower, self.problem.upper)


@dataclass(frozen=True, eq=False)
class RunResult:
    """Immutable outcome of one run."""

    problem_id: str
    mode: str
    seed: int
    best_x: Vector
    best_f: float
    log: ConvergenceLog
    events: tuple[dict[str, Any], ...]
    fe_used: int
    generations: int
    max_FEs: int

    @property
    def overshoot(self) -> int:
        return max(0, self.fe_used - self.max_FEs)


def evaluate_in_P(state: EngineState, x: npt.ArrayLike) -> float:
    """Clamps, evaluates and counts one solution of the original space.

    Raises:
        BudgetExhaustedError: If the hard evaluation cap is reached.
    """
    if state.fe_used >= state.hard_cap:
        raise BudgetExhaustedError(f"{state.fe_used} evaluations used")
    point = state.clamp(x)
    value = state.problem.evaluate(point)
    state.fe_used += 1
    if value < state.best_f:
        state.best_f = value
        state.best_x = point
        state.log.record(state.fe_used, value)
    elif state.fe_used % state.config.NP == 0:
        state.log.record(state.fe_used, state.best_f)
    return value


def evaluate_simplified(state: EngineState, q: npt.ArrayLike) -> float:
    """Evaluates a simplified-space point through the current back-map."""
    if state.map_S_to_P is None:
        raise InvalidArgumentError("no simplified space has been built")
    point = apply_map(state.map_S_to_P, np.asarray(q, dtype=np.float64)[:, None])[:, 0]
    return evaluate_in_P(state, point)


def _require_budget(state: EngineState) -> None:
    """Gate at the start of every evaluation batch."""
    if state.fe_used >= state.config.max_FEs:
        raise BudgetExhaustedError(f"budget of {state.config.max_FEs} reached")


def _fit_spaces(
    samples: Matrix, d_s: int
) -> tuple[PcaModel, Matrix, AffineMap, AffineMap]:
    """PCA on d x N samples plus both maps learned from the paired data."""
    pca = pca_fit(samples, d_s)
    coords = pca_project(pca, samples)
    to_P = learn_affine_map(coords, samples)
    to_S = learn_affine_map(samples, coords)
    if pca.reduced:
        logger.debug(f"Simplified space reduced to {pca.k} of {d_s} dimensions.")
    return pca, coords, to_P, to_S


def _elitist_merge(
    pop: Population, newcomers: Matrix, newcomer_fitness: Vector, tol: float = DEDUP_TOL
) -> tuple[Population, int]:
    """Keeps the NP best of incumbents ∪ newcomers; incumbents win ties.

    A newcomer within max-norm `tol` of an incumbent or of an earlier
    newcomer is dropped before selection, so re-sending an unchanged elite
    never fills the population with copies. Survivors keep their relative
    order (incumbents first); newcomers get zero velocity.

    Returns:
        tuple[Population, int]: The merged population and surviving newcomers.
    """
    NP = pop.size
    fresh: list[int] = []
    for i, x in enumerate(newcomers):
        seen = np.vstack([pop.members, newcomers[fresh]])
        if not np.any(np.max(np.abs(seen - x), axis=1) <= tol):
            fresh.append(i)
    newcomers, newcomer_fitness = newcomers[fresh], newcomer_fitness[fresh]

    members = np.vstack([pop.members, newcomers])
    fitness = np.concatenate([pop.fitness, newcomer_fitness])
    keep = np.sort(np.argsort(fitness, kind="stable")[:NP])
    velocity = None
    if pop.velocity is not None:
        velocity = np.vstack([pop.velocity, np.zeros_like(newcomers)])[keep]
    merged = Population(members=members[keep], fitness=fitness[keep], velocity=velocity)
    return merged, int(np.count_nonzero(keep >= NP))


def init_run(problem: Problem, config: MsesConfig, seed: int) -> EngineState:
    """Samples and evaluates PoP, builds P_s by PCA and learns both maps.

    Costs exactly 2·NP evaluations: NP for PoP and NP for the projected PoP_s
    evaluated through the back-map. The archive starts empty.

    Raises:
        InvalidArgumentError: If the configuration is invalid (e.g. d_s >= dim).
    """
    config.validate(problem.dim)
    rng_P, rng_S = spawn_rngs(seed)
    state = EngineState(problem=problem, config=config, rng_P=rng_P, rng_S=rng_S)

    pop = optimizers.sample_initial(problem.dim, config.NP, problem.bounds, rng_P)
    state.pop_P = optimizers.evaluate_all(pop, lambda x: evaluate_in_P(state, x))

    pca, coords, to_P, to_S = _fit_spaces(state.pop_P.members.T, config.d_s)
    state.pca, state.map_S_to_P, state.map_P_to_S = pca, to_P, to_S
    state.pop_S = optimizers.evaluate_all(
        Population(members=coords.T.copy(), fitness=np.full(config.NP, np.nan)),
        lambda q: evaluate_simplified(state, q),
    )
    state.archive = Archive(config.archive_capacity, problem.dim, config.dedup_tol)
    state.events.append(
        {"event": "init", "generation": 0, "fe": state.fe_used, "effective_ds": pca.k}
    )
    logger.debug(f"{problem.id}: simplified space of dimension {pca.k} built.")
    return state


def knowledge_transfer(state: EngineState) -> EngineState:
    """Moves elites across spaces and archives the simplified population.

    Both directions select from the populations as they were before this
    transfer: the Q best of PoP_s go to P, the P best of PoP go to P_s, each
    injected by elitist keep-best selection without duplicates. The updated
    PoP_s is then back-mapped, clamped and archived. With `archive_elites`
    the P elites are archived too, unprojected, so the next P_s can leave
    the span of the current one.

    Raises:
        InvalidArgumentError: If a population, a map or the archive is
            missing, or a population is not evaluated.
    """
    if state.pop_P is None or state.pop_S is None or state.archive is None:
        raise InvalidArgumentError("knowledge transfer needs both populations")
    if state.map_S_to_P is None or state.map_P_to_S is None:
        raise InvalidArgumentError("knowledge transfer needs both maps")
    if not (state.pop_P.evaluated and state.pop_S.evaluated):
        raise InvalidArgumentError("knowledge transfer needs evaluated populations")
    cfg = state.config
    pop_P, pop_S = state.pop_P, state.pop_S
    best_before = float(pop_P.fitness[pop_P.best_index()])

    elite_S = pop_S.ranked()[: cfg.Q]
    to_P = apply_map(state.map_S_to_P, pop_S.members[elite_S].T).T
    to_P = np.array([state.clamp(x) for x in to_P])
    to_P_fitness = np.array([evaluate_in_P(state, x) for x in to_P])
    state.pop_P, accepted_P = _elitist_merge(pop_P, to_P, to_P_fitness, cfg.dedup_tol)

    elite_P = pop_P.ranked()[: cfg.P_count]
    to_S = apply_map(state.map_P_to_S, pop_P.members[elite_P].T).T
    to_S_fitness = np.array([evaluate_simplified(state, q) for q in to_S])
    state.pop_S, accepted_S = _elitist_merge(pop_S, to_S, to_S_fitness, cfg.dedup_tol)

    traces = apply_map(state.map_S_to_P, state.pop_S.members.T).T
    state.archive.extend(np.array([state.clamp(x) for x in traces]))
    if cfg.archive_elites:
        state.archive.extend(pop_P.members[elite_P])

    state.events.append(
        {
            "event": "transfer",
            "generation": state.generation,
            "fe": state.fe_used,
            "effective_ds": state.effective_ds,
            "to_P_objectives": to_P_fitness.tolist(),
            "best_P_before": best_before,
            "accepted_to_P": accepted_P,
            "accepted_to_S": accepted_S,
            "archive_size": len(state.archive),
        }
    )
    return state


def reconstruct_space(state: EngineState) -> EngineState:
    """Rebuilds P_s from the archive and re-initialises PoP_s in it.

    PoP_s is first carried to P with the old back-map, a new PCA and new
    maps are fitted on the archive, and PoP_s is mapped into the new space
    and re-evaluated (NP evaluations). PoP is left untouched. With fewer
    than two archived solutions the reconstruction is skipped.
    """
    if state.pop_S is None or state.archive is None or state.map_S_to_P is None:
        raise InvalidArgumentError("reconstruction needs a simplified space")
    cfg = state.config
    if len(state.archive) < 2:
        logger.warning(
            f"{state.problem.id}: skipping reconstruction at generation "
            f"{state.generation}, archive holds {len(state.archive)} solution(s)."
        )
        state.events.append(
            {
                "event": "reconstruct_skipped",
                "generation": state.generation,
                "fe": state.fe_used,
                "effective_ds": state.effective_ds,
                "archive_size": len(state.archive),
            }
        )
        return state

    carried = apply_map(state.map_S_to_P, state.pop_S.members.T)
    pca, _, to_P, to_S = _fit_spaces(state.archive.entries.T, cfg.d_s)
    state.pca, state.map_S_to_P, state.map_P_to_S = pca, to_P, to_S

    members = apply_map(to_S, carried).T
    state.pop_S = optimizers.evaluate_all(
        Population(members=members, fitness=np.full(cfg.NP, np.nan)),
        lambda q: evaluate_simplified(state, q),
    )
    state.events.append(
        {
            "event": "reconstruct",
            "generation": state.generation,
            "fe": state.fe_used,
            "effective_ds": pca.k,
            "requested_ds": cfg.d_s,
            "archive_size": len(state.archive),
        }
    )
    return state


def _generation(state: EngineState) -> None:
    """One pass of the main loop: both steps, then transfer, then rebuild."""
    cfg = state.config
    assert state.pop_P is not None and state.pop_S is not None
    state.generation += 1

    _require_budget(state)
    state.pop_P, _ = optimizers.step(
        state.pop_P,
        cfg.optimizer_P,
        state.rng_P,
        lambda x: evaluate_in_P(state, x),
        state.problem.bounds,
    )
    _require_budget(state)
    state.pop_S, _ = optimizers.step(
        state.pop_S,
        cfg.optimizer_simplified,
        state.rng_S,
        lambda q: evaluate_simplified(state, q),
    )
    if cfg.transfer_enabled and state.generation % cfg.G_t == 0:
        _require_budget(state)
        knowledge_transfer(state)
    if state.generation % cfg.G_r == 0:
        _require_budget(state)
        reconstruct_space(state)


def _finish(state: EngineState, mode: str, seed: int) -> RunResult:
    state.log.record(state.fe_used, state.best_f)
    assert state.best_x is not None
    logger.debug(
        f"{state.problem.id} [{mode}] seed={seed}: best={state.best_f:.6e} "
        f"after {state.fe_used} FEs, {state.generation} generations."
    )
    return RunResult(
        problem_id=state.problem.id,
        mode=mode,
        seed=seed,
        best_x=state.best_x,
        best_f=state.best_f,
        log=state.log,
        events=tuple(state.events),
        fe_used=state.fe_used,
        generations=state.generation,
        max_FEs=state.config.max_FEs,
    )


def run(problem: Problem, config: MsesConfig, seed: int) -> RunResult:
    """Runs the multi-space search until the evaluation budget is spent.

    With `simplified_enabled=False` this is exactly `run_single_space`.
    """
    if not config.simplified_enabled:
        return run_single_space(problem, config, seed)
    state = init_run(problem, config, seed)
    try:
        while state.fe_used < config.max_FEs:
            _generation(state)
    except BudgetExhaustedError:
        pass
    return _finish(state, "mses", seed)


def run_single_space(problem: Problem, config: MsesConfig, seed: int) -> RunResult:
    """Runs the configured optimizer on the original space only."""
    config = replace(config, simplified_enabled=False, transfer_enabled=False)
    config.validate(problem.dim)
    rng_P, rng_S = spawn_rngs(seed)
    state = EngineState(problem=problem, config=config, rng_P=rng_P, rng_S=rng_S)
    pop = optimizers.sample_initial(problem.dim, config.NP, problem.bounds, rng_P)
    state.pop_P = optimizers.evaluate_all(pop, lambda x: evaluate_in_P(state, x))
    try:
        while state.fe_used < config.max_FEs:
            state.generation += 1
            _require_budget(state)
            state.pop_P, _ = optimizers.step(
                state.pop_P,
                config.optimizer_P,
                rng_P,
                lambda x: evaluate_in_P(state, x),
                problem.bounds,
            )
    except BudgetExhaustedError:
        pass
    return _finish(state, "single", seed)
