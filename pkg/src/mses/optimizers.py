"""Single-space evolutionary optimizers behind one stepping contract.

Each step takes a fully evaluated population, an explicitly owned random
generator and an `evaluate` callback, and returns the next population plus
the exact number of `evaluate` calls it made. Steps never touch global
random state, so a step is a pure function of (population, params, rng state).
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field, replace

import numpy as np

from .constants import APP_NAME
from .errors import InvalidArgumentError
from .linalg import Matrix, Vector

logger = logging.getLogger(APP_NAME)

Evaluate = Callable[[Vector], float]
Bounds = tuple[Vector, Vector]

OPTIMIZER_KINDS = ("de", "llso")


@dataclass(frozen=True)
class OptimizerParams:
    """Optimizer selection and constants.

    Attributes:
        kind (str): "de" (DE/rand/1/bin) or "llso" (level-based swarm).
        F (float): DE scale factor, in (0, 2].
        CR (float): DE crossover rate, in [0, 1].
        NL (int): Number of swarm levels, >= 2.
        phi (float): Swarm social factor, in [0, 1].
    """

    kind: str = "de"
    F: float = 0.5
    CR: float = 0.9
    NL: int = 4
    phi: float = 0.4

    def validate(self) -> None:
        """Raises InvalidArgumentError when a constant is out of range."""
        if self.kind not in OPTIMIZER_KINDS:
            raise InvalidArgumentError(
                f"optimizer must be one of {', '.join(OPTIMIZER_KINDS)}, got '{self.kind}'"
            )
        if not 0.0 < self.F <= 2.0:
            raise InvalidArgumentError(f"F must be in (0, 2], got {self.F}")
        if not 0.0 <= self.CR <= 1.0:
            raise InvalidArgumentError(f"CR must be in [0, 1], got {self.CR}")
        if self.NL < 2:
            raise InvalidArgumentError(f"NL must be >= 2, got {self.NL}")
        if not 0.0 <= self.phi <= 1.0:
            raise InvalidArgumentError(f"phi must be in [0, 1], got {self.phi}")

    def min_population(self) -> int:
        """Smallest population this optimizer can step."""
        return 4 if self.kind == "de" else 2 * self.NL


@dataclass(frozen=True, eq=False)
class Population:
    """Solutions stored row-wise with aligned fitness values.

    Attributes:
        members (Matrix): N x dim solutions.
        fitness (Vector): N objective values in the original space
            (NaN until evaluated).
        velocity (Matrix | None): N x dim swarm velocities, swarm only.
    """

    members: Matrix
    fitness: Vector
    velocity: Matrix | None = field(default=None)

    @property
    def size(self) -> int:
        return int(self.members.shape[0])

    @property
    def dim(self) -> int:
        return int(self.members.shape[1])

    @property
    def evaluated(self) -> bool:
        return not bool(np.any(np.isnan(self.fitness)))

    def best_index(self) -> int:
        return int(np.argmin(self.fitness))

    def ranked(self) -> np.ndarray:
        """Indices sorted by fitness; ties keep the lower index first."""
        return np.argsort(self.fitness, kind="stable")


def sample_initial(
    dim: int, NP: int, bounds: Bounds, rng: np.random.Generator
) -> Population:
    """Samples NP solutions uniformly inside the box; fitness left unevaluated.

    Raises:
        InvalidArgumentError: On non-positive sizes or malformed bounds.
    """
    if NP < 1 or dim < 1:
        raise InvalidArgumentError(f"need NP >= 1 and dim >= 1, got NP={NP}, dim={dim}")
    lower, upper = (np.asarray(b, dtype=np.float64) for b in bounds)
    if lower.shape != (dim,) or upper.shape != (dim,) or np.any(lower >= upper):
        raise InvalidArgumentError("bounds must be two length-dim vectors with lower < upper")
    members = lower + rng.random((NP, dim)) * (upper - lower)
    return Population(members=members, fitness=np.full(NP, np.nan))


def evaluate_all(pop: Population, evaluate: Evaluate) -> Population:
    """Evaluates every member in index order."""
    fitness = np.array([evaluate(x) for x in pop.members], dtype=np.float64)
    return replace(pop, fitness=fitness)


def _parent_ids(target: int, NP: int, rng: np.random.Generator) -> tuple[int, int, int]:
    """Three distinct indices, all different from `target`."""
    picks = rng.choice(NP - 1, size=3, replace=False)
    r1, r2, r3 = (int(p) + 1 if p >= target else int(p) for p in picks)
    return r1, r2, r3


def de_donor(members: Matrix, r1: int, r2: int, r3: int, F: float) -> Vector:
    """The rand/1 donor x_r1 + F·(x_r2 - x_r3)."""
    return members[r1] + F * (members[r2] - members[r3])


def binomial_crossover(
    target: Vector, donor: Vector, CR: float, rng: np.random.Generator
) -> Vector:
    """Takes each coordinate from the donor with probability CR; j_rand always."""
    mask = rng.random(target.size) < CR
    mask[rng.integers(target.size)] = True
    return np.where(mask, donor, target)


def de_step(
    pop: Population,
    params: OptimizerParams,
    rng: np.random.Generator,
    evaluate: Evaluate,
    bounds: Bounds | None = None,
) -> tuple[Population, int]:
    """One synchronous DE/rand/1/bin generation with greedy selection.

    Trials are generated for the whole population first, then evaluated in
    index order; a trial replaces its target when its fitness is <= the
    target's. Trials are clipped to `bounds` when given.

    Returns:
        tuple[Population, int]: The next population and the NP evaluations made.

    Raises:
        InvalidArgumentError: If NP < 4.
    """
    NP = pop.size
    if NP < 4:
        raise InvalidArgumentError(f"DE needs NP >= 4, got {NP}")

    trials = np.empty_like(pop.members)
    for i in range(NP):
        r1, r2, r3 = _parent_ids(i, NP, rng)
        donor = de_donor(pop.members, r1, r2, r3, params.F)
        trials[i] = binomial_crossover(pop.members[i], donor, params.CR, rng)
    if bounds is not None:
        trials = np.clip(trials, bounds[0], bounds[1])

    trial_fitness = np.array([evaluate(t) for t in trials], dtype=np.float64)
    accept = trial_fitness <= pop.fitness
    members = np.where(accept[:, None], trials, pop.members)
    fitness = np.where(accept, trial_fitness, pop.fitness)
    return replace(pop, members=members, fitness=fitness), NP


def swarm_levels(pop: Population, NL: int) -> list[np.ndarray]:
    """Splits ranked member indices into NL levels, best level first.

    Every level holds NP // NL members; the remainder joins the last level.
    """
    order = pop.ranked()
    size = pop.size // NL
    return [order[i * size : (i + 1) * size] for i in range(NL - 1)] + [
        order[(NL - 1) * size :]
    ]


def llso_velocity(
    v: Vector, x: Vector, x_a: Vector, x_b: Vector, phi: float, r: Matrix
) -> Vector:
    """Level-based learning update r1·v + r2·(x_a - x) + φ·r3·(x_b - x).

    `r` holds the three uniform weight vectors row-wise.
    """
    return r[0] * v + r[1] * (x_a - x) + phi * r[2] * (x_b - x)


def _exemplars(
    levels: list[np.ndarray], level: int, pop: Population, rng: np.random.Generator
) -> tuple[int, int]:
    """Draws exemplar indices from two strictly better levels (a better than b)."""
    if level >= 2:
        la, lb = sorted(int(v) for v in rng.choice(level, size=2, replace=False))
        return (
            int(levels[la][rng.integers(levels[la].size)]),
            int(levels[lb][rng.integers(levels[lb].size)]),
        )
    best = levels[0]
    if best.size == 1:
        return int(best[0]), int(best[0])
    a, b = (int(best[p]) for p in rng.choice(best.size, size=2, replace=False))
    return (a, b) if pop.fitness[a] <= pop.fitness[b] else (b, a)


def llso_step(
    pop: Population,
    params: OptimizerParams,
    rng: np.random.Generator,
    evaluate: Evaluate,
    bounds: Bounds | None = None,
) -> tuple[Population, int]:
    """One level-based learning swarm generation.

    Members of the best level pass through unevaluated; every other member
    learns from two exemplars of strictly better levels, moves, and is
    re-evaluated. Exemplars are read from the incoming population.

    Returns:
        tuple[Population, int]: The next population and NP - |best level|.

    Raises:
        InvalidArgumentError: If NP < 2·NL.
    """
    NP, NL = pop.size, params.NL
    if NP < 2 * NL:
        raise InvalidArgumentError(f"swarm needs NP >= 2*NL = {2 * NL}, got {NP}")

    velocity = pop.velocity if pop.velocity is not None else np.zeros_like(pop.members)
    members = pop.members.copy()
    new_velocity = velocity.copy()
    levels = swarm_levels(pop, NL)

    moved: list[int] = []
    for level in range(1, NL):
        for idx in levels[level]:
            i = int(idx)
            a, b = _exemplars(levels, level, pop, rng)
            r = rng.random((3, pop.dim))
            new_velocity[i] = llso_velocity(
                velocity[i], pop.members[i], pop.members[a], pop.members[b], params.phi, r
            )
            members[i] = pop.members[i] + new_velocity[i]
            moved.append(i)
    if bounds is not None:
        members = np.clip(members, bounds[0], bounds[1])

    fitness = pop.fitness.copy()
    for i in moved:
        fitness[i] = evaluate(members[i])
    return Population(members=members, fitness=fitness, velocity=new_velocity), len(moved)


def step(
    pop: Population,
    params: OptimizerParams,
    rng: np.random.Generator,
    evaluate: Evaluate,
    bounds: Bounds | None = None,
) -> tuple[Population, int]:
    """Dispatches to the optimizer selected by `params.kind`."""
    if params.kind == "de":
        return de_step(pop, params, rng, evaluate, bounds)
    if params.kind == "llso":
        return llso_step(pop, params, rng, evaluate, bounds)
    raise InvalidArgumentError(f"Unknown optimizer '{params.kind}'")
