"""Scalable, seeded analogs of the CEC2013 large-scale benchmark families.

Problems are additive compositions of shifted (and optionally rotated) base
functions over variable groups. The group layout determines the separability
class: one unrotated block (fully separable), a partition into rotated blocks
(partially separable), rotated blocks plus a separable remainder (mixed),
chained blocks sharing a fixed number of coordinates (overlapping), or one
rotated block over every variable (non-separable).

Problems are addressed by string ids of the form
`<structure>-<base>-d<dim>-s<seed>` with optional `-m<group size>`,
`-o<overlap>` and `-r0` / `-r1` (rotation) suffixes.
"""

import functools
import logging
import math
import re
from collections.abc import Callable
from dataclasses import dataclass, replace

import numpy as np
import numpy.typing as npt

from .constants import APP_NAME
from .errors import InvalidArgumentError
from .linalg import Matrix, Vector

logger = logging.getLogger(APP_NAME)

STRUCTURES = ("separable", "partial", "mixed", "overlapping", "nonseparable")
"""tuple[str, ...]: Structure tokens, from fully separable to non-separable."""

BASE_BOUNDS: dict[str, float] = {
    "elliptic": 100.0,
    "rastrigin": 5.0,
    "ackley": 32.0,
    "schwefel12": 100.0,
    "rosenbrock": 100.0,
}
"""dict[str, float]: Symmetric search range half-width per base function."""

_E = float(np.exp(1.0))


def _elliptic(z: Vector) -> float:
    weights = 1e6 ** (np.arange(z.size) / (z.size - 1))
    return float(np.sum(weights * z * z))


def _rastrigin(z: Vector) -> float:
    return float(np.sum(z * z + 10.0 * (1.0 - np.cos(2.0 * np.pi * z))))


def _ackley(z: Vector) -> float:
    # Written as two non-negative terms so that ackley(0) is exactly 0.
    first = 20.0 * (1.0 - np.exp(-0.2 * np.sqrt(np.mean(z * z))))
    second = _E - float(np.exp(np.mean(np.cos(2.0 * np.pi * z))))
    return float(first + max(second, 0.0))


def _schwefel12(z: Vector) -> float:
    return float(np.sum(np.cumsum(z) ** 2))


def _rosenbrock(z: Vector) -> float:
    head, tail = z[:-1], z[1:]
    return float(np.sum(100.0 * (head * head - tail) ** 2 + (head - 1.0) ** 2))


_BASE_FUNCTIONS: dict[str, Callable[[Vector], float]] = {
    "elliptic": _elliptic,
    "rastrigin": _rastrigin,
    "ackley": _ackley,
    "schwefel12": _schwefel12,
    "rosenbrock": _rosenbrock,
}


def base_eval(fn_tag: str, x: npt.ArrayLike) -> float:
    """Evaluates one of the canonical base functions.

    Args:
        fn_tag (str): One of elliptic, rastrigin, ackley, schwefel12, rosenbrock.
        x (ArrayLike): Point with at least two finite coordinates.

    Returns:
        float: The function value.

    Raises:
        InvalidArgumentError: On an unknown tag, short or non-finite input.
    """
    fn = _BASE_FUNCTIONS.get(fn_tag)
    if fn is None:
        raise InvalidArgumentError(f"Unknown base function '{fn_tag}'")
    z = np.asarray(x, dtype=np.float64)
    if z.ndim != 1 or z.size < 2:
        raise InvalidArgumentError(f"{fn_tag} needs a vector of length >= 2")
    if not np.all(np.isfinite(z)):
        raise InvalidArgumentError(f"{fn_tag} received non-finite input")
    return fn(z)


@dataclass(frozen=True)
class ProblemSpec:
    """Instance generator configuration.

    `None` for group size, overlap or rotation selects the structure default.

    Attributes:
        structure (str): One of STRUCTURES.
        base (str): Base function tag.
        dim (int): Number of decision variables.
        seed (int): Seed for shift and rotations.
        group_size (int | None): Variables per group (m).
        overlap (int | None): Coordinates shared by consecutive groups.
        rotation (bool | None): Whether groups are rotated.
    """

    structure: str
    base: str
    dim: int
    seed: int = 0
    group_size: int | None = None
    overlap: int | None = None
    rotation: bool | None = None

    @property
    def m(self) -> int:
        if self.group_size is not None:
            return self.group_size
        return min(self.dim, max(2, math.ceil(self.dim / 10)))

    @property
    def overlap_size(self) -> int:
        if self.overlap is not None:
            return self.overlap
        return min(self.m - 1, max(1, self.m // 5))

    @property
    def rotated(self) -> bool:
        if self.rotation is not None:
            return self.rotation
        return self.structure != "separable"

    @property
    def id(self) -> str:
        parts = [f"{self.structure}-{self.base}-d{self.dim}-s{self.seed}"]
        if self.group_size is not None:
            parts.append(f"m{self.group_size}")
        if self.overlap is not None:
            parts.append(f"o{self.overlap}")
        if self.rotation is not None:
            parts.append(f"r{int(self.rotation)}")
        return "-".join(parts)

    def validate(self) -> None:
        """Checks the generator invariants.

        Raises:
            InvalidArgumentError: If any invariant is violated.
        """
        if self.structure not in STRUCTURES:
            raise InvalidArgumentError(f"Unknown structure '{self.structure}'")
        if self.base not in _BASE_FUNCTIONS:
            raise InvalidArgumentError(f"Unknown base function '{self.base}'")
        if self.dim < 2:
            raise InvalidArgumentError(f"dim must be >= 2, got {self.dim}")
        if not 1 <= self.m <= self.dim:
            raise InvalidArgumentError(f"group size must be in [1, {self.dim}], got {self.m}")
        if not 0 <= self.overlap_size < self.m:
            raise InvalidArgumentError(
                f"overlap must be in [0, {self.m}), got {self.overlap_size}"
            )


@dataclass(frozen=True, eq=False)
class Problem:
    """A box-bounded, additively composed objective with known optimum 0.

    Attributes:
        id (str): Registry id.
        dim (int): Number of decision variables.
        lower (Vector): Lower box bounds.
        upper (Vector): Upper box bounds.
        shift (Vector): Location of the optimum.
        structure (str): Separability class token.
        groups (tuple[range, ...]): Variable index sets (0-based, contiguous).
        rotations (tuple[Matrix | None, ...]): Per-group orthogonal matrices.
        base_fns (tuple[str, ...]): Per-group base-function tags.
    """

    id: str
    dim: int
    lower: Vector
    upper: Vector
    shift: Vector
    structure: str
    groups: tuple[range, ...]
    rotations: tuple[Matrix | None, ...]
    base_fns: tuple[str, ...]

    def evaluate(self, x: npt.ArrayLike) -> float:
        """Returns f(x) = Σ_g base_g(R_g·(x_g - shift_g)); pure, no counters.

        Raises:
            InvalidArgumentError: On a length mismatch or non-finite input.
        """
        v = np.asarray(x, dtype=np.float64)
        if v.shape != (self.dim,):
            raise InvalidArgumentError(f"expected a vector of length {self.dim}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("objective received non-finite input")
        total = 0.0
        for group, rotation, tag in zip(
            self.groups, self.rotations, self.base_fns, strict=True
        ):
            z = v[group.start : group.stop] - self.shift[group.start : group.stop]
            if rotation is not None:
                z = rotation @ z
            if tag == "rosenbrock":
                z = z + 1.0
            total += _BASE_FUNCTIONS[tag](z)
        return total

    @property
    def bounds(self) -> tuple[Vector, Vector]:
        return self.lower, self.upper


def problem_eval(p: Problem, x: npt.ArrayLike) -> float:
    """Evaluates problem `p` at `x` (see `Problem.evaluate`)."""
    return p.evaluate(x)


def _chunks(start: int, stop: int, size: int) -> list[range]:
    return [range(s, min(s + size, stop)) for s in range(start, stop, size)]


def _overlapping(dim: int, size: int, overlap: int) -> list[range]:
    groups = []
    start = 0
    while True:
        end = min(start + size, dim)
        groups.append(range(start, end))
        if end == dim:
            return groups
        start += size - overlap


def _merge_short(groups: list[range]) -> list[range]:
    """Folds groups with fewer than two variables into their predecessor."""
    merged: list[range] = []
    for group in groups:
        if len(group) < 2 and merged:
            prev = merged.pop()
            merged.append(range(prev.start, max(prev.stop, group.stop)))
        else:
            merged.append(group)
    if len(merged) > 1 and len(merged[0]) < 2:
        first, second = merged[0], merged[1]
        merged[:2] = [range(first.start, second.stop)]
    return merged


def _layout(spec: ProblemSpec) -> tuple[list[range], list[bool]]:
    """Builds the group index sets and whether each group may be rotated."""
    dim, m = spec.dim, spec.m
    if spec.structure in ("separable", "nonseparable"):
        return [range(dim)], [spec.structure == "nonseparable"]
    if spec.structure == "partial":
        groups = _merge_short(_chunks(0, dim, m))
        return groups, [True] * len(groups)
    if spec.structure == "overlapping":
        groups = _merge_short(_overlapping(dim, m, spec.overlap_size))
        return groups, [True] * len(groups)
    # mixed: rotated blocks over the first half, one separable tail block
    head = max(m, (dim // 2) // m * m)
    if dim - head < 2:
        groups = _merge_short(_chunks(0, dim, m))
        return groups, [True] * len(groups)
    groups = _merge_short(_chunks(0, head, m))
    return [*groups, range(head, dim)], [True] * len(groups) + [False]


def random_rotation(n: int, rng: np.random.Generator) -> Matrix:
    """Returns a seeded orthogonal n x n matrix (QR of a Gaussian matrix)."""
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def make_problem(spec: ProblemSpec) -> Problem:
    """Instantiates a problem deterministically from its spec.

    The shift is drawn uniformly from the central 80% of the box, then one
    rotation per rotatable group (when rotation is enabled), all from a
    generator seeded with `spec.seed`.

    Raises:
        InvalidArgumentError: If the spec is invalid.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    half = BASE_BOUNDS[spec.base]
    lower = np.full(spec.dim, -half)
    upper = np.full(spec.dim, half)
    shift = lower + (0.1 + 0.8 * rng.random(spec.dim)) * (upper - lower)

    groups, rotatable = _layout(spec)
    rotations = tuple(
        random_rotation(len(g), rng) if (spec.rotated and can_rotate) else None
        for g, can_rotate in zip(groups, rotatable, strict=True)
    )
    logger.debug(f"Built {spec.id}: {len(groups)} groups, rotation={spec.rotated}")
    return Problem(
        id=spec.id,
        dim=spec.dim,
        lower=lower,
        upper=upper,
        shift=shift,
        structure=spec.structure,
        groups=tuple(groups),
        rotations=rotations,
        base_fns=(spec.base,) * len(groups),
    )


_ID_RE = re.compile(
    r"^(?P<structure>[a-z]+)-(?P<base>[a-z0-9]+)-d(?P<dim>\d+)-s(?P<seed>\d+)"
    r"(?P<extras>(?:-(?:m\d+|o\d+|r[01]))*)$"
)


def parse_problem_id(problem_id: str) -> ProblemSpec:
    """Parses a registry id into a validated ProblemSpec.

    Raises:
        InvalidArgumentError: If the id is malformed or names an invalid spec.
    """
    match = _ID_RE.match(problem_id.strip())
    if not match:
        raise InvalidArgumentError(
            f"Invalid problem id '{problem_id}' "
            "(expected <structure>-<base>-d<dim>-s<seed>[-m<m>][-o<o>][-r0|-r1])"
        )
    extras: dict[str, int] = {}
    for token in match.group("extras").split("-"):
        if token:
            extras[token[0]] = int(token[1:])
    spec = ProblemSpec(
        structure=match.group("structure"),
        base=match.group("base"),
        dim=int(match.group("dim")),
        seed=int(match.group("seed")),
        group_size=extras.get("m"),
        overlap=extras.get("o"),
        rotation=bool(extras["r"]) if "r" in extras else None,
    )
    spec.validate()
    return spec


def with_dim(problem_id: str, dim: int) -> str:
    """Returns the id of the same problem family re-instantiated at `dim`."""
    return replace(parse_problem_id(problem_id), dim=dim).id


@functools.lru_cache(maxsize=64)
def resolve(problem_id: str) -> Problem:
    """Looks up (and caches) the problem for a registry id."""
    return make_problem(parse_problem_id(problem_id))


def reference_suite(dim: int = 1000, seed: int = 0) -> dict[str, str]:
    """Returns the fifteen-problem reference suite, `F1` ... `F15`, as registry ids."""
    rows = [
        ("separable", "elliptic", ""),
        ("separable", "rastrigin", ""),
        ("separable", "ackley", ""),
        ("mixed", "elliptic", ""),
        ("mixed", "rastrigin", ""),
        ("mixed", "ackley", ""),
        ("partial", "schwefel12", ""),
        ("partial", "elliptic", ""),
        ("partial", "rastrigin", ""),
        ("overlapping", "ackley", ""),
        ("overlapping", "schwefel12", ""),
        ("overlapping", "rosenbrock", ""),
        ("nonseparable", "schwefel12", ""),
        ("nonseparable", "schwefel12", "alt"),
        ("nonseparable", "schwefel12", "-r0"),
    ]
    suite = {}
    for index, (structure, base, variant) in enumerate(rows, start=1):
        row_seed = seed + 1 if variant == "alt" else seed
        suffix = variant if variant.startswith("-") else ""
        suite[f"F{index}"] = f"{structure}-{base}-d{dim}-s{row_seed}{suffix}"
    return suite
