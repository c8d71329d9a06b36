"""Dense linear algebra for multi-space search.

Provides the Moore-Penrose pseudo-inverse, PCA (fit / project / reconstruct)
and least-squares affine maps between a search space and its simplified
counterpart. Every function is pure; arrays are `float64` and samples are
stored as **columns** (a d x N matrix holds N points of dimension d).
"""

import logging
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .constants import APP_NAME, ORTHONORMAL_TOL, PINV_REL_TOL
from .errors import InsufficientSamplesError, InvalidArgumentError

logger = logging.getLogger(APP_NAME)

Matrix = npt.NDArray[np.float64]
"""A two-dimensional float64 array."""

Vector = npt.NDArray[np.float64]
"""A one-dimensional float64 array."""


def as_matrix(values: npt.ArrayLike, name: str = "matrix") -> Matrix:
    """Validates and converts input into a finite, non-empty 2-D float array.

    Args:
        values (ArrayLike): Anything numpy can turn into a 2-D array.
        name (str): Name used in error messages.

    Returns:
        Matrix: A float64 copy-free view when possible.

    Raises:
        InvalidArgumentError: If the input is not 2-D, empty or non-finite.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidArgumentError(f"{name} must be a non-empty 2-D array, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains NaN or Inf entries")
    return arr


def _fix_signs(basis: Matrix) -> Matrix:
    """Flips each column so its largest-magnitude entry is positive."""
    if basis.size == 0:
        return basis
    pivots = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[pivots, np.arange(basis.shape[1])])
    signs[signs == 0] = 1.0
    return basis * signs


def pinv(A: npt.ArrayLike, rel_tol: float = PINV_REL_TOL) -> Matrix:
    """Computes the Moore-Penrose pseudo-inverse through an SVD.

    Singular values at or below `rel_tol` times the largest one are treated
    as zero, which yields the minimum-norm least-squares inverse for
    rank-deficient input.

    Args:
        A (ArrayLike): The m x n matrix to invert.
        rel_tol (float): Relative cutoff, in (0, 1).

    Returns:
        Matrix: The n x m pseudo-inverse.

    Raises:
        InvalidArgumentError: On non-finite input or a cutoff outside (0, 1).
    """
    if not 0.0 < rel_tol < 1.0:
        raise InvalidArgumentError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    a = as_matrix(A, "A")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((a.shape[1], a.shape[0]))
    keep = s > rel_tol * s[0]
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (vt.T * s_inv) @ u.T


@dataclass(frozen=True, eq=False)
class PcaModel:
    """A fitted principal-component model: the simplified search space.

    Attributes:
        mean (Vector): Column average of the fitted data (length `dim`).
        basis (Matrix): dim x k matrix with orthonormal columns.
        variances (Vector): The k sample variances, non-increasing.
        requested_k (int): The number of components asked for.
    """

    mean: Vector
    basis: Matrix
    variances: Vector
    requested_k: int

    @property
    def dim(self) -> int:
        return int(self.basis.shape[0])

    @property
    def k(self) -> int:
        return int(self.basis.shape[1])

    @property
    def reduced(self) -> bool:
        """True when the data rank forced fewer components than requested."""
        return self.k < self.requested_k


def pca_fit(data: npt.ArrayLike, k: int) -> PcaModel:
    """Fits PCA on column samples via an SVD of the centred data.

    If the centred data has rank r < k, the model keeps max(r, 1) components
    instead of padding with arbitrary directions. Each basis column is signed
    so that its largest-magnitude entry is positive, which makes the fit
    deterministic.

    Args:
        data (ArrayLike): d x N matrix, one sample per column.
        k (int): Requested number of components (d_s).

    Returns:
        PcaModel: The fitted model.

    Raises:
        InsufficientSamplesError: If fewer than two samples are given.
        InvalidArgumentError: If k < 1 or the data is not finite.
    """
    if k < 1:
        raise InvalidArgumentError(f"k must be at least 1, got {k}")
    x = as_matrix(data, "data")
    d, n = x.shape
    if n < 2:
        raise InsufficientSamplesError(f"PCA needs at least 2 samples, got {n}")

    mean = x.mean(axis=1)
    centered = x - mean[:, None]
    u, s, _ = np.linalg.svd(centered, full_matrices=False)

    # Numerical rank, the same threshold numpy.linalg.matrix_rank uses.
    tol = s[0] * max(d, n) * np.finfo(np.float64).eps if s.size else 0.0
    rank = int(np.count_nonzero(s > tol)) if s.size and s[0] > 0.0 else 0
    k_eff = min(k, d, max(rank, 1))
    if k_eff < k:
        logger.debug(f"PCA rank {rank} < requested {k}; keeping {k_eff} components.")

    basis = _fix_signs(u[:, :k_eff].copy())
    variances = s[:k_eff] ** 2 / (n - 1)
    if rank == 0:
        variances = np.zeros(k_eff)
    variances = np.where(variances < 0.0, 0.0, variances)
    return PcaModel(mean=mean, basis=basis, variances=variances, requested_k=k)


def pca_project(model: PcaModel, points: npt.ArrayLike) -> Matrix:
    """Maps d x N points to their k x N coordinates, basisᵀ·(x - mean).

    Raises:
        InvalidArgumentError: If the row count differs from `model.dim`.
    """
    x = as_matrix(points, "points")
    if x.shape[0] != model.dim:
        raise InvalidArgumentError(
            f"points have {x.shape[0]} rows, model expects {model.dim}"
        )
    return model.basis.T @ (x - model.mean[:, None])


def pca_reconstruct(model: PcaModel, coords: npt.ArrayLike) -> Matrix:
    """Maps k x N coordinates back to d x N points, basis·c + mean.

    Raises:
        InvalidArgumentError: If the row count differs from `model.k`.
    """
    c = as_matrix(coords, "coords")
    if c.shape[0] != model.k:
        raise InvalidArgumentError(
            f"coords have {c.shape[0]} rows, model expects {model.k}"
        )
    return model.basis @ c + model.mean[:, None]


def is_orthonormal(basis: Matrix, tol: float = ORTHONORMAL_TOL) -> bool:
    """Checks basisᵀ·basis = I within `tol` (max absolute deviation)."""
    gram = basis.T @ basis
    return bool(np.max(np.abs(gram - np.eye(basis.shape[1]))) <= tol)


@dataclass(frozen=True, eq=False)
class AffineMap:
    """The affine map x -> linear·x + bias.

    Attributes:
        linear (Matrix): out_dim x in_dim.
        bias (Vector): Length out_dim.
    """

    linear: Matrix
    bias: Vector

    def __post_init__(self) -> None:
        if self.linear.ndim != 2 or self.bias.shape != (self.linear.shape[0],):
            raise InvalidArgumentError(
                f"bias {self.bias.shape} does not match linear {self.linear.shape}"
            )
        if not (np.all(np.isfinite(self.linear)) and np.all(np.isfinite(self.bias))):
            raise InvalidArgumentError("affine map entries must be finite")

    @property
    def in_dim(self) -> int:
        return int(self.linear.shape[1])

    @property
    def out_dim(self) -> int:
        return int(self.linear.shape[0])

    @classmethod
    def identity(cls, dim: int) -> "AffineMap":
        return cls(linear=np.eye(dim), bias=np.zeros(dim))

    def compose(self, inner: "AffineMap") -> "AffineMap":
        """Returns the map x -> self(inner(x))."""
        if inner.out_dim != self.in_dim:
            raise InvalidArgumentError(
                f"cannot compose {self.in_dim}-input map after {inner.out_dim}-output map"
            )
        return AffineMap(
            linear=self.linear @ inner.linear,
            bias=self.linear @ inner.bias + self.bias,
        )


def learn_affine_map(
    S: npt.ArrayLike, T: npt.ArrayLike, rel_tol: float = PINV_REL_TOL
) -> AffineMap:
    """Learns the least-squares affine map sending columns of S onto columns of T.

    S is augmented with a constant-1 row and the augmented map is the closed
    form M = (T·Sᵀ)·(S·Sᵀ)⁺. The pseudo-inverse makes the result the
    minimum-norm minimiser whenever the Gram matrix is singular (fewer
    samples than input dimensions plus one).

    Args:
        S (ArrayLike): d_in x N source samples.
        T (ArrayLike): d_out x N target samples, paired column-wise with S.
        rel_tol (float): Pseudo-inverse cutoff.

    Returns:
        AffineMap: The fitted map (linear part and bias).

    Raises:
        InvalidArgumentError: On mismatched column counts or non-finite input.
    """
    s = as_matrix(S, "S")
    t = as_matrix(T, "T")
    if s.shape[1] != t.shape[1]:
        raise InvalidArgumentError(
            f"S has {s.shape[1]} samples but T has {t.shape[1]}"
        )
    s_aug = np.vstack([s, np.ones((1, s.shape[1]))])
    m_aug = (t @ s_aug.T) @ pinv(s_aug @ s_aug.T, rel_tol)
    return AffineMap(linear=m_aug[:, :-1].copy(), bias=m_aug[:, -1].copy())


def apply_map(mapping: AffineMap, points: npt.ArrayLike) -> Matrix:
    """Applies the map column-wise to an in_dim x N matrix.

    Raises:
        InvalidArgumentError: If the row count differs from `mapping.in_dim`.
    """
    x = as_matrix(points, "points")
    if x.shape[0] != mapping.in_dim:
        raise InvalidArgumentError(
            f"points have {x.shape[0]} rows, map expects {mapping.in_dim}"
        )
    return mapping.linear @ x + mapping.bias[:, None]


def squared_loss(mapping: AffineMap, S: npt.ArrayLike, T: npt.ArrayLike) -> float:
    """Mean halved squared reconstruction loss of a map over paired samples."""
    s = as_matrix(S, "S")
    t = as_matrix(T, "T")
    residual = t - apply_map(mapping, s)
    return float(np.sum(residual**2) / (2 * s.shape[1]))
