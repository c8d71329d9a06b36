"""Tests for the pseudo-inverse, PCA and affine-map primitives."""

import numpy as np
import pytest

from mses.errors import InsufficientSamplesError, InvalidArgumentError
from mses.linalg import (
    AffineMap,
    apply_map,
    is_orthonormal,
    learn_affine_map,
    pca_fit,
    pca_project,
    pca_reconstruct,
    pinv,
    squared_loss,
)

# --- pinv ---


def test_pinv_identity() -> None:
    """Verifies that the identity is its own pseudo-inverse."""
    np.testing.assert_allclose(pinv(np.eye(3)), np.eye(3), atol=1e-15)


def test_pinv_drops_zero_singular_value() -> None:
    """Verifies that zero singular values are treated as zero, not inverted."""
    result = pinv(np.array([[2.0, 0.0], [0.0, 0.0]]))
    np.testing.assert_allclose(result, [[0.5, 0.0], [0.0, 0.0]], atol=1e-15)


def test_pinv_satisfies_penrose_conditions() -> None:
    """Verifies the four Penrose conditions on a full-column-rank matrix."""
    rng = np.random.default_rng(3)
    a = rng.standard_normal((5, 3))
    x = pinv(a)

    np.testing.assert_allclose(x @ a, np.eye(3), atol=1e-8)
    np.testing.assert_allclose(a @ x @ a, a, atol=1e-8)
    np.testing.assert_allclose(x @ a @ x, x, atol=1e-8)
    np.testing.assert_allclose((a @ x).T, a @ x, atol=1e-8)
    np.testing.assert_allclose((x @ a).T, x @ a, atol=1e-8)


def test_pinv_all_zero_matrix() -> None:
    """Verifies that the pseudo-inverse of a zero matrix is its zero transpose."""
    result = pinv(np.zeros((2, 4)))
    assert result.shape == (4, 2)
    assert not result.any()


@pytest.mark.parametrize(
    ("matrix", "rel_tol"),
    [
        (np.array([[1.0, np.nan]]), 1e-10),
        (np.array([[np.inf, 0.0]]), 1e-10),
        (np.eye(2), 0.0),
        (np.eye(2), 1.0),
    ],
)
def test_pinv_rejects_invalid_input(matrix: np.ndarray, rel_tol: float) -> None:
    """Verifies that non-finite input and out-of-range cutoffs are rejected.

    Args:
        matrix (np.ndarray): The candidate input.
        rel_tol (float): The candidate cutoff.
    """
    with pytest.raises(InvalidArgumentError):
        pinv(matrix, rel_tol)


# --- PCA ---


def test_pca_line_data() -> None:
    """Verifies the hand-computed fit of three collinear points."""
    data = np.array([[0.0, 1.0, 2.0], [0.0, 1.0, 2.0]])
    model = pca_fit(data, 1)

    np.testing.assert_allclose(model.mean, [1.0, 1.0])
    np.testing.assert_allclose(model.basis[:, 0], [1 / np.sqrt(2), 1 / np.sqrt(2)])
    recon = pca_reconstruct(model, pca_project(model, data))
    np.testing.assert_allclose(recon, data, atol=1e-12)


def test_pca_project_known_point() -> None:
    """Verifies projecting (2, 2) onto the fitted line gives sqrt(2)."""
    model = pca_fit(np.array([[0.0, 1.0, 2.0], [0.0, 1.0, 2.0]]), 1)
    coords = pca_project(model, np.array([[2.0], [2.0]]))
    assert coords[0, 0] == pytest.approx(np.sqrt(2), abs=1e-12)


def test_pca_constant_data_reduces_rank(caplog: pytest.LogCaptureFixture) -> None:
    """Verifies that zero-variance data keeps a single component with zero variance."""
    data = np.full((3, 4), 5.0)
    with caplog.at_level("DEBUG", logger="mses"):
        model = pca_fit(data, 2)

    assert model.k == 1
    assert model.reduced
    np.testing.assert_array_equal(model.variances, [0.0])
    assert "keeping 1 components" in caplog.text


@pytest.mark.parametrize("seed", range(100))
def test_pca_reconstructs_affine_subspace(seed: int) -> None:
    """Verifies exact reconstruction of data lying in a k-D affine subspace of 50-D.

    The fit must also be orthonormal with sorted, non-negative variances.

    Args:
        seed (int): Dataset seed.
    """
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 11))
    n = int(rng.integers(k + 2, 61))
    basis, _ = np.linalg.qr(rng.standard_normal((50, k)))
    offset = rng.standard_normal(50)
    data = basis @ rng.standard_normal((k, n)) + offset[:, None]

    model = pca_fit(data, k)
    recon = pca_reconstruct(model, pca_project(model, data))
    assert model.k == k
    assert np.max(np.abs(recon - data)) <= 1e-8
    assert is_orthonormal(model.basis)
    assert np.all(np.diff(model.variances) <= 0)
    assert np.all(model.variances >= 0)


@pytest.mark.parametrize(("d", "rank", "k"), [(6, 6, 2), (6, 6, 6), (8, 3, 1), (8, 3, 3)])
def test_pca_variance_bounded_by_total(d: int, rank: int, k: int) -> None:
    """Verifies the kept variances never exceed the total and match it at k = rank.

    Args:
        d (int): Ambient dimension.
        rank (int): Rank of the centred data.
        k (int): Requested components.
    """
    rng = np.random.default_rng(d * 10 + k)
    data = rng.standard_normal((d, rank)) @ rng.standard_normal((rank, 30)) + 3.0
    total = float(np.sum(np.var(data, axis=1, ddof=1)))

    kept = float(np.sum(pca_fit(data, k).variances))
    assert kept <= total * (1 + 1e-12)
    if k == rank:
        assert kept == pytest.approx(total, rel=1e-10)
    else:
        assert kept < total


def test_pca_invariants() -> None:
    """Verifies orthonormality and non-increasing variances."""
    rng = np.random.default_rng(5)
    model = pca_fit(rng.standard_normal((8, 30)) * np.arange(1, 9)[:, None], 5)

    assert is_orthonormal(model.basis)
    assert np.all(np.diff(model.variances) <= 0)
    assert np.all(model.variances >= 0)


def test_pca_full_rank_round_trip() -> None:
    """Verifies project-then-reconstruct is the identity when k equals d."""
    rng = np.random.default_rng(9)
    data = rng.standard_normal((4, 12))
    model = pca_fit(data, 4)
    np.testing.assert_allclose(pca_reconstruct(model, pca_project(model, data)), data, atol=1e-10)


def test_pca_mean_projects_to_origin_and_back() -> None:
    """Verifies that the mean maps to zero coordinates and zero maps to the mean."""
    rng = np.random.default_rng(2)
    model = pca_fit(rng.standard_normal((5, 20)), 3)

    np.testing.assert_allclose(pca_project(model, model.mean[:, None]), 0.0, atol=1e-12)
    np.testing.assert_allclose(pca_reconstruct(model, np.zeros((3, 1)))[:, 0], model.mean)


def test_pca_is_deterministic() -> None:
    """Verifies that fitting the same data twice gives bitwise-identical models."""
    data = np.random.default_rng(1).standard_normal((6, 15))
    a, b = pca_fit(data, 4), pca_fit(data.copy(), 4)
    np.testing.assert_array_equal(a.basis, b.basis)
    np.testing.assert_array_equal(a.variances, b.variances)


def test_pca_rank_cap_by_samples() -> None:
    """Verifies that k never exceeds the number of samples minus one."""
    data = np.random.default_rng(4).standard_normal((20, 5))
    model = pca_fit(data, 12)
    assert model.k == 4
    assert model.requested_k == 12


def test_pca_errors() -> None:
    """Verifies the documented argument errors."""
    with pytest.raises(InsufficientSamplesError):
        pca_fit(np.ones((3, 1)), 1)
    with pytest.raises(InvalidArgumentError):
        pca_fit(np.ones((3, 4)), 0)
    model = pca_fit(np.random.default_rng(0).standard_normal((3, 6)), 2)
    with pytest.raises(InvalidArgumentError):
        pca_project(model, np.ones((4, 1)))
    with pytest.raises(InvalidArgumentError):
        pca_reconstruct(model, np.ones((3, 1)))


# --- Affine maps ---


def test_learn_affine_map_one_dimensional() -> None:
    """Verifies the hand-solved map p = 2q + 3."""
    mapping = learn_affine_map(np.array([[0.0, 1.0]]), np.array([[3.0, 5.0]]))
    np.testing.assert_allclose(mapping.linear, [[2.0]], atol=1e-12)
    np.testing.assert_allclose(mapping.bias, [3.0], atol=1e-12)
    np.testing.assert_allclose(apply_map(mapping, [[0.0, 1.0]]), [[3.0, 5.0]], atol=1e-12)


def test_learn_affine_map_identity() -> None:
    """Verifies that T = S yields a map fixing every training column."""
    s = np.random.default_rng(6).standard_normal((4, 9))
    mapping = learn_affine_map(s, s)
    np.testing.assert_allclose(apply_map(mapping, s), s, atol=1e-8)


@pytest.mark.parametrize("seed", range(50))
def test_learn_affine_map_recovers_generator(seed: int) -> None:
    """Verifies recovery of (A, b) from T = A·S + b·1ᵀ with N = d_in + 5.

    Args:
        seed (int): Instance seed.
    """
    rng = np.random.default_rng(seed)
    d_in = int(rng.integers(2, 21))
    d_out = int(rng.integers(1, 21))
    a = rng.standard_normal((d_out, d_in))
    b = rng.standard_normal(d_out)
    s = rng.standard_normal((d_in, d_in + 5))
    mapping = learn_affine_map(s, a @ s + b[:, None])

    assert np.linalg.norm(mapping.linear - a) <= 1e-6 * np.linalg.norm(a)
    assert np.linalg.norm(mapping.bias - b) <= 1e-6 * max(np.linalg.norm(b), 1.0)


def test_learn_affine_map_underdetermined_is_finite() -> None:
    """Verifies a finite map when there are fewer samples than inputs."""
    rng = np.random.default_rng(8)
    mapping = learn_affine_map(rng.standard_normal((10, 4)), rng.standard_normal((3, 4)))
    assert mapping.linear.shape == (3, 10)
    assert np.all(np.isfinite(mapping.linear))


def test_learn_affine_map_rejects_mismatched_samples() -> None:
    """Verifies that differing column counts are rejected."""
    with pytest.raises(InvalidArgumentError):
        learn_affine_map(np.ones((2, 3)), np.ones((2, 4)))


def test_closed_form_beats_perturbations() -> None:
    """Verifies the closed-form map minimises the squared loss locally."""
    rng = np.random.default_rng(21)
    s = rng.standard_normal((6, 4))
    t = rng.standard_normal((3, 4))
    mapping = learn_affine_map(s, t)
    base = squared_loss(mapping, s, t)
    for _ in range(20):
        nudged = AffineMap(
            linear=mapping.linear + 1e-3 * rng.standard_normal(mapping.linear.shape),
            bias=mapping.bias + 1e-3 * rng.standard_normal(mapping.bias.shape),
        )
        assert base <= squared_loss(nudged, s, t) + 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_learn_affine_map_is_ridge_limit(seed: int) -> None:
    """Verifies the learned map is the vanishing-penalty limit of ridge regression.

    Args:
        seed (int): Instance seed.
    """
    rng = np.random.default_rng(100 + seed)
    s = rng.standard_normal((5, 20))
    t = rng.standard_normal((3, 20))
    mapping = learn_affine_map(s, t)
    exact = np.hstack([mapping.linear, mapping.bias[:, None]])

    s_aug = np.vstack([s, np.ones((1, 20))])
    gaps = []
    for lam in (1e-6, 1e-8):
        gram = s_aug @ s_aug.T + lam * np.eye(6)
        ridge = np.linalg.solve(gram, s_aug @ t.T).T
        gaps.append(np.linalg.norm(ridge - exact))

    assert gaps[1] < gaps[0]
    assert gaps[0] <= 1e-4 * np.linalg.norm(exact)


def test_affine_map_identity_and_compose() -> None:
    """Verifies the identity map and composition order."""
    x = np.array([[1.0, -2.0], [3.0, 0.5]])
    np.testing.assert_array_equal(apply_map(AffineMap.identity(2), x), x)

    double = AffineMap(linear=2 * np.eye(2), bias=np.zeros(2))
    shift = AffineMap(linear=np.eye(2), bias=np.ones(2))
    composed = double.compose(shift)
    np.testing.assert_allclose(apply_map(composed, x), 2 * (x + 1))


def test_affine_map_validation() -> None:
    """Verifies shape and finiteness checks on construction and application."""
    with pytest.raises(InvalidArgumentError):
        AffineMap(linear=np.eye(2), bias=np.zeros(3))
    with pytest.raises(InvalidArgumentError):
        AffineMap(linear=np.array([[np.nan]]), bias=np.zeros(1))
    with pytest.raises(InvalidArgumentError):
        apply_map(AffineMap.identity(2), np.ones((3, 1)))
