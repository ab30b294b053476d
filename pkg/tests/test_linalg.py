import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from stochinv.errors import ConfigError, NotSPDError
from stochinv.linalg import (
    IDENTITY,
    ProblemMatrix,
    WeightSpec,
    eigh_sym,
    jacobi_eigh,
    residual_norm,
    spectral_norm_estimate,
    sym_inv_sqrt,
    sym_pinv,
    sym_sqrt,
    weighted_frobenius_norm,
    weighted_operator_norm,
)

from _fixtures import random_spd

seeds = st.integers(0, 2**32 - 1)


class TestProblemMatrix:
    def test_symmetrizes_and_records_correction(self):
        P = ProblemMatrix(np.array([[1.0, 2.0], [2.2, 1.0]]), "symmetric")
        assert_allclose(P.data, [[1.0, 2.1], [2.1, 1.0]])
        assert P.symmetrization_correction == pytest.approx(0.1)
        assert np.array_equal(P.data, P.data.T)

    def test_general_kept_verbatim(self):
        M = np.array([[1.0, 2.0], [3.0, 4.0]])
        P = ProblemMatrix(M)
        assert np.array_equal(P.data, M)
        assert P.symmetrization_correction == 0.0

    def test_spd_checks(self, A2):
        assert A2.is_spd()
        assert A2.lambda_min() == pytest.approx(1.0)
        with pytest.raises(NotSPDError):
            ProblemMatrix(np.array([[1.0, 2.0], [2.0, 1.0]]), "spd").require_spd()

    def test_rejects_bad_shapes_and_flags(self):
        with pytest.raises(ConfigError):
            ProblemMatrix(np.zeros((2, 3)))
        with pytest.raises(ConfigError):
            ProblemMatrix(np.eye(2), "hermitian")

    def test_scalar_is_one_by_one(self):
        assert ProblemMatrix(4.0).n == 1


class TestWeightedFrobenius:
    def test_identity_of_size_two(self):
        assert weighted_frobenius_norm(np.eye(2)) == pytest.approx(np.sqrt(2))

    def test_a_squared_weight(self):
        A = np.array([[2.0, 1.0], [1.0, 2.0]])
        value = weighted_frobenius_norm(A, WeightSpec.explicit(A @ A))
        assert value == pytest.approx(np.sqrt(10) / 3, abs=1e-12)
        assert weighted_frobenius_norm(A, WeightSpec.a_squared(), A) == pytest.approx(np.sqrt(10) / 3)

    def test_zero(self, rng):
        W = WeightSpec.explicit(random_spd(rng, 4))
        assert weighted_frobenius_norm(np.zeros((4, 4)), W) == 0.0

    @settings(max_examples=30, deadline=None)
    @given(seeds)
    def test_identity_weight_is_plain_frobenius(self, seed):
        X = np.random.default_rng(seed).standard_normal((5, 5))
        assert weighted_frobenius_norm(X) == pytest.approx(np.sqrt(np.sum(X**2)), rel=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(seeds)
    def test_transpose_invariance(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((5, 5))
        W = WeightSpec.explicit(random_spd(rng, 5, 0.5, 4.0))
        assert weighted_frobenius_norm(X, W) == pytest.approx(weighted_frobenius_norm(X.T, W), rel=1e-10)

    @pytest.mark.parametrize("kind", ["explicit", "inverse-of-a", "a-squared", "gram-left", "gram-right"])
    def test_matches_trace_definition(self, rng, kind):
        A = random_spd(rng, 4)
        W = WeightSpec.explicit(random_spd(rng, 4)) if kind == "explicit" else WeightSpec(kind)
        Wd = W.matrix_for(A)
        Winv = np.linalg.inv(Wd)
        X = rng.standard_normal((4, 4))
        expected = np.sqrt(np.trace(X.T @ Winv @ X @ Winv))
        assert weighted_frobenius_norm(X, W, A) == pytest.approx(expected, rel=1e-10)
        root = sym_inv_sqrt(Wd)
        assert weighted_operator_norm(X, W, A) == pytest.approx(np.linalg.norm(root @ X @ root, 2), rel=1e-10)

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigError):
            weighted_frobenius_norm(np.eye(3), WeightSpec.explicit(np.eye(2)))

    def test_not_spd_weight(self):
        with pytest.raises(NotSPDError):
            WeightSpec.explicit(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_symbolic_weights_need_spd_a(self):
        with pytest.raises(NotSPDError):
            weighted_frobenius_norm(np.eye(2), WeightSpec.inverse_of_a(), np.array([[1.0, 2.0], [2.0, 1.0]]))


class TestSymPinv:
    def test_diagonal(self):
        res = sym_pinv(np.diag([2.0, 5.0]))
        assert_allclose(res.matrix, np.diag([0.5, 0.2]))
        assert res.dropped == 0

    def test_rank_one(self):
        res = sym_pinv(np.ones((2, 2)), 1e-12)
        assert_allclose(res.matrix, np.ones((2, 2)) / 4, atol=1e-15)
        assert res.dropped == 1

    def test_scalar(self):
        assert_allclose(sym_pinv(np.array([[5.0]])).matrix, [[0.2]])

    @settings(max_examples=40, deadline=None)
    @given(seeds, st.integers(1, 6), st.integers(1, 6))
    def test_moore_penrose(self, seed, q, rank):
        rank = min(rank, q)
        rng = np.random.default_rng(seed)
        B = rng.standard_normal((q, rank))
        M = B @ np.diag(rng.uniform(0.5, 2.0, rank) * rng.choice([-1, 1], rank)) @ B.T
        P = sym_pinv(M).matrix
        scale = np.linalg.norm(M)
        assert np.linalg.norm(P @ M @ P - P) <= 1e-10 * max(np.linalg.norm(P), 1.0) * max(1.0, np.linalg.cond(B) ** 4)
        assert np.linalg.norm(M @ P @ M - M) <= 1e-10 * scale * max(1.0, np.linalg.cond(B) ** 2)


class TestEigen:
    @pytest.mark.parametrize("method", ["lapack", "jacobi"])
    def test_reconstruction_and_orthonormality(self, rng, method):
        M = rng.standard_normal((12, 12))
        M = 1e3 * (M + M.T)
        eig = eigh_sym(M, method)
        assert np.all(np.diff(eig.values) >= 0)
        assert np.linalg.norm(eig.reconstruct() - M) <= 1e-10 * np.linalg.norm(M)
        assert np.abs(eig.vectors.T @ eig.vectors - np.eye(12)).max() <= 1e-12

    def test_jacobi_agrees_with_lapack(self, rng):
        M = random_spd(rng, 9, 0.1, 10.0)
        assert_allclose(jacobi_eigh(M).values, np.linalg.eigvalsh(M), rtol=1e-12)

    def test_square_roots(self, rng):
        M = random_spd(rng, 6)
        R = sym_sqrt(M)
        assert_allclose(R @ R, M, atol=1e-12)
        assert_allclose(sym_inv_sqrt(M) @ R, np.eye(6), atol=1e-12)

    def test_negative_eigenvalue_is_error(self):
        with pytest.raises(Exception):
            sym_sqrt(np.diag([1.0, -1.0]))

    def test_tiny_negative_eigenvalue_clamped(self):
        R = sym_sqrt(np.diag([1.0, -1e-14]))
        assert_allclose(R, np.diag([1.0, 0.0]))


class TestSpectralNorm:
    def test_diagonal(self):
        assert spectral_norm_estimate(np.diag([3.0, 1.0]), iters=50) == pytest.approx(3.0, abs=1e-6)

    def test_two_by_two(self, A2):
        assert spectral_norm_estimate(A2.data, iters=100) == pytest.approx(3.0, abs=1e-6)

    def test_zero(self):
        assert spectral_norm_estimate(np.zeros((3, 3))) == 0.0

    def test_lower_bound_and_deterministic(self, rng):
        M = rng.standard_normal((30, 30))
        est = spectral_norm_estimate(M, iters=200, seed=3)
        assert est <= np.linalg.norm(M, 2) * (1 + 1e-12)
        assert est >= 0.99 * np.linalg.norm(M, 2)
        assert est == spectral_norm_estimate(M, iters=200, seed=3)


def test_residual_norm(A2):
    assert residual_norm(A2, np.linalg.inv(A2.data)) == pytest.approx(0.0, abs=1e-15)
    assert residual_norm(A2, np.zeros((2, 2))) == pytest.approx(np.sqrt(2))
    assert IDENTITY.is_identity
