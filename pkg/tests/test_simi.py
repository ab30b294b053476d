import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from stochinv.driver import InverterConfig, Termination, run_inverter
from stochinv.errors import ConfigError, RankDeficientSketch
from stochinv.linalg import IDENTITY, WeightSpec, weighted_frobenius_norm
from stochinv.simi import step_col, step_row, step_sym, step_sym_closed_form, step_sym_dense
from stochinv.sketching import SketchRule, coordinate_sample, draw_sketch, make_rng

from _fixtures import random_nonsingular, random_spd

A2 = np.array([[2.0, 1.0], [1.0, 2.0]])
E = np.eye(2)
seeds = st.integers(0, 2**32 - 1)


class TestRow:
    def test_full_sketch(self, rng):
        A = random_nonsingular(rng, 6)
        assert_allclose(step_row(rng.standard_normal((6, 6)), A, IDENTITY, np.eye(6)), np.linalg.inv(A), atol=1e-10)

    def test_identity_projects_one_row(self):
        assert_allclose(step_row(np.zeros((2, 2)), np.eye(2), IDENTITY, E[:, 0]), [[1, 0], [0, 0]])

    def test_running_example(self):
        # A^T e1 (e1^T A A^T e1)^{-1} e1^T = (1/5) [[2, 0], [1, 0]]
        assert_allclose(step_row(np.zeros((2, 2)), A2, IDENTITY, E[:, 0]), [[0.4, 0.0], [0.2, 0.0]], atol=1e-15)

    def test_coordinate_sample_matches_dense(self, rng):
        A = random_nonsingular(rng, 5)
        X = rng.standard_normal((5, 5))
        s = coordinate_sample(5, [1, 3])
        assert_allclose(step_row(X, A, IDENTITY, s), step_row(X, A, IDENTITY, s.matrix), atol=1e-13)

    def test_rank_deficient_sketch(self):
        with pytest.raises(RankDeficientSketch):
            step_row(np.eye(2), A2, IDENTITY, np.ones((2, 2)))


class TestCol:
    def test_full_sketch(self, rng):
        A = random_nonsingular(rng, 6)
        assert_allclose(step_col(rng.standard_normal((6, 6)), A, IDENTITY, np.eye(6)), np.linalg.inv(A), atol=1e-10)

    def test_scalar(self):
        assert step_col(np.zeros((1, 1)), np.array([[2.0]]), IDENTITY, np.ones((1, 1)))[0, 0] == pytest.approx(0.5)

    def test_identity(self):
        assert_allclose(step_col(np.zeros((2, 2)), np.eye(2), IDENTITY, E[:, 1]), [[0, 0], [0, 1]])


class TestSym:
    def test_bfgs_example(self):
        out = step_sym(np.eye(2), A2, WeightSpec.inverse_of_a(), E[:, 0])
        assert_allclose(out, [[0.75, -0.5], [-0.5, 1.0]], atol=1e-15)
        assert_allclose(out @ A2 @ E[:, 0], E[:, 0], atol=1e-15)

    def test_full_sketch(self, rng):
        A = random_spd(rng, 6)
        X0 = random_spd(rng, 6)
        assert_allclose(step_sym(X0, A, IDENTITY, np.eye(6)), np.linalg.inv(A), atol=1e-10)

    def test_fixed_point(self, rng):
        A = random_spd(rng, 5)
        Ai = np.linalg.inv(A)
        assert_allclose(step_sym(Ai, A, WeightSpec.inverse_of_a(), rng.standard_normal((5, 2))), Ai, atol=1e-12)

    @pytest.mark.parametrize("kind", ["identity", "inverse-of-a", "a-squared", "explicit"])
    def test_low_rank_matches_reference_forms(self, rng, kind):
        n = 7
        A = random_spd(rng, n)
        W = WeightSpec.explicit(random_spd(rng, n)) if kind == "explicit" else WeightSpec(kind)
        X = random_spd(rng, n)
        S = rng.standard_normal((n, 3))
        fast = step_sym(X, A, W, S)
        assert np.array_equal(fast, fast.T)
        assert_allclose(fast, step_sym_dense(X, A, W, S), atol=1e-10)
        assert_allclose(fast, step_sym_closed_form(X, A, W, S), atol=1e-10)

    def test_is_the_constrained_minimizer(self, rng):
        # compare against a KKT solve of min ||X+ - X||_{F(W^-1)} s.t. S^T A X+ = S^T, X+ = X+^T
        n, q = 4, 2
        A = random_spd(rng, n)
        Wm = random_spd(rng, n)
        X = random_spd(rng, n)
        S = rng.standard_normal((n, q))
        out = step_sym(X, A, WeightSpec.explicit(Wm), S)
        # parametrize symmetric matrices by their upper triangle
        iu = np.triu_indices(n)
        basis = []
        for i, j in zip(*iu):
            B = np.zeros((n, n))
            B[i, j] = B[j, i] = 1.0
            basis.append(B)
        Wi = np.linalg.inv(Wm)
        m = len(basis)
        H = np.array([[np.trace(Wi @ Bi @ Wi @ Bj) for Bj in basis] for Bi in basis])
        g = np.array([np.trace(Wi @ Bi @ Wi @ X) for Bi in basis])
        C = np.array([(S.T @ A @ B).ravel() for B in basis]).T
        K = np.block([[H, C.T], [C, np.zeros((C.shape[0], C.shape[0]))]])
        rhs = np.concatenate([g, S.T.ravel()])
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0][:m]
        ref = sum(c * B for c, B in zip(sol, basis))
        assert_allclose(out, ref, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(2, 8), st.integers(1, 3))
def test_constraints_hold(seed, n, q):
    rng = np.random.default_rng(seed)
    q = min(q, n)
    A = random_nonsingular(rng, n)
    Wm = random_spd(rng, n)
    X = rng.standard_normal((n, n))
    S = rng.standard_normal((n, q))
    W = WeightSpec.explicit(Wm)
    scale = np.linalg.cond(A) * (1 + np.abs(X).max())
    Xr = step_row(X, A, W, S)
    assert np.abs(S.T @ A @ Xr - S.T).max() <= 1e-9 * scale
    Xc = step_col(X, A, W, S)
    assert np.abs(Xc @ A @ S - S).max() <= 1e-9 * scale
    As = random_spd(rng, n)
    Xs = step_sym(0.5 * (X + X.T), As, W, S)
    assert np.abs(S.T @ As @ Xs - S.T).max() <= 1e-9 * scale * np.linalg.cond(As)


@pytest.mark.parametrize("side", ["row", "col"])
def test_error_recurrence(rng, side):
    # X+ - A^{-1} = (I - W Z)(X - A^{-1}) for rows, (X - A^{-1})(I - Z' W) for columns
    n = 5
    A = random_nonsingular(rng, n)
    Wm = random_spd(rng, n)
    X = rng.standard_normal((n, n))
    S = rng.standard_normal((n, 2))
    Ai = np.linalg.inv(A)
    if side == "row":
        Z = A.T @ S @ np.linalg.inv(S.T @ A @ Wm @ A.T @ S) @ S.T @ A
        expected = (np.eye(n) - Wm @ Z) @ (X - Ai)
        got = step_row(X, A, WeightSpec.explicit(Wm), S) - Ai
    else:
        Z = A @ S @ np.linalg.inv(S.T @ A.T @ Wm @ A @ S) @ S.T @ A.T
        expected = (X - Ai) @ (np.eye(n) - Z @ Wm)
        got = step_col(X, A, WeightSpec.explicit(Wm), S) - Ai
    assert_allclose(got, expected, atol=1e-10)


class TestDriver:
    def test_full_family_one_step(self, rng):
        A = random_nonsingular(rng, 6)
        cfg = InverterConfig(A, "row", rule=SketchRule.fixed_family([np.eye(6)]), tol=1e-12, residual_every=1)
        state, term = run_inverter(cfg)
        assert term is Termination.TOL_REACHED
        assert state.k == 1
        assert state.residual <= 1e-12

    def test_unreachable_tolerance(self, A2):
        state, term = run_inverter(InverterConfig(A2, "row", rule=SketchRule.coordinate(2), tol=0.0, max_iters=5))
        assert term is Termination.MAX_ITERS
        assert state.k == 5

    def test_deterministic(self, rng):
        A = random_spd(rng, 8)
        a, _ = run_inverter(InverterConfig(A, "sym", seed=3, max_iters=30, tol=0.0))
        b, _ = run_inverter(InverterConfig(A, "sym", seed=3, max_iters=30, tol=0.0))
        assert np.array_equal(a.X, b.X)

    def test_history_starts_at_one(self, rng):
        state, _ = run_inverter(InverterConfig(random_spd(rng, 6), "row", max_iters=20, residual_every=5))
        assert state.history[0].residual == 1.0
        assert [p.k for p in state.history] == [0, 5, 10, 15, 20] or state.history[-1].residual <= 1e-2

    def test_sym_needs_symmetric(self, rng):
        with pytest.raises(ConfigError):
            InverterConfig(random_nonsingular(rng, 4) + np.triu(np.ones((4, 4)), 1), "sym")

    def test_sym_iterates_stay_symmetric(self, rng):
        A = random_spd(rng, 10)
        state, _ = run_inverter(InverterConfig(A, "sym", W=WeightSpec.inverse_of_a(), max_iters=200, tol=0.0))
        assert np.array_equal(state.X, state.X.T)

    def test_rejects_bad_config(self):
        with pytest.raises(ConfigError):
            InverterConfig(np.eye(2), "nope")
        with pytest.raises(ConfigError):
            InverterConfig(np.eye(2), max_iters=0)


def test_monte_carlo_envelope_running_example():
    # E||X_10 - A^{-1}||_F^2 <= 0.9^10 ||X_0 - A^{-1}||_F^2, checked with 20% slack
    Ai = np.linalg.inv(A2)
    rule = SketchRule.coordinate(2, [0.5, 0.5])
    e0 = weighted_frobenius_norm(np.eye(2) - Ai) ** 2
    errs = []
    for t in range(200):
        rng = make_rng(11, t)
        X = np.eye(2)
        for _ in range(10):
            X = step_row(X, A2, IDENTITY, draw_sketch(rule, rng))
        errs.append(np.sum((X - Ai) ** 2))
    assert np.mean(errs) <= 0.9**10 * e0 * 1.2
