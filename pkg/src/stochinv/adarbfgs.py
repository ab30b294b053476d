"""Adaptive randomized BFGS with factored iterates ``X_k = L_k L_k^T``.

Each step draws ``S = L_k S~`` through the current factor and applies the
BFGS update in factored form::

    R     = (S^T A S)^{-1/2}
    L_k+1 = L_k + S R ((S~^T S~)^{-1/2} S~^T - R^T S^T A L_k)

so ``L_k+1 L_k+1^T`` equals the BFGS update of ``L_k L_k^T`` with sketch
``S``.  For column sketches ``S~ = I[:, C_i]`` the block is chosen with
probability proportional to ``Tr(S_i^T A S_i)``, read off the diagonal of
``L^T A L``, which is maintained in ``O(nq)`` per step.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError
from .flops import counter_or_null
from .linalg import as_array, as_problem, sym_inv_sqrt
from .sketching import SketchRule, draw_sketch

INV_SQRT_FLOOR = 1e-14


@dataclass
class FactoredState:
    """Factor ``L`` of the iterate after ``k`` steps."""

    L: np.ndarray
    k: int = 0
    history: list = field(default_factory=list)


def reconstruct(state):
    """``X = L L^T``."""
    L = state.L if isinstance(state, FactoredState) else np.asarray(state, dtype=float)
    X = L @ L.T
    return 0.5 * (X + X.T)


def one_step_rate_bound(X, A):
    """``1 - lambda_min(A X) / Tr(A X)`` for SPD ``X`` and ``A``."""
    X = np.asarray(X, dtype=float)
    A = as_problem(A)
    A.require_spd("the one-step bound")
    try:
        C = np.linalg.cholesky(0.5 * (X + X.T))
    except np.linalg.LinAlgError as exc:
        raise NumericalError("the one-step bound needs a positive definite X") from exc
    M = C.T @ A.data @ C
    ev = np.linalg.eigvalsh(0.5 * (M + M.T))
    return float(1.0 - ev[0] / ev.sum())


def _inv_sqrt(G):
    G = 0.5 * (G + G.T)
    ev = np.linalg.eigvalsh(G)
    if ev[0] <= INV_SQRT_FLOOR * max(ev[-1], 0.0):
        return None
    return sym_inv_sqrt(G, floor=INV_SQRT_FLOOR)


def factored_update(L, A, sample, counter=None):
    """One factored BFGS step for a drawn adaptive ``sample``.

    Returns ``(L+, T, Vt)`` where ``L+ = L + S R Vt`` and ``T = R S^T A L``;
    ``None`` when a Gram matrix is numerically singular.
    """
    fc = counter_or_null(counter)
    n = L.shape[0]
    S = sample.matrix
    q = S.shape[1]
    if sample.tilde is not None:
        fc.matmul(n, n, q)
    AS = A @ S
    fc.matmul(n, n, q)
    G = S.T @ AS
    fc.matmul(q, n, q)
    R = _inv_sqrt(G)
    fc.small_inverse(q)
    if R is None:
        return None
    T = R @ (AS.T @ L)
    fc.matmul(q, n, n)
    fc.matmul(q, q, n)
    if sample.tilde is None:
        Vt = -T
        Vt[np.arange(q), sample.tilde_columns] += 1.0
    else:
        St = sample.tilde
        H = _inv_sqrt(St.T @ St)
        fc.matmul(q, n, q)
        fc.small_inverse(q)
        if H is None:
            return None
        Vt = H @ St.T - T
        fc.matmul(q, q, n)
    fc.elementwise(q, n)
    SR = S @ R
    fc.matmul(n, q, q)
    Lp = L + SR @ Vt
    fc.matmul(n, q, n)
    fc.elementwise(n, n)
    return Lp, T, Vt


def adarbfgs_step(state, A, rule, rng, counter=None, probabilities=None, sample=None):
    """Advance a :class:`FactoredState` by one adaptive BFGS step.

    ``probabilities`` applies to column rules (default: proportional to
    ``Tr(S_i^T A S_i)``, computed from the current factor).  A fixed
    ``sample`` may be supplied instead of drawing one.
    """
    A = as_array(A)
    if not rule.is_adaptive:
        raise ConfigError("adarbfgs needs an adaptive sketch rule")
    L = state.L
    if sample is None and rule.kind == "adaptive-factor-cols" and probabilities is None:
        probabilities = column_probabilities(L, A, rule)
    for _ in range(100):
        if sample is None:
            s = draw_sketch(rule, rng, probabilities=probabilities, factor=L)
        else:
            s = sample
        out = factored_update(L, A, s, counter)
        if out is not None:
            return FactoredState(out[0], state.k + 1, state.history)
        if sample is not None:
            break
    raise NumericalError("adaptive sketch Gram matrix singular after repeated draws")


def block_traces(d, blocks):
    return np.array([d[np.asarray(b)].sum() for b in blocks])


def column_probabilities(L, A, rule):
    """Block probabilities from ``diag(L^T A L)`` (uniform or explicit when set so)."""
    p = rule.probabilities
    r = rule.num_outcomes
    if isinstance(p, np.ndarray):
        return p
    if p == "uniform":
        return np.full(r, 1.0 / r)
    if p != "convenient":
        raise ConfigError(f"adaptive column sketches support uniform or convenient probabilities, not {p!r}")
    d = np.einsum("ij,ij->j", L, A @ L)
    return _normalize(block_traces(d, rule.blocks))


def _normalize(w):
    w = np.clip(w, 1e-300, None)
    return w / w.sum()


class AdaRBFGSStepper:
    """Driver adapter.  The inverse iterate is only formed on request."""

    refresh_every = 200

    def __init__(self, config, X0):
        P = config.A
        P.require_spd(config.method)
        self.A = P.data
        n = P.n
        try:
            self.L = np.linalg.cholesky(0.5 * (X0 + X0.T))
        except np.linalg.LinAlgError as exc:
            raise ConfigError("adarbfgs needs a positive definite starting matrix") from exc
        rule = config.rule
        if rule is None:
            if config.method == "adarbfgs-cols":
                rule = SketchRule.adaptive_cols(n, config.q)
            else:
                rule = SketchRule.adaptive_gauss(n, config.q)
        expected = "adaptive-factor-cols" if config.method == "adarbfgs-cols" else "adaptive-factor-gauss"
        if rule.kind != expected:
            raise ConfigError(f"{config.method} needs a {expected} rule")
        self.rule = rule
        self.weighted = rule.kind == "adaptive-factor-cols" and rule.probabilities == "convenient"
        self.d = np.einsum("ij,ij->j", self.L, self.A @ self.L) if self.weighted else None
        self.steps = 0
        self.extras = {}

    def _probabilities(self):
        if self.rule.kind != "adaptive-factor-cols":
            return None
        if not self.weighted:
            return column_probabilities(self.L, self.A, self.rule)
        return _normalize(block_traces(self.d, self.rule.blocks))

    def step(self, rng, counter):
        p = self._probabilities()
        for _ in range(100):
            sample = draw_sketch(self.rule, rng, probabilities=p, factor=self.L)
            out = factored_update(self.L, self.A, sample, counter)
            if out is not None:
                break
        else:
            raise NumericalError("adaptive sketch Gram matrix singular after repeated draws")
        self.L, T, Vt = out
        self.steps += 1
        if self.weighted:
            n = self.L.shape[0]
            if self.steps % self.refresh_every == 0:
                self.d = np.einsum("ij,ij->j", self.L, self.A @ self.L)
                counter.matmul(n, n, n)
                counter.elementwise(2 * n, n)
            else:
                # diag((L + U Vt)^T A (L + U Vt)) with U^T A U = I and U^T A L = T
                self.d = self.d + 2.0 * np.einsum("ij,ij->j", T, Vt) + np.einsum("ij,ij->j", Vt, Vt)
                counter.elementwise(4 * T.shape[0], n)

    def checkpoint(self):
        return self.L

    def materialize(self, L):
        return reconstruct(L)

    def is_finite(self):
        return bool(np.all(np.isfinite(self.L)))

    def residual(self, A):
        AL = A @ self.L
        R = -(AL @ self.L.T)
        R[np.diag_indices_from(R)] += 1.0
        return float(np.linalg.norm(R))

    def inverse_iterate(self):
        return reconstruct(self.L)

    def snapshot(self):
        return reconstruct(self.L)

