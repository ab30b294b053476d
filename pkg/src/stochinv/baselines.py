"""Classical approximate-inverse iterations used as benchmarks.

Newton-Schulz ``X+ = 2X - X A X`` converges quadratically once
``rho(I - X_0 A) < 1`` and diverges otherwise.  The global self-conditioned
minimal residual method (MR) takes the line-search step along ``X R`` with
``R = I - A X`` that minimizes ``||I - A X||_F``.
"""

import logging

import numpy as np

from .driver import Stepper
from .errors import ConfigError
from .flops import counter_or_null
from .linalg import as_array, spectral_norm_estimate

log = logging.getLogger(__name__)


def newton_schulz_step(X, A, counter=None):
    """``2X - X A X``."""
    A = as_array(A)
    X = np.asarray(X, dtype=float)
    fc = counter_or_null(counter)
    n = A.shape[0]
    XA = X @ A
    XAX = XA @ X
    fc.matmul(n, n, n)
    fc.matmul(n, n, n)
    fc.elementwise(2 * n, n)
    return 2.0 * X - XAX


def newton_schulz_init(A, seed=0, iters=100):
    """``0.99 A^T / s^2`` with ``s`` a power-iteration estimate of ``||A||_2``."""
    A = as_array(A)
    s = spectral_norm_estimate(A, iters=iters, seed=seed)
    if s == 0.0:
        raise ConfigError("cannot initialize Newton-Schulz for a zero matrix")
    return 0.99 * A.T / s**2


def residual_matrix(A, X):
    R = -(A @ X)
    R[np.diag_indices_from(R)] += 1.0
    return R


def mr_step(X, A, R=None, counter=None):
    """Minimal residual step; returns ``(X+, R+, alpha)``.

    ``alpha = Tr(R^T A X R) / ||A X R||_F^2``.  ``R`` is the cached residual
    ``I - A X`` (recomputed when ``None``).  A zero denominator means
    ``A X R = 0``: the step is skipped and ``alpha`` is 0.
    """
    A = as_array(A)
    X = np.asarray(X, dtype=float)
    fc = counter_or_null(counter)
    n = A.shape[0]
    if R is None:
        R = residual_matrix(A, X)
        fc.matmul(n, n, n)
        fc.elementwise(n)
    D = X @ R
    AD = A @ D
    fc.matmul(n, n, n)
    fc.matmul(n, n, n)
    den = float(np.vdot(AD, AD))
    num = float(np.vdot(R, AD))
    fc.elementwise(4 * n, n)
    if not den > 0.0:
        return X, R, 0.0
    alpha = num / den
    fc.elementwise(4 * n, n)
    return X + alpha * D, R - alpha * AD, alpha


def mr_init(A):
    """Projected identity ``(Tr(A) / Tr(A A^T)) I``."""
    A = as_array(A)
    den = float(np.vdot(A, A))
    if den == 0.0:
        raise ConfigError("cannot initialize MR for a zero matrix")
    return (np.trace(A) / den) * np.eye(A.shape[0])


class NewtonSchulzStepper(Stepper):
    name = "newton-schulz"

    def step(self, rng, counter):
        self.X = newton_schulz_step(self.X, self.A, counter)


class MRStepper(Stepper):
    """MR with the residual cached between steps and checked on full recomputes."""

    name = "mr"
    consistency_tol = 1e-8

    def __init__(self, A, X0):
        super().__init__(A, X0)
        self.R = None
        self.extras["stagnant_steps"] = 0

    def step(self, rng, counter):
        X, self.R, alpha = mr_step(self.X, self.A, self.R, counter)
        if alpha == 0.0:
            self.extras["stagnant_steps"] += 1
        self.X = X

    def residual(self, A):
        R = residual_matrix(A, self.X)
        if self.R is not None:
            drift = float(np.max(np.abs(R - self.R)))
            self.extras["residual_drift"] = max(self.extras.get("residual_drift", 0.0), drift)
            if drift > self.consistency_tol * max(1.0, float(np.max(np.abs(R)))):
                log.debug("MR cached residual drifted by %.3e; resetting", drift)
            self.R = R
        return float(np.linalg.norm(R))
