"""Convergence-rate diagnostics.

Everything here is dense ``O(n^3)`` work meant for desk-scale matrices: the
random projector ``Z``, its expectation for discrete samplings, the rate

    rho = 1 - lambda_min(W^{1/2} E[Z] W^{1/2}),

scaled condition numbers, and the trace bound ``gamma(p) >= rho`` together
with the probabilities that minimize it.

The column side is handled by replacing ``A`` with ``A^T``.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, NumericalError
from .linalg import as_array, eigh_sym, sym_pinv
from .sketching import DiscreteSampling, _dual_blocks, as_sample_matrix

SANDWICH_TOL = 1e-10


def _oriented(A, side):
    A = as_array(A)
    if side == "row":
        return A
    if side == "col":
        return A.T
    raise ConfigError(f"side must be 'row' or 'col', got {side!r}")


def _weight(W, A):
    """Dense ``W`` for the oriented matrix, or ``None`` for the identity."""
    return None if W.is_identity else W.matrix_for(A)


def _conjugate(M, Wd, eig_method="lapack"):
    """``W^{1/2} M W^{1/2}`` (``M`` itself when ``Wd`` is ``None``)."""
    if Wd is None:
        return 0.5 * (M + M.T)
    root = eigh_sym(Wd, eig_method).apply(lambda v: np.sqrt(np.clip(v, 0.0, None)))
    C = root @ M @ root
    return 0.5 * (C + C.T)


def _weight_roots(Wd):
    """``(W^{1/2}, W^{-1/2})``, both ``None`` for the identity."""
    if Wd is None:
        return None, None
    eig = eigh_sym(Wd)
    return eig.apply(np.sqrt), eig.apply(lambda v: 1.0 / np.sqrt(v))


def _sketch_qr(BtS, root):
    """QR of ``W^{1/2} B^T S``; rank deficiency is an error."""
    M = BtS if root is None else root @ BtS
    Q, R = np.linalg.qr(M)
    d = np.abs(np.diag(R))
    if d.size and d.min() <= 1e-12 * max(d.max(), np.finfo(float).tiny):
        raise NumericalError("sketched Gram matrix is rank deficient")
    return Q, R


def projector_z(A, W, S, side="row"):
    """``Z = A^T S (S^T A W A^T S)^{-1} S^T A`` (``A -> A^T`` on the column side).

    ``W^{1/2} Z W^{1/2}`` is an orthogonal projector of rank ``q``; it is
    formed as ``Q Q^T`` from a QR factorization of ``W^{1/2} A^T S``, which
    avoids squaring the condition number of the sketch.
    """
    B = _oriented(A, side)
    S = as_sample_matrix(S)
    root, inv_root = _weight_roots(_weight(W, B))
    Q, _ = _sketch_qr(B.T @ S, root)
    Z = Q @ Q.T if inv_root is None else inv_root @ Q @ Q.T @ inv_root
    return 0.5 * (Z + Z.T)


def brute_force_expected_z(A, W, sampling, side="row"):
    """``sum_i p_i Z_i`` over all outcomes."""
    return sum(p * projector_z(A, W, S, side) for S, p in zip(sampling.members, sampling.probabilities))


def expected_z_discrete(A, W, sampling, side="row", check=True):
    """Closed form ``E[Z] = A^T S D^2 S^T A`` for a complete discrete sampling.

    ``D = Diag(sqrt(p_i) R_i^{-1})`` with ``R_i^T R_i = S_i^T A W A^T S_i`` and
    ``S`` the stacked family, so ``D D^T`` is the usual block diagonal of
    scaled inverse Gram matrices.  With ``check`` the result is compared against the brute-force
    outcome average.
    """
    if not isinstance(sampling, DiscreteSampling):
        raise ConfigError("expected a DiscreteSampling")
    if not sampling.is_complete():
        raise NumericalError(
            "sampling is not complete; E[Z] is positive definite if and only if the stacked "
            "sketch has full row rank"
        )
    B = _oriented(A, side)
    root, _ = _weight_roots(_weight(W, B))
    blocks, cond = [], 1.0
    for S, p in zip(sampling.members, sampling.probabilities):
        _, R = _sketch_qr(B.T @ S, root)
        # R^T R = S^T A W A^T S, so D_i D_i^T = p_i (S_i^T A W A^T S_i)^{-1} with D_i = sqrt(p_i) R^{-1}
        blocks.append(math.sqrt(p) * np.linalg.inv(R))
        cond = max(cond, np.linalg.cond(R))
    D = _block_diag(blocks)
    F = B.T @ sampling.stacked @ D
    EZ = F @ F.T
    EZ = 0.5 * (EZ + EZ.T)
    if check:
        brute = brute_force_expected_z(A, W, sampling, side)
        scale = max(1.0, np.linalg.norm(brute))
        # both forms carry errors of order eps * cond(R_i)
        if np.linalg.norm(EZ - brute) > max(1e-10, 1e-13 * cond) * scale:
            raise NumericalError("closed-form E[Z] disagrees with the outcome average")
    return EZ


def _block_diag(blocks):
    sizes = [b.shape[0] for b in blocks]
    out = np.zeros((sum(sizes), sum(sizes)))
    k = 0
    for b, s in zip(blocks, sizes):
        out[k : k + s, k : k + s] = b
        k += s
    return out


@dataclass
class RateReport:
    """Rate of a (matrix, weight, discrete sampling) triple.

    ``rho`` always lies in ``[lower_bound, 1]``; ``gamma_bound`` and
    ``kappa_2F`` are filled in when they apply.
    """

    expected_z: np.ndarray
    rho: float
    lower_bound: float
    conjugated_spectrum: np.ndarray = field(repr=False)
    kappa_2F: Optional[float] = None
    gamma_bound: Optional[float] = None
    sampling_descriptor: dict = field(default_factory=dict)

    def check_sandwich(self, tol=SANDWICH_TOL):
        if not (self.lower_bound - tol <= self.rho <= 1.0 + tol):
            raise NumericalError(f"rate {self.rho} outside [{self.lower_bound}, 1]")
        return True


def rho(A, W, sampling, side="row", eig_method="lapack", with_gamma=True):
    """Rate ``rho = 1 - lambda_min(W^{1/2} E[Z] W^{1/2})`` as a :class:`RateReport`."""
    B = _oriented(A, side)
    n = B.shape[0]
    EZ = expected_z_discrete(A, W, sampling, side)
    Wd = _weight(W, B)
    spectrum = eigh_sym(_conjugate(EZ, Wd, eig_method), eig_method).values
    if spectrum[0] <= 0:
        raise NumericalError("E[Z] is not positive definite")
    r = float(1.0 - spectrum[0])
    lower = 1.0 - sampling.expected_q / n
    stacked = sampling.stacked
    M = B.T @ stacked
    if Wd is not None:
        M = eigh_sym(Wd).apply(lambda v: np.sqrt(np.clip(v, 0.0, None))) @ M
    report = RateReport(
        expected_z=EZ,
        rho=max(r, 0.0) if abs(r) < SANDWICH_TOL else r,
        lower_bound=lower,
        conjugated_spectrum=spectrum,
        kappa_2F=kappa_2F(M),
        sampling_descriptor={
            "n": n,
            "side": side,
            "weight": W.kind,
            "outcomes": sampling.r,
            "expected_q": sampling.expected_q,
        },
    )
    if with_gamma:
        report.gamma_bound = gamma_upper_bound(A, W, sampling, side=side, EZ=EZ)
    report.check_sandwich()
    if report.gamma_bound is not None and report.gamma_bound < report.rho - SANDWICH_TOL:
        raise NumericalError(f"gamma bound {report.gamma_bound} below rate {report.rho}")
    return report


def kappa_2F(M):
    """Scaled condition number ``sqrt(Tr(M M^T) / lambda_min(M M^T)) >= sqrt(n)``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    G = M @ M.T
    lam = np.linalg.eigvalsh(0.5 * (G + G.T))[0]
    if lam <= 1e-14 * max(np.trace(G), 1e-300):
        raise NumericalError("kappa_2F needs a matrix of full row rank")
    return float(math.sqrt(np.trace(G) / lam))


def convenient_rate(A, W, members, side="row"):
    """``1 - 1/kappa_2F^2(W^{1/2} A^T S)`` for the convenient probabilities.

    Equal to ``rho`` when every outcome has a single column, otherwise an
    upper bound on it.
    """
    B = _oriented(A, side)
    M = B.T @ np.hstack([as_sample_matrix(S) for S in members])
    Wd = _weight(W, B)
    if Wd is not None:
        M = eigh_sym(Wd).apply(lambda v: np.sqrt(np.clip(v, 0.0, None))) @ M
    return 1.0 - 1.0 / kappa_2F(M) ** 2


def fracsum_optimal_p(a):
    """Minimize ``sum_i a_i / p_i`` over the simplex.

    Returns ``(p, value)`` with ``p_i = sqrt(a_i) / sum_j sqrt(a_j)`` and
    ``value = (sum_i sqrt(a_i))^2``.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if a.ndim != 1 or a.size == 0 or np.any(~(a > 0)):
        raise ConfigError("fracsum weights must be positive")
    roots = np.sqrt(a)
    total = roots.sum()
    return roots / total, float(total**2)


def optimized_trace_weights(A, W, sampling, side="row"):
    """``a_i = ||W^{-1/2} A^{-1} Sbar_i S_i^T A W^{1/2}||_F^2`` for the oriented ``A``."""
    B = _oriented(A, side)
    dual = _dual_blocks(sampling.members)
    Binv = np.linalg.inv(B)
    Wd = _weight(W, B)
    if Wd is None:
        left, right = Binv, B
    else:
        eig = eigh_sym(Wd)
        left = eig.apply(lambda v: 1.0 / np.sqrt(v)) @ Binv
        right = B @ eig.apply(np.sqrt)
    return np.array([np.linalg.norm(left @ Sb @ (S.T @ right)) ** 2 for S, Sb in zip(sampling.members, dual)])


def gamma_upper_bound(A, W, sampling, p=None, side="row", path="auto", EZ=None):
    """Trace bound ``gamma(p) = 1 - 1/Tr(W^{-1/2} E[Z_p]^{-1} W^{-1/2}) >= rho``.

    ``path`` is ``"direct"`` (invert ``E[Z]``), ``"expansion"`` (sum of
    ``a_i / p_i``, needs a square stacked family) or ``"auto"``, which uses
    both when possible and requires agreement to 1e-8.
    """
    if p is not None:
        sampling = DiscreteSampling(sampling.members, p)
    p = sampling.probabilities
    B = _oriented(A, side)
    values = {}
    square = sampling.stacked.shape[1] == B.shape[0]
    if path in ("direct", "auto"):
        if EZ is None:
            EZ = expected_z_discrete(A, W, sampling, side)
        inv, dropped = sym_pinv(EZ, 1e-14)
        if dropped:
            raise NumericalError("E[Z] is singular; the trace bound does not exist")
        Wd = _weight(W, B)
        trace = np.trace(inv) if Wd is None else np.trace(np.linalg.solve(Wd, inv))
        values["direct"] = 1.0 - 1.0 / trace
    if path == "expansion" or (path == "auto" and square):
        a = optimized_trace_weights(A, W, sampling, side)
        values["expansion"] = 1.0 - 1.0 / float(np.sum(a / p))
    if not values:
        raise ConfigError(f"unknown path {path!r}")
    if len(values) == 2 and abs(values["direct"] - values["expansion"]) > 1e-8:
        raise NumericalError(f"gamma paths disagree: {values}")
    return float(values.get("direct", values.get("expansion")))


def optimal_gamma(A, W, sampling, side="row"):
    """Probabilities minimizing ``gamma`` and the minimum, ``(p, gamma)``."""
    a = optimized_trace_weights(A, W, sampling, side)
    p, value = fracsum_optimal_p(a)
    return p, 1.0 - 1.0 / value


def iteration_complexity(eps, rho, halved=False):
    """Iterations ``ceil(log(1/eps) / (1 - rho))`` (times one half when ``halved``)."""
    if not 0 < eps < 1:
        raise ConfigError("eps must lie in (0, 1)")
    if not 0 <= rho < 1:
        raise ConfigError("rho must lie in [0, 1)")
    k = math.log(1.0 / eps) / (1.0 - rho)
    return math.ceil(0.5 * k if halved else k)


def error_decomposition(samples, target):
    """Bias/variance split of a sample of matrices around ``target``.

    Returns ``(bias, mse, variance)`` with ``bias = ||mean - target||_F^2``,
    ``mse = mean ||X - target||_F^2`` and ``variance = mean ||X - mean||_F^2``;
    ``bias = mse - variance`` holds exactly for sample averages.
    """
    X = np.asarray(samples, dtype=float)
    T = np.asarray(target, dtype=float)
    mean = X.mean(axis=0)
    bias = float(np.sum((mean - T) ** 2))
    mse = float(np.mean(np.sum((X - T) ** 2, axis=(1, 2))))
    variance = float(np.mean(np.sum((X - mean) ** 2, axis=(1, 2))))
    return bias, mse, variance
