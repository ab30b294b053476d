"""Named quasi-Newton style updates.

Each kernel is a closed-form specialization of a generic step in
:mod:`stochinv.simi` for a particular weight and inverse equation.  The
kernels touch ``A`` only through products with the sketch and never form
the weight matrix.

``good_broyden_step`` and ``dfp_step`` iterate towards ``A`` itself and keep
the inverse of the iterate up to date with Woodbury downdates.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegeneratePivot
from .flops import counter_or_null
from .linalg import IDENTITY, WeightSpec, as_array, as_problem
from .simi import _col_update, _right, _row_update, _sym_update, as_sample, gram_inverse, step_row
from .sketching import dense_sample

PIVOT_TOL = 1e-13


def kaczmarz_step(X, A, S, counter=None):
    """Simultaneous randomized Kaczmarz: ``X + A^T S (S^T A A^T S)^{-1} S^T (I - A X)``."""
    return step_row(X, A, IDENTITY, S, counter)


def bad_broyden_step(X, A, S, counter=None):
    """Block bad Broyden: ``X + (I - X A) S (S^T A^T A S)^{-1} S^T A^T``.

    With a single column the rank-one form ``X + (d - X g) g^T / |g|^2`` is
    used, where ``g = A s`` and ``d = s``.
    """
    A = as_array(A)
    X = np.asarray(X, dtype=float)
    S = as_sample(S)
    fc = counter_or_null(counter)
    AS = _right(S, A, fc)
    if S.q > 1:
        return _col_update(X, S, AS, AS, fc)
    n = A.shape[0]
    g = AS[:, 0]
    gg = g @ g
    fc.matmul(1, n, 1)
    if gg <= 0.0:
        gram_inverse(np.array([[gg]]), fc)
    r = S.matrix[:, 0] - X @ g
    fc.matmul(n, n, 1)
    fc.elementwise(n)
    fc.elementwise(n)
    fc.matmul(n, 1, n)
    fc.elementwise(n, n)
    return X + np.outer(r / gg, g)


def psb_step(X, A, S, counter=None):
    """Randomized block Powell-symmetric-Broyden: symmetric step with ``W = I``."""
    A = as_array(A)
    _require_symmetric(A, X, "psb")
    S = as_sample(S)
    fc = counter_or_null(counter)
    AS = _right(S, A, fc)
    return _sym_update(np.asarray(X, dtype=float), S, AS, AS, fc)


def good_broyden_step(X, Xinv, A, i, counter=None):
    """Good Broyden column replacement ``X + (A - X) e_i e_i^T`` with its inverse.

    Returns ``(X+, Xinv+)``.  The Woodbury denominator is ``e_i^T Xinv A e_i``;
    a (relatively) zero value raises :class:`DegeneratePivot`.
    """
    A = as_array(A)
    X = np.asarray(X, dtype=float)
    Xinv = np.asarray(Xinv, dtype=float)
    fc = counter_or_null(counter)
    n = A.shape[0]
    i = int(i)
    u = A[:, i] - X[:, i]
    fc.elementwise(n)
    Xinv_u = Xinv @ u
    fc.matmul(n, n, 1)
    denom = 1.0 + Xinv_u[i]
    scale = np.linalg.norm(Xinv[i]) * np.linalg.norm(A[:, i])
    if not np.isfinite(denom) or abs(denom) <= PIVOT_TOL * max(scale, 1.0):
        raise DegeneratePivot(f"degenerate pivot at index {i} (denominator {denom:.3e})")
    Xp = X.copy()
    Xp[:, i] = A[:, i]
    Xinv_p = Xinv - np.outer(Xinv_u / denom, Xinv[i])
    fc.elementwise(n)
    fc.matmul(n, 1, n)
    fc.elementwise(n, n)
    return Xp, Xinv_p


def aip_step(X, A, S, counter=None):
    """Approximate inverse preconditioning update ``X + S (S^T A S)^{-1} S^T (I - A X)``."""
    A = as_array(A)
    S = as_sample(S)
    fc = counter_or_null(counter)
    SA = S.left(A)
    if S.columns is None:
        fc.matmul(S.q, A.shape[0], A.shape[1])
    return _row_update(np.asarray(X, dtype=float), A, S, S.matrix, SA, fc)


def dfp_step(X, Xinv, A, S, counter=None):
    """Randomized block DFP towards ``A``.

    ``X+ = A O A + (I - A O) X (I - O A)`` with ``O = S (S^T A S)^{-1} S^T``,
    so that ``X+ S = A S``.  The inverse is updated as::

        Xinv+ = Xinv + S (S^T A S)^{-1} S^T - Xinv A S (S^T A Xinv A S)^{-1} S^T A Xinv

    ``Xinv`` may be ``None``, in which case only ``X+`` is returned (paired
    with ``None``).
    """
    A = as_array(A)
    X = np.asarray(X, dtype=float)
    S = as_sample(S)
    fc = counter_or_null(counter)
    n, q = A.shape[0], S.q
    AS = _right(S, A, fc)
    # symmetric projection for the equation X A^{-1} = I sketched by A S
    Xp = _sym_update(X, dense_sample(AS), S.matrix, AS, fc)
    if Xinv is None:
        return Xp, None
    Xinv = np.asarray(Xinv, dtype=float)
    G = S.left(AS)
    G = 0.5 * (G + G.T)
    HAS = Xinv @ AS
    fc.matmul(n, n, q)
    K = AS.T @ HAS
    fc.matmul(q, n, q)
    K = 0.5 * (K + K.T)
    Ginv = gram_inverse(G, fc)
    Kinv = gram_inverse(K, fc, "sketched inverse iterate")
    P = S.matrix @ Ginv
    Q = HAS @ Kinv
    fc.matmul(n, q, q)
    fc.matmul(n, q, q)
    Hp = Xinv + P @ S.matrix.T - Q @ HAS.T
    fc.matmul(n, q, n)
    fc.matmul(n, q, n)
    fc.elementwise(2 * n, n)
    return Xp, 0.5 * (Hp + Hp.T)


def bfgs_step(X, A, S, counter=None):
    """Randomized block BFGS::

        X+ = O + (I - O A) X (I - A O),   O = S (S^T A S)^{-1} S^T

    Symmetric step with ``W = A^{-1}``; preserves positive definiteness.
    """
    A = as_array(A)
    S = as_sample(S)
    fc = counter_or_null(counter)
    AS = _right(S, A, fc)
    return _sym_update(np.asarray(X, dtype=float), S, AS, S.matrix, fc)


def column_update_step(X, A, V, symmetric=False, counter=None):
    """Column update with sketch ``S = A V`` and ``W = (A^T A)^{-1}``.

    Nonsymmetric: ``X + V (V^T A^T A V)^{-1} V^T (A^T - A^T A X)``.
    Symmetric (``A`` and ``X`` symmetric), with ``G = (V^T A^2 V)^{-1}``::

        X + V G V^T A (A X - I)(A^2 V G V^T - I) - (X A - I) A V G V^T
    """
    A = as_array(A)
    X = np.asarray(X, dtype=float)
    V = as_sample(V)
    fc = counter_or_null(counter)
    n, q = A.shape[0], V.q
    AV = _right(V, A, fc)
    S = dense_sample(AV)
    if symmetric:
        _require_symmetric(A, X, "symmetric column update")
        AAV = A @ AV
        fc.matmul(n, n, q)
        return _sym_update(X, S, AAV, V.matrix, fc)
    SA = AV.T @ A
    fc.matmul(q, n, n)
    return _row_update(X, A, S, V.matrix, SA, fc)


def _require_symmetric(A, X, what):
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ConfigError(f"{what} needs a symmetric matrix")
    X = np.asarray(X)
    if not np.allclose(X, X.T, rtol=0, atol=1e-10 * max(1.0, np.abs(X).max())):
        raise ConfigError(f"{what} needs a symmetric iterate")


EQUATIONS = ("AX=I", "XA=I", "XA^-1=I")
REQUIREMENTS = ("general", "symmetric", "spd")


@dataclass(frozen=True)
class NamedUpdate:
    """One named update with the weight and equation it specializes.

    ``weight`` is ``None`` when the weight is ``A`` itself (resolved by
    :meth:`weight_for`).  ``symmetric_iterates`` marks updates that impose
    ``X = X^T``.  ``tracks_inverse`` marks updates whose iterates approach
    ``A`` and that also carry the inverse iterate.
    """

    name: str
    weight: object
    equation: str
    requires: str
    symmetric_iterates: bool = False
    tracks_inverse: bool = False
    premultiply_by_a: bool = False

    def weight_for(self, A):
        return WeightSpec.explicit(as_array(A)) if self.weight is None else self.weight

    def check(self, A):
        """Reject a matrix that violates the update's requirement."""
        P = as_problem(A)
        if self.requires == "spd":
            P.require_spd(self.name)
        elif self.requires == "symmetric":
            P.require_symmetric(self.name)
        return P


NAMED_UPDATES = {
    "kaczmarz": NamedUpdate("kaczmarz", IDENTITY, "AX=I", "general"),
    "bad-broyden": NamedUpdate("bad-broyden", IDENTITY, "XA=I", "general"),
    "psb": NamedUpdate("psb", IDENTITY, "AX=I", "symmetric", symmetric_iterates=True),
    "good-broyden": NamedUpdate("good-broyden", IDENTITY, "XA^-1=I", "general", tracks_inverse=True),
    "aip": NamedUpdate("aip", WeightSpec.inverse_of_a(), "AX=I", "spd"),
    "dfp": NamedUpdate("dfp", None, "XA^-1=I", "spd", symmetric_iterates=True, tracks_inverse=True),
    "bfgs": NamedUpdate("bfgs", WeightSpec.inverse_of_a(), "AX=I", "spd", symmetric_iterates=True),
    "column": NamedUpdate("column", WeightSpec.gram_left(), "AX=I", "general", premultiply_by_a=True),
    "column-sym": NamedUpdate("column-sym", WeightSpec.gram_left(), "AX=I", "symmetric",
                              symmetric_iterates=True, premultiply_by_a=True),
}


def named_update(name):
    try:
        return NAMED_UPDATES[name]
    except KeyError:
        raise ConfigError(f"unknown update {name!r}; choose from {sorted(NAMED_UPDATES)}") from None
