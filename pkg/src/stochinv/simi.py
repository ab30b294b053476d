"""Generic sketch-and-project steps for matrix inversion.

Three projections of the current iterate ``X`` in the ``F(W^{-1})`` norm:

* row variant onto ``{X : S^T A X = S^T}``,
* column variant onto ``{X : X A S = S}``,
* symmetric variant onto ``{X = X^T : S^T A X = S^T}`` (``A`` symmetric).

``W`` may be a :class:`WeightSpec` or an already materialized dense weight.
All low-rank updates cost ``O(n^2 q)``; the dense reference forms of the
symmetric step exist for cross-checking only.
"""

from dataclasses import dataclass

import numpy as np

from .errors import RankDeficientSketch
from .flops import counter_or_null
from .linalg import WeightSpec, as_array, sym_pinv
from .sketching import SketchSample, dense_sample

GRAM_TOL = 1e-12


def as_sample(S):
    return S if isinstance(S, SketchSample) else dense_sample(S)


def weight_dense(W, A):
    """Dense ``W`` or ``None`` for the identity."""
    if W is None:
        return None
    if isinstance(W, WeightSpec):
        return None if W.is_identity else W.matrix_for(A)
    return np.asarray(W, dtype=float)


def gram_inverse(G, counter=None, what="sketched Gram matrix"):
    inv, dropped = sym_pinv(G, GRAM_TOL)
    counter_or_null(counter).small_inverse(G.shape[0])
    if dropped:
        raise RankDeficientSketch(f"{what} is rank deficient ({dropped} dropped)", dropped)
    return inv


def _left(S, M, fc):
    if S.columns is None:
        fc.matmul(S.q, M.shape[0], M.shape[1])
    return S.left(M)


def _right(S, M, fc):
    if S.columns is None:
        fc.matmul(M.shape[0], M.shape[1], S.q)
    return S.right(M)


def _row_update(X, A, S, WAtS, SA, fc):
    """``X + WA^T S (S^T A W A^T S)^{-1} S^T (I - A X)`` given ``SA = S^T A``."""
    n, q = X.shape[0], S.q
    G = SA @ WAtS
    fc.matmul(q, n, q)
    Ginv = gram_inverse(G, fc)
    SR = -(SA @ X)
    fc.matmul(q, n, n)
    if S.columns is None:
        SR += S.matrix.T
    else:
        SR[np.arange(q), S.columns] += 1.0
    fc.elementwise(q, n)
    Y = Ginv @ SR
    fc.matmul(q, q, n)
    out = X + WAtS @ Y
    fc.matmul(n, q, n)
    fc.elementwise(n, n)
    return out


def step_row(X, A, W, S, counter=None):
    """Row sketch-and-project step; ``S^T A X^+ = S^T`` holds afterwards."""
    A = as_array(A)
    S = as_sample(S)
    fc = counter_or_null(counter)
    n = A.shape[0]
    SA = _left(S, A, fc)
    Wd = weight_dense(W, A)
    if Wd is None:
        WAtS = SA.T
    else:
        WAtS = Wd @ SA.T
        fc.matmul(n, n, S.q)
    return _row_update(np.asarray(X, dtype=float), A, S, WAtS, SA, fc)


def step_col(X, A, W, S, counter=None):
    """Column sketch-and-project step; ``X^+ A S = S`` holds afterwards.

    ``X^+ = X + (I - X A) S (S^T A^T W A S)^{-1} S^T A^T W``.
    """
    A = as_array(A)
    X = np.asarray(X, dtype=float)
    S = as_sample(S)
    fc = counter_or_null(counter)
    n, q = A.shape[0], S.q
    AS = _right(S, A, fc)
    Wd = weight_dense(W, A)
    if Wd is None:
        WAS = AS
    else:
        WAS = Wd @ AS
        fc.matmul(n, n, q)
    return _col_update(X, S, AS, WAS, fc)


def _col_update(X, S, AS, WAS, fc):
    n, q = X.shape[0], S.q
    G = AS.T @ WAS
    fc.matmul(q, n, q)
    Ginv = gram_inverse(G, fc)
    T = -(X @ AS)
    fc.matmul(n, n, q)
    if S.columns is None:
        T += S.matrix
    else:
        T[S.columns, np.arange(q)] += 1.0
    fc.elementwise(n, q)
    Y = T @ Ginv
    fc.matmul(n, q, q)
    out = X + Y @ WAS.T
    fc.matmul(n, q, n)
    fc.elementwise(n, n)
    return out


def _sym_update(X, S, AS, WAS, fc):
    """Low-rank form of the symmetric projection.

    With ``H = (S^T A W A S)^{-1}``, ``U = W A S H`` and ``T = X A S - S``::

        X^+ = X - T U^T - U T^T + U (T^T A S) U^T
    """
    n, q = X.shape[0], S.q
    G = AS.T @ WAS
    fc.matmul(q, n, q)
    H = gram_inverse(G, fc)
    T = X @ AS
    fc.matmul(n, n, q)
    if S.columns is None:
        T -= S.matrix
    else:
        T[S.columns, np.arange(q)] -= 1.0
    fc.elementwise(n, q)
    U = WAS @ H
    fc.matmul(n, q, q)
    C = T.T @ AS
    fc.matmul(q, n, q)
    C = 0.5 * (C + C.T)
    # X+ = X + M + M^T with M = (U C / 2 - T) U^T, symmetric by construction
    K = 0.5 * (U @ C) - T
    fc.matmul(n, q, q)
    fc.elementwise(n, q)
    M = K @ U.T
    fc.matmul(n, q, n)
    out = X + (M + M.T)
    fc.elementwise(2 * n, n)
    return out


def step_sym(X, A, W, S, counter=None):
    """Symmetric sketch-and-project step for symmetric ``A`` and ``X``."""
    A = as_array(A)
    X = np.asarray(X, dtype=float)
    S = as_sample(S)
    fc = counter_or_null(counter)
    n = A.shape[0]
    AS = _right(S, A, fc)
    Wd = weight_dense(W, A)
    if Wd is None:
        WAS = AS
    else:
        WAS = Wd @ AS
        fc.matmul(n, n, S.q)
    return _sym_update(X, S, AS, WAS, fc)


@dataclass
class SymStepWorkspace:
    """Dense quantities of the literal symmetric algorithm."""

    Lambda: np.ndarray
    Theta: np.ndarray
    M: np.ndarray


def sym_workspace(X, A, W, S):
    A = as_array(A)
    S = as_sample(S).matrix
    Wd = weight_dense(W, A)
    Wd = np.eye(A.shape[0]) if Wd is None else Wd
    Lam = S @ gram_inverse(S.T @ A @ Wd @ A @ S) @ S.T
    return SymStepWorkspace(Lam, Lam @ A @ Wd, np.asarray(X) @ A - np.eye(A.shape[0]))


def step_sym_dense(X, A, W, S):
    """Reference: ``X - M Theta - (M Theta)^T + Theta^T (A X A - A) Theta``."""
    A = as_array(A)
    ws = sym_workspace(X, A, W, S)
    MT = ws.M @ ws.Theta
    return X - MT - MT.T + ws.Theta.T @ (A @ X @ A - A) @ ws.Theta


def step_sym_closed_form(X, A, W, S):
    """Reference closed form with ``Lam = (S^T A W A S)^{-1}``::

        X - (XA - I) S Lam S^T A W + W A S Lam S^T (A X - I)(A S Lam S^T A W - I)
    """
    A = as_array(A)
    S = as_sample(S).matrix
    n = A.shape[0]
    Wd = weight_dense(W, A)
    Wd = np.eye(n) if Wd is None else Wd
    I = np.eye(n)
    P = S @ gram_inverse(S.T @ A @ Wd @ A @ S) @ S.T
    return X - (X @ A - I) @ P @ A @ Wd + Wd @ A @ P @ (A @ X - I) @ (A @ P @ A @ Wd - I)
