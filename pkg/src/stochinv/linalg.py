"""Dense matrix container and the exact numerical primitives used everywhere else.

Weighted norms follow the convention

    ||X||_{F(W^{-1})}^2 = Tr(X^T W^{-1} X W^{-1}) = ||W^{-1/2} X W^{-1/2}||_F^2,
    ||X||_{W^{-1}} = ||W^{-1/2} X W^{-1/2}||_2.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy import linalg as sla

from .errors import ConfigError, NotSPDError

SYMMETRY_FLAGS = ("general", "symmetric", "spd")


@dataclass(eq=False)
class ProblemMatrix:
    """A dense square matrix to invert.

    With ``symmetry`` set to ``"symmetric"`` or ``"spd"`` the data is
    replaced by ``(M + M^T)/2`` and the size of that correction (max abs
    entry) is kept in ``symmetrization_correction``.
    """

    data: np.ndarray
    symmetry: str = "general"
    symmetrization_correction: float = field(default=0.0, init=False)

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim == 0:
            data = data.reshape(1, 1)
        if data.ndim != 2 or data.shape[0] != data.shape[1] or data.shape[0] < 1:
            raise ConfigError(f"expected a non-empty square matrix, got shape {data.shape}")
        if self.symmetry not in SYMMETRY_FLAGS:
            raise ConfigError(f"unknown symmetry flag {self.symmetry!r}")
        if self.symmetry != "general":
            sym = 0.5 * (data + data.T)
            self.symmetrization_correction = float(np.max(np.abs(sym - data)))
            data = sym
        self.data = data
        self._lambda_min = None

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def is_symmetric(self):
        return self.symmetry != "general"

    def lambda_min(self):
        """Smallest eigenvalue of the (symmetric) data, cached."""
        if not self.is_symmetric:
            raise ConfigError("lambda_min is only defined for symmetric matrices")
        if self._lambda_min is None:
            self._lambda_min = float(np.linalg.eigvalsh(self.data)[0])
        return self._lambda_min

    def is_spd(self):
        return self.is_symmetric and self.lambda_min() > 0

    def require_spd(self, what="this method"):
        if not self.is_spd():
            raise NotSPDError(f"{what} requires a symmetric positive definite matrix")

    def require_symmetric(self, what="this method"):
        if not self.is_symmetric:
            raise ConfigError(f"{what} requires a matrix flagged symmetric")


def as_array(A):
    return A.data if isinstance(A, ProblemMatrix) else np.asarray(A, dtype=float)


def as_problem(A, symmetry=None):
    if isinstance(A, ProblemMatrix):
        return A
    A = np.asarray(A, dtype=float)
    if symmetry is None:
        symmetry = "symmetric" if A.ndim == 2 and np.array_equal(A, A.T) else "general"
    return ProblemMatrix(A, symmetry)


# --- eigendecompositions ----------------------------------------------------


class EigenDecomposition(NamedTuple):
    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self):
        return (self.vectors * self.values) @ self.vectors.T

    def apply(self, fn):
        """Matrix function ``Q fn(Lambda) Q^T``."""
        return (self.vectors * fn(self.values)) @ self.vectors.T


def jacobi_eigh(M, tol=1e-14, max_sweeps=60):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Slow (O(n^3) per sweep in Python loops over pivots) but simple and very
    accurate; used at desk scale and as an independent check of ``eigh_sym``.
    """
    a = np.array(M, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return EigenDecomposition(np.zeros(n), v)
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
    w = np.diag(a).copy()
    order = np.argsort(w)
    return EigenDecomposition(w[order], v[:, order])


def eigh_sym(M, method="lapack"):
    """Symmetric eigendecomposition with ascending eigenvalues."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConfigError(f"expected a square matrix, got shape {M.shape}")
    sym = 0.5 * (M + M.T)
    if method == "jacobi":
        return jacobi_eigh(sym)
    if method != "lapack":
        raise ConfigError(f"unknown eigensolver {method!r}")
    w, v = np.linalg.eigh(sym)
    return EigenDecomposition(w, v)


def _checked_spectrum(eig, what):
    w = eig.values
    top = max(float(np.max(np.abs(w))), 0.0) if w.size else 0.0
    if w.size and w[0] < -1e-10 * top:
        raise NotSPDError(f"{what} has a negative eigenvalue {w[0]:.3e}")
    return np.clip(w, 0.0, None)


def sym_sqrt(M):
    """Principal square root of a symmetric PSD matrix."""
    eig = eigh_sym(M)
    w = _checked_spectrum(eig, "matrix square root argument")
    return (eig.vectors * np.sqrt(w)) @ eig.vectors.T


def sym_inv_sqrt(M, floor=1e-14):
    """Inverse principal square root of a symmetric PD matrix.

    Raises NotSPDError when an eigenvalue is at or below ``floor * lambda_max``.
    """
    eig = eigh_sym(M)
    w = eig.values
    top = float(np.max(np.abs(w)))
    if top == 0.0 or w[0] <= floor * top:
        raise NotSPDError("inverse square root of a matrix that is not numerically PD")
    return (eig.vectors / np.sqrt(w)) @ eig.vectors.T


class PinvResult(NamedTuple):
    matrix: np.ndarray
    dropped: int


def sym_pinv(M, tol=1e-12):
    """Eigendecomposition pseudo-inverse of a symmetric matrix.

    Eigenvalues with ``|lambda| <= tol * max|lambda|`` are zeroed and counted
    in ``dropped`` so callers can reject rank-deficient sketches.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.shape == (1, 1):
        m = M[0, 0]
        if m == 0.0:
            return PinvResult(np.zeros((1, 1)), 1)
        return PinvResult(np.array([[1.0 / m]]), 0)
    w, v = np.linalg.eigh(0.5 * (M + M.T))
    top = float(np.max(np.abs(w))) if w.size else 0.0
    keep = np.abs(w) > tol * top if top > 0 else np.zeros_like(w, dtype=bool)
    inv_w = np.zeros_like(w)
    inv_w[keep] = 1.0 / w[keep]
    return PinvResult((v * inv_w) @ v.T, int(np.count_nonzero(~keep)))


def spectral_norm_estimate(M, iters=100, seed=0):
    """Power iteration on ``M^T M``; never exceeds the true 2-norm."""
    M = as_array(M)
    if iters < 1:
        raise ConfigError("iters must be at least 1")
    if not np.any(M):
        return 0.0
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(M.shape[1])
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = M @ x
        est = float(np.linalg.norm(y))
        if est == 0.0:
            x = rng.standard_normal(M.shape[1])
            x /= np.linalg.norm(x)
            continue
        z = M.T @ y
        nz = np.linalg.norm(z)
        if nz == 0.0:
            break
        x = z / nz
    return float(np.linalg.norm(M @ x))


# --- weights -----------------------------------------------------------------

WEIGHT_KINDS = ("identity", "explicit", "inverse-of-a", "a-squared", "gram-left", "gram-right")


@dataclass(frozen=True)
class WeightSpec:
    """The SPD weight ``W`` of the weighted Frobenius norm.

    Only ``explicit`` carries a matrix; the other non-identity kinds are
    symbolic in ``A`` and resolved on demand.
    """

    kind: str = "identity"
    matrix: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in WEIGHT_KINDS:
            raise ConfigError(f"unknown weight kind {self.kind!r}")
        if (self.kind == "explicit") != (self.matrix is not None):
            raise ConfigError("an explicit weight needs a matrix, symbolic ones must not have one")
        if self.matrix is not None:
            W = np.asarray(self.matrix, dtype=float)
            if W.ndim != 2 or W.shape[0] != W.shape[1]:
                raise ConfigError("explicit weight must be square")
            if not np.allclose(W, W.T, rtol=0, atol=1e-12 * max(1.0, np.abs(W).max())):
                raise NotSPDError("explicit weight is not symmetric")
            W = 0.5 * (W + W.T)
            try:
                chol = sla.cholesky(W, lower=True)
            except sla.LinAlgError as exc:
                raise NotSPDError("explicit weight is not positive definite") from exc
            object.__setattr__(self, "matrix", W)
            object.__setattr__(self, "_chol", chol)

    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def explicit(cls, W):
        return cls("explicit", np.asarray(W, dtype=float))

    @classmethod
    def inverse_of_a(cls):
        return cls("inverse-of-a")

    @classmethod
    def a_squared(cls):
        return cls("a-squared")

    @classmethod
    def gram_left(cls):
        return cls("gram-left")

    @classmethod
    def gram_right(cls):
        return cls("gram-right")

    @property
    def is_identity(self):
        return self.kind == "identity"

    def _needs_spd(self, A):
        if self.kind in ("inverse-of-a", "a-squared"):
            P = as_problem(A)
            P.require_spd(f"weight {self.kind}")

    def matrix_for(self, A):
        """Materialize ``W`` as a dense matrix (desk scale only)."""
        A = as_array(A)
        n = A.shape[0]
        if self.kind == "identity":
            return np.eye(n)
        if self.kind == "explicit":
            if self.matrix.shape != A.shape:
                raise ConfigError(f"weight is {self.matrix.shape}, matrix is {A.shape}")
            return self.matrix
        self._needs_spd(A)
        if self.kind == "inverse-of-a":
            return _sym(np.linalg.inv(A))
        if self.kind == "a-squared":
            return _sym(A @ A)
        if self.kind == "gram-left":
            return _sym(np.linalg.inv(A.T @ A))
        return _sym(np.linalg.inv(A @ A.T))

    def inverse_factor(self, A=None):
        """A matrix ``K`` with ``K^T K = W^{-1}``.

        Then ``||X||_{F(W^{-1})} = ||K X K^T||_F`` and the same holds for the
        operator norm, without forming ``W^{-1/2}``.
        """
        if self.kind == "explicit":
            n = self.matrix.shape[0]
            if A is not None and self.matrix.shape != as_array(A).shape:
                raise ConfigError(f"weight is {self.matrix.shape}, matrix is {as_array(A).shape}")
            return sla.solve_triangular(self._chol, np.eye(n), lower=True)
        if A is None:
            raise ConfigError(f"weight {self.kind} needs the problem matrix")
        A = as_array(A)
        n = A.shape[0]
        if self.kind == "identity":
            return np.eye(n)
        self._needs_spd(A)
        if self.kind == "inverse-of-a":
            return sla.cholesky(A, lower=True).T
        if self.kind == "a-squared":
            return np.linalg.inv(A)
        if self.kind == "gram-left":
            return A
        return A.T

    def sqrt_for(self, A):
        """Symmetric ``W^{1/2}`` via eigendecomposition."""
        return sym_sqrt(self.matrix_for(A))

    def inv_sqrt_for(self, A):
        """Symmetric ``W^{-1/2}`` via eigendecomposition."""
        return sym_inv_sqrt(self.matrix_for(A), floor=0.0)


IDENTITY = WeightSpec()


def _sym(M):
    return 0.5 * (M + M.T)


def _check_square(X, A):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ConfigError(f"expected a square matrix, got shape {X.shape}")
    if A is not None and as_array(A).shape != X.shape:
        raise ConfigError(f"dimension mismatch: {X.shape} vs {as_array(A).shape}")
    return X


def _factor_for(W, X, A):
    K = W.inverse_factor(A)
    if K.shape != X.shape:
        raise ConfigError(f"weight is {K.shape}, matrix is {X.shape}")
    return K


def weighted_frobenius_norm(X, W=IDENTITY, A=None):
    """``||X||_{F(W^{-1})}``; ``A`` is needed for the symbolic weight kinds."""
    X = _check_square(X, A)
    if W.is_identity:
        return float(np.linalg.norm(X))
    K = _factor_for(W, X, A)
    return float(np.linalg.norm(K @ X @ K.T))


def weighted_operator_norm(X, W=IDENTITY, A=None):
    """``||X||_{W^{-1}} = ||W^{-1/2} X W^{-1/2}||_2``."""
    X = _check_square(X, A)
    if W.is_identity:
        return float(np.linalg.norm(X, 2))
    K = _factor_for(W, X, A)
    return float(np.linalg.norm(K @ X @ K.T, 2))


def residual_norm(A, X):
    """``||I - A X||_F``."""
    A = as_array(A)
    R = -(A @ X)
    R[np.diag_indices_from(R)] += 1.0
    return float(np.linalg.norm(R))
