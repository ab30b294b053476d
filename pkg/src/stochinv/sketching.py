"""Sketch distributions, sampling, and probability rules for discrete samplings."""

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, NumericalError, RankDeficientSketch
from .linalg import IDENTITY, as_array, as_problem, sym_pinv

SKETCH_KINDS = (
    "coordinate",
    "coordinate-block",
    "gaussian",
    "fixed-family",
    "adaptive-factor-cols",
    "adaptive-factor-gauss",
)
DISCRETE_KINDS = ("coordinate", "coordinate-block", "fixed-family")
ADAPTIVE_KINDS = ("adaptive-factor-cols", "adaptive-factor-gauss")
PROBABILITY_RULES = ("uniform", "convenient", "optimized-exact", "optimized-heuristic")
_PROBABILITY_ALIASES = {"optimized": "optimized-exact", "heuristic": "optimized-heuristic"}

MAX_REDRAWS = 100


def default_q(n):
    return max(1, min(n, math.ceil(math.sqrt(n))))


def make_rng(seed, trial=None):
    """Seeded stream; ``trial`` selects an independent substream of ``seed``."""
    if trial is None:
        return np.random.default_rng(np.random.SeedSequence(seed))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))


def contiguous_partition(n, q):
    """Blocks ``{0..q-1}, {q..2q-1}, ...``; the last block may be shorter."""
    if not 1 <= q <= n:
        raise ConfigError(f"block size q={q} must lie in [1, {n}]")
    return tuple(np.arange(start, min(start + q, n)) for start in range(0, n, q))


def _check_partition(blocks, n):
    seen = np.zeros(n, dtype=int)
    for block in blocks:
        if len(block) == 0:
            raise ConfigError("partition blocks must be nonempty")
        idx = np.asarray(block)
        if idx.min() < 0 or idx.max() >= n:
            raise ConfigError("partition block index out of range")
        np.add.at(seen, idx, 1)
    if not np.all(seen == 1):
        raise ConfigError("blocks must be disjoint and cover every index")


def _check_simplex(p, r):
    p = np.asarray(p, dtype=float)
    if p.shape != (r,):
        raise ConfigError(f"expected {r} probabilities, got shape {p.shape}")
    if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ConfigError("probabilities must be positive and sum to one")
    return p


@dataclass(frozen=True)
class SketchRule:
    """A sketch distribution.

    ``probabilities`` is one of the named rules or an explicit vector.  It is
    ``None`` for gaussian kinds.  ``premultiply_by_a`` marks rules whose
    outcome ``V`` is used as ``S = A V``.
    """

    kind: str
    n: int
    q: int = 1
    probabilities: object = "uniform"
    blocks: Optional[tuple] = field(default=None, repr=False)
    family: Optional[tuple] = field(default=None, repr=False)
    premultiply_by_a: bool = False

    def __post_init__(self):
        if self.kind not in SKETCH_KINDS:
            raise ConfigError(f"unknown sketch kind {self.kind!r}")
        if self.n < 1 or not 1 <= self.q <= self.n:
            raise ConfigError(f"need 1 <= q <= n, got q={self.q}, n={self.n}")
        p = self.probabilities
        if self.kind in ("gaussian", "adaptive-factor-gauss"):
            if p is not None:
                raise ConfigError(f"{self.kind} sketches take no probability rule")
        elif isinstance(p, str):
            p = _PROBABILITY_ALIASES.get(p, p)
            if p not in PROBABILITY_RULES:
                raise ConfigError(f"unknown probability rule {p!r}")
            object.__setattr__(self, "probabilities", p)
        elif p is None:
            raise ConfigError(f"{self.kind} needs a probability rule")
        else:
            object.__setattr__(self, "probabilities", _check_simplex(p, self.num_outcomes))
        if self.kind in ("coordinate-block", "adaptive-factor-cols"):
            _check_partition(self.blocks, self.n)
        if self.kind == "fixed-family":
            for S in self.family:
                if S.ndim != 2 or S.shape[0] != self.n:
                    raise ConfigError("family members must have n rows")

    # constructors

    @classmethod
    def coordinate(cls, n, probabilities="uniform"):
        return cls("coordinate", n, 1, probabilities)

    @classmethod
    def coordinate_block(cls, n, q=None, probabilities="uniform", blocks=None):
        q = default_q(n) if q is None else q
        blocks = contiguous_partition(n, q) if blocks is None else tuple(np.asarray(b) for b in blocks)
        return cls("coordinate-block", n, max(len(b) for b in blocks), probabilities, blocks=blocks)

    @classmethod
    def gaussian(cls, n, q=None):
        return cls("gaussian", n, default_q(n) if q is None else q, None)

    @classmethod
    def fixed_family(cls, members, probabilities="uniform", premultiply_by_a=False):
        members = tuple(np.atleast_2d(np.asarray(S, dtype=float).T).T for S in members)
        if not members:
            raise ConfigError("a fixed family needs at least one member")
        n = members[0].shape[0]
        q = max(S.shape[1] for S in members)
        return cls("fixed-family", n, q, probabilities, family=members, premultiply_by_a=premultiply_by_a)

    @classmethod
    def adaptive_cols(cls, n, q=None, probabilities="convenient", blocks=None):
        q = default_q(n) if q is None else q
        blocks = contiguous_partition(n, q) if blocks is None else tuple(np.asarray(b) for b in blocks)
        return cls("adaptive-factor-cols", n, max(len(b) for b in blocks), probabilities, blocks=blocks)

    @classmethod
    def adaptive_gauss(cls, n, q=None):
        return cls("adaptive-factor-gauss", n, default_q(n) if q is None else q, None)

    # structure

    @property
    def is_discrete(self):
        return self.kind in DISCRETE_KINDS

    @property
    def is_adaptive(self):
        return self.kind in ADAPTIVE_KINDS

    @property
    def num_outcomes(self):
        if self.kind == "coordinate":
            return self.n
        if self.kind in ("coordinate-block", "adaptive-factor-cols"):
            return len(self.blocks)
        if self.kind == "fixed-family":
            return len(self.family)
        return None

    def members(self):
        """The outcomes ``S_1..S_r`` of a non-adaptive discrete rule."""
        eye = np.eye(self.n)
        if self.kind == "coordinate":
            return [eye[:, [i]] for i in range(self.n)]
        if self.kind == "coordinate-block":
            return [eye[:, b] for b in self.blocks]
        if self.kind == "fixed-family":
            return list(self.family)
        raise ConfigError(f"{self.kind} has no fixed outcome list")

    def discrete_sampling(self, probabilities):
        return DiscreteSampling(self.members(), probabilities)


@dataclass
class SketchSample:
    """One drawn sketch.

    ``columns`` is set when the matrix is the column submatrix ``I[:, columns]``
    (products with it are selections).  ``tilde`` is the pre-factor sketch of
    adaptive rules, whose ``matrix`` is ``L @ tilde``.
    """

    matrix: np.ndarray
    index: Optional[int] = None
    columns: Optional[np.ndarray] = None
    tilde: Optional[np.ndarray] = None
    tilde_columns: Optional[np.ndarray] = None

    @property
    def q(self):
        return self.matrix.shape[1]

    def left(self, M):
        """``S^T M``."""
        if self.columns is not None:
            return M[self.columns, :]
        return self.matrix.T @ M

    def right(self, M):
        """``M S``."""
        if self.columns is not None:
            return M[:, self.columns]
        return M @ self.matrix


def coordinate_sample(n, columns, index=None):
    columns = np.atleast_1d(np.asarray(columns, dtype=int))
    return SketchSample(np.eye(n)[:, columns], index=index, columns=columns)


def as_sample_matrix(S):
    """The ``n x q`` matrix of a sample or array (vectors become one column)."""
    if isinstance(S, SketchSample):
        return S.matrix
    S = np.asarray(S, dtype=float)
    return S[:, None] if S.ndim == 1 else S


def dense_sample(S, index=None):
    S = np.asarray(S, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    return SketchSample(S, index=index)


@dataclass
class DiscreteSampling:
    """A finite sketch family with probabilities."""

    members: Sequence[np.ndarray]
    probabilities: np.ndarray

    def __post_init__(self):
        self.members = [np.atleast_2d(np.asarray(S, dtype=float).T).T for S in self.members]
        self.probabilities = _check_simplex(self.probabilities, len(self.members))

    @property
    def n(self):
        return self.members[0].shape[0]

    @property
    def r(self):
        return len(self.members)

    @property
    def stacked(self):
        return np.hstack(self.members)

    @property
    def expected_q(self):
        return float(sum(p * S.shape[1] for p, S in zip(self.probabilities, self.members)))

    def is_complete(self):
        """Full row rank of the stacked family (rank of ``SS^T``)."""
        St = self.stacked
        return sym_pinv(St @ St.T).dropped == 0

    def validate(self):
        for i, S in enumerate(self.members):
            if sym_pinv(S.T @ S).dropped:
                raise RankDeficientSketch(f"member {i} is not of full column rank")
        if not self.is_complete():
            raise NumericalError("sampling is not complete: stacked sketch lacks full row rank")
        return self


def _family_members(family):
    if isinstance(family, DiscreteSampling):
        return family.members
    if isinstance(family, SketchRule):
        return family.members()
    return [np.atleast_2d(np.asarray(S, dtype=float).T).T for S in family]


def sketch_gram_operator(A, W=IDENTITY, side="row"):
    """``M`` such that the sketched Gram of outcome ``S`` is ``S^T M S``.

    Row side: ``A W A^T``; column side: ``A^T W A``.
    """
    A = as_array(A)
    if side not in ("row", "col"):
        raise ConfigError(f"side must be 'row' or 'col', got {side!r}")
    B = A if side == "row" else A.T
    if W.is_identity:
        return B @ B.T
    if W.kind == "inverse-of-a":
        as_problem(A).require_spd("weight inverse-of-a")
        return 0.5 * (A + A.T)
    if (W.kind == "gram-left" and side == "row") or (W.kind == "gram-right" and side == "col"):
        return np.eye(A.shape[0])
    M = B @ W.matrix_for(A) @ B.T
    return 0.5 * (M + M.T)


def convenient_probabilities(family, A, W=IDENTITY, side="row"):
    """``p_i`` proportional to ``||W^{1/2} A^T S_i||_F^2`` (``A S_i`` on the column side)."""
    M = sketch_gram_operator(A, W, side)
    weights = np.array([np.trace(S.T @ M @ S) for S in _family_members(family)])
    if np.any(weights <= 0):
        raise NumericalError("a family member has zero sketched norm; the family is invalid")
    return weights / weights.sum()


def _dual_blocks(members):
    St = np.hstack(members)
    if St.shape[0] != St.shape[1]:
        raise ConfigError("optimized probabilities require square complete sampling")
    try:
        dual = np.linalg.inv(St).T
    except np.linalg.LinAlgError as exc:
        raise ConfigError("optimized probabilities require square complete sampling") from exc
    if not np.all(np.isfinite(dual)):
        raise ConfigError("optimized probabilities require square complete sampling")
    bounds = np.cumsum([0] + [S.shape[1] for S in members])
    return [dual[:, bounds[i] : bounds[i + 1]] for i in range(len(members))]


def optimized_weights(family, A, W=IDENTITY, inverse=None):
    """The squared norms ``a_i = ||W^{-1/2} A^{-1} Sbar_i S_i^T A W^{1/2}||_F^2``.

    ``Sbar_i`` are the column blocks of the inverse transpose of the stacked
    family; ``inverse`` substitutes a proxy for ``A^{-1}``.
    """
    A = as_array(A)
    members = _family_members(family)
    dual = _dual_blocks(members)
    Ainv = np.linalg.inv(A) if inverse is None else np.asarray(inverse, dtype=float)
    if W.is_identity:
        left, right = Ainv, A
    else:
        left = W.inv_sqrt_for(A) @ Ainv
        right = A @ W.sqrt_for(A)
    return np.array([np.linalg.norm(left @ Sb @ (S.T @ right)) ** 2 for S, Sb in zip(members, dual)])


def optimized_probabilities(family, A, W=IDENTITY, inverse_source="exact", X=None):
    """Probabilities minimizing the trace bound on the rate; returns ``(p, gamma)``.

    ``inverse_source="proxy"`` replaces ``A^{-1}`` by the iterate ``X``; the
    resulting rule is a heuristic outside the convergence theory.
    """
    if inverse_source == "exact":
        a = optimized_weights(family, A, W)
    elif inverse_source == "proxy":
        if X is None:
            raise ConfigError("proxy mode needs the current iterate X")
        a = optimized_weights(family, A, W, inverse=X)
    else:
        raise ConfigError(f"unknown inverse source {inverse_source!r}")
    if np.any(a <= 0) or not np.all(np.isfinite(a)):
        raise NumericalError("optimized weights must be positive and finite")
    roots = np.sqrt(a)
    p = roots / roots.sum()
    gamma = 1.0 - 1.0 / roots.sum() ** 2
    return p, gamma


def resolve_probabilities(rule, A, W=IDENTITY, side="row", X=None):
    """Turn the rule's named probability choice into a vector (None for gaussian)."""
    p = rule.probabilities
    if p is None:
        return None
    if not isinstance(p, str):
        return p
    if rule.is_adaptive:
        raise ConfigError("adaptive rules resolve probabilities from the current factor")
    r = rule.num_outcomes
    if p == "uniform":
        return np.full(r, 1.0 / r)
    members = rule.members()
    if rule.premultiply_by_a:
        Aa = as_array(A)
        members = [Aa @ V for V in members]
    if p == "convenient":
        return convenient_probabilities(members, A, W, side)
    if p == "optimized-exact":
        return optimized_probabilities(members, A, W, "exact")[0]
    if X is None:
        raise ConfigError("heuristic probabilities need the current iterate")
    return optimized_probabilities(members, A, W, "proxy", X=X)[0]


def draw_sketch(rule, rng, *, probabilities=None, factor=None, force_index=None, accept=None,
                max_redraws=MAX_REDRAWS):
    """Draw one sketch from ``rule``.

    Discrete rules pick outcome ``i`` with ``probabilities`` (resolved from the
    rule when omitted and the rule is uniform or explicit).  Adaptive rules
    require the current ``factor`` L and return ``S = L @ tilde``.  If
    ``accept`` rejects a sample it is redrawn, at most ``max_redraws`` times.
    """
    if rule.is_adaptive and factor is None:
        raise ConfigError(f"{rule.kind} needs the current factor")
    if not rule.is_adaptive and factor is not None:
        raise ConfigError(f"{rule.kind} does not take a factor")
    if probabilities is None and rule.probabilities is not None:
        if isinstance(rule.probabilities, str):
            if rule.probabilities != "uniform":
                raise ConfigError(f"resolve the {rule.probabilities!r} probabilities first")
            probabilities = np.full(rule.num_outcomes, 1.0 / rule.num_outcomes)
        else:
            probabilities = rule.probabilities
    for _ in range(max_redraws):
        sample = _draw_once(rule, rng, probabilities, factor, force_index)
        if accept is None or accept(sample):
            return sample
        if force_index is not None:
            break
    raise RankDeficientSketch(f"{rule.kind} sketch rejected {max_redraws} times (rank deficient)")


def _draw_once(rule, rng, p, L, force_index):
    n = rule.n
    if rule.kind in ("gaussian", "adaptive-factor-gauss"):
        tilde = rng.standard_normal((n, rule.q))
        if rule.kind == "gaussian":
            return SketchSample(tilde)
        return SketchSample(L @ tilde, tilde=tilde)
    i = int(rng.choice(len(p), p=p)) if force_index is None else int(force_index)
    if not 0 <= i < rule.num_outcomes:
        raise ConfigError(f"outcome index {i} out of range")
    if rule.kind == "coordinate":
        return coordinate_sample(n, [i], index=i)
    if rule.kind == "coordinate-block":
        return coordinate_sample(n, rule.blocks[i], index=i)
    if rule.kind == "fixed-family":
        return SketchSample(rule.family[i], index=i)
    cols = np.asarray(rule.blocks[i])
    return SketchSample(L[:, cols], index=i, tilde_columns=cols)
