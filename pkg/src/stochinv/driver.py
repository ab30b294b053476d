"""Iteration driver shared by every method.

A *stepper* owns the iterate of one method and advances it by one step.
:func:`iterate` runs any stepper until the relative residual
``||I - A X_k||_F / ||I - A X_0||_F`` drops below the tolerance, recording a
history of ``(k, residual, flops, seconds)`` points.
"""

import enum
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigError, DegeneratePivot, DivergenceError
from .flops import FlopCounter
from .linalg import IDENTITY, WeightSpec, as_array, as_problem, residual_norm
from .qn import (
    aip_step,
    bad_broyden_step,
    bfgs_step,
    column_update_step,
    dfp_step,
    good_broyden_step,
    kaczmarz_step,
    named_update,
    psb_step,
)
from .simi import step_col, step_row, step_sym
from .sketching import (
    MAX_REDRAWS,
    SketchRule,
    convenient_probabilities,
    draw_sketch,
    make_rng,
    optimized_probabilities,
    resolve_probabilities,
)

log = logging.getLogger(__name__)

VARIANTS = ("row", "col", "sym")
SKETCH_METHODS = VARIANTS + (
    "kaczmarz", "bad-broyden", "psb", "good-broyden", "aip", "dfp", "bfgs", "column", "column-sym",
)
ADAPTIVE_METHODS = ("adarbfgs-gauss", "adarbfgs-cols")
BASELINE_METHODS = ("newton-schulz", "mr")
METHODS = SKETCH_METHODS + ADAPTIVE_METHODS + BASELINE_METHODS


class Termination(enum.Enum):
    TOL_REACHED = "tol_reached"
    MAX_ITERS = "max_iters"
    TIME_BUDGET = "time_budget"
    DIVERGED = "diverged"
    ERROR = "error"


@dataclass(frozen=True)
class HistoryPoint:
    k: int
    residual: float
    flops: int
    seconds: float


@dataclass
class InverterState:
    """Iterate ``X`` (approximating ``A^{-1}``) after ``k`` steps, with history."""

    X: np.ndarray
    k: int = 0
    history: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @property
    def residual(self):
        return self.history[-1].residual if self.history else None


@dataclass
class InverterConfig:
    """Settings for :func:`run_inverter`.

    ``method`` is a generic variant (row, col, sym), a named update, an
    adaptive BFGS variant or a baseline.  ``rule`` defaults to contiguous
    coordinate blocks of width ``q = ceil(sqrt(n))`` with convenient
    probabilities.  ``cyclic`` walks discrete outcomes in order instead of
    sampling them.
    """

    A: object
    method: str = "row"
    W: WeightSpec = IDENTITY
    rule: Optional[SketchRule] = None
    q: Optional[int] = None
    tol: float = 1e-2
    max_iters: int = 10_000
    seed: int = 0
    trial: Optional[int] = None
    residual_every: int = 10
    time_budget: Optional[float] = None
    record_time: bool = True
    X0: Optional[np.ndarray] = None
    init: str = "identity"
    cyclic: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if not self.tol >= 0:
            raise ConfigError("tol must be nonnegative")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be at least 1")
        if self.residual_every < 1:
            raise ConfigError("residual_every must be at least 1")
        if self.init not in ("identity", "method"):
            raise ConfigError(f"unknown init policy {self.init!r}")
        self.A = as_problem(self.A)
        if self.method == "sym" and not self.A.is_symmetric:
            raise ConfigError("the symmetric variant needs a symmetric matrix")


class Stepper:
    """One method's iterate.  Subclasses implement :meth:`step`.

    ``inverse_iterate`` is the matrix tracked against ``A^{-1}``.
    """

    name = "stepper"

    def __init__(self, A, X0):
        self.A = as_array(A)
        self.X = np.array(X0, dtype=float)
        self.extras = {}

    def inverse_iterate(self):
        return self.X

    def step(self, rng, counter):
        raise NotImplementedError

    def snapshot(self):
        return self.inverse_iterate().copy()

    def checkpoint(self):
        """Cheap reference to the current state (steps never mutate in place)."""
        return self.inverse_iterate()

    def materialize(self, checkpoint):
        return checkpoint

    def is_finite(self):
        return bool(np.all(np.isfinite(self.inverse_iterate())))

    def residual(self, A):
        return residual_norm(A, self.inverse_iterate())


def _side(method, variant):
    return "col" if method == "bad-broyden" or variant == "col" else "row"


class SketchStepper(Stepper):
    """Generic and named sketch-and-project methods."""

    def __init__(self, config, X0):
        super().__init__(config.A, X0)
        self.config = config
        self.method = config.method
        P = config.A
        n = P.n
        if config.method in VARIANTS:
            self.variant, self.W = config.method, config.W
            self.update = None
        else:
            self.update = named_update(config.method)
            self.update.check(P)
            self.variant = "sym" if self.update.symmetric_iterates else "row"
            self.W = self.update.weight_for(P)
        self.symmetric = self.variant == "sym"
        rule = config.rule
        if rule is None:
            q = config.q
            rule = SketchRule.coordinate_block(n, q, "convenient") if (q or 2) > 1 else SketchRule.coordinate(n, "convenient")
            if self.method == "good-broyden":
                rule = SketchRule.coordinate(n, "uniform")
        if rule.is_adaptive:
            raise ConfigError(f"{self.method} does not take adaptive sketches")
        if rule.n != n:
            raise ConfigError(f"sketch rule is for n={rule.n}, matrix has n={n}")
        if self.method == "good-broyden" and rule.kind != "coordinate":
            raise ConfigError("good-broyden replaces one column per step; use coordinate sketches")
        self.rule = rule
        self.premultiply = bool(self.update and self.update.premultiply_by_a) or rule.premultiply_by_a
        self.heuristic = rule.probabilities == "optimized-heuristic"
        self.p = None if self.heuristic else self._probabilities(None)
        self.cursor = 0
        self._Wd = None
        if self.update is None and not self.W.is_identity and self.W.kind != "inverse-of-a":
            self._Wd = self.W.matrix_for(P)
        self.Xinv_iter = None
        if self.update is not None and self.update.tracks_inverse:
            # the primal iterate approaches A; its inverse approaches A^{-1}
            self.primal = self.X
            self.X = np.linalg.inv(self.primal)
        self.extras["symmetry_drift"] = 0.0

    def _probabilities(self, X):
        rule, A = self.rule, self.config.A
        if rule.probabilities is None:
            return None
        if self.method in ("dfp", "good-broyden") and isinstance(rule.probabilities, str):
            if rule.probabilities == "uniform" or self.method == "good-broyden":
                return np.full(rule.num_outcomes, 1.0 / rule.num_outcomes)
            if rule.probabilities != "convenient":
                raise ConfigError(f"{self.method} supports uniform or convenient probabilities")
            # sketching X A^{-1} = I through A S with W = A gives Tr(S^T A S)
            return convenient_probabilities(rule, A, WeightSpec.inverse_of_a(), "row")
        if self.premultiply and not rule.premultiply_by_a:
            rule = replace(rule, premultiply_by_a=True)
        if rule.probabilities == "optimized-heuristic":
            members = rule.members()
            if rule.premultiply_by_a:
                members = [as_array(A) @ V for V in members]
            return optimized_probabilities(members, A, self.W, "proxy", X=X)[0]
        return resolve_probabilities(rule, A, self.W, _side(self.method, self.variant), X)

    def _draw(self, rng, force=None):
        p = self._probabilities(self.X) if self.heuristic else self.p
        if force is None and self.config.cyclic and self.rule.is_discrete:
            force = self.cursor % self.rule.num_outcomes
            self.cursor += 1
        return draw_sketch(self.rule, rng, probabilities=p, force_index=force)

    def step(self, rng, counter):
        A, X, m = self.A, self.X, self.method
        if m == "good-broyden":
            self.primal, self.X = self._good_broyden(rng, counter)
            return
        S = self._draw(rng)
        if m == "dfp":
            self.primal, Xinv = dfp_step(self.primal, self.X, A, S, counter)
            self.X = self._resym(Xinv)
            return
        if m in ("kaczmarz", "row") and self.W.is_identity:
            Xn = kaczmarz_step(X, A, S, counter)
        elif m in ("bad-broyden", "col") and self.W.is_identity:
            Xn = bad_broyden_step(X, A, S, counter)
        elif m in ("psb", "sym") and self.W.is_identity:
            Xn = psb_step(X, A, S, counter)
        elif m == "aip" or (m == "row" and self.W.kind == "inverse-of-a"):
            Xn = aip_step(X, A, S, counter)
        elif m == "bfgs" or (m == "sym" and self.W.kind == "inverse-of-a"):
            Xn = bfgs_step(X, A, S, counter)
        elif m in ("column", "column-sym"):
            Xn = column_update_step(X, A, S, m == "column-sym", counter)
        else:
            stepper = {"row": step_row, "col": step_col, "sym": step_sym}[m]
            Xn = stepper(X, A, self._Wd, S, counter)
        self.X = self._resym(Xn) if self.symmetric else Xn

    def _resym(self, X):
        drift = float(np.max(np.abs(X - X.T))) if X.size else 0.0
        self.extras["symmetry_drift"] = max(self.extras["symmetry_drift"], drift)
        return 0.5 * (X + X.T)

    def _good_broyden(self, rng, counter):
        for _ in range(MAX_REDRAWS):
            S = self._draw(rng)
            try:
                return good_broyden_step(self.primal, self.X, self.A, S.index, counter)
            except DegeneratePivot:
                if self.config.cyclic:
                    raise
                log.debug("degenerate good-broyden pivot at %d, resampling", S.index)
        raise DegeneratePivot(f"good-broyden pivots degenerate {MAX_REDRAWS} times in a row")


def default_X0(config):
    """Starting matrix: ``config.X0``, else the init policy's choice."""
    A = config.A
    if config.X0 is not None:
        X0 = np.array(config.X0, dtype=float)
        if X0.shape != (A.n, A.n):
            raise ConfigError(f"X0 has shape {X0.shape}, expected {(A.n, A.n)}")
        return X0
    if config.init == "method" and config.method in BASELINE_METHODS:
        from .baselines import mr_init, newton_schulz_init

        return newton_schulz_init(A, config.seed) if config.method == "newton-schulz" else mr_init(A)
    return np.eye(A.n)


def make_stepper(config):
    X0 = default_X0(config)
    if config.method in SKETCH_METHODS:
        return SketchStepper(config, X0)
    if config.method in ADAPTIVE_METHODS:
        from .adarbfgs import AdaRBFGSStepper

        return AdaRBFGSStepper(config, X0)
    from .baselines import MRStepper, NewtonSchulzStepper

    cls = NewtonSchulzStepper if config.method == "newton-schulz" else MRStepper
    return cls(config.A, X0)


def iterate(stepper, A, rng, *, tol=1e-2, max_iters=10_000, residual_every=10, counter=None,
            time_budget=None, record_time=True):
    """Step ``stepper`` until the relative residual is at most ``tol``.

    The residual is recomputed from scratch every ``residual_every`` steps and
    at the last step.  Returns ``(state, termination)``; on divergence the
    state holds the last finite iterate.
    """
    A = as_array(A)
    counter = FlopCounter() if counter is None else counter
    r0 = stepper.residual(A)
    scale = r0 if r0 > 0 else 1.0
    state = InverterState(X=stepper.snapshot(), extras=stepper.extras)
    state.history.append(HistoryPoint(0, r0 / scale, counter.total, 0.0))
    if r0 / scale <= tol:
        return state, Termination.TOL_REACHED
    elapsed = 0.0
    last = stepper.checkpoint()
    for k in range(1, max_iters + 1):
        t0 = time.perf_counter()
        with np.errstate(over="ignore", invalid="ignore"):
            stepper.step(rng, counter)
        elapsed += time.perf_counter() - t0
        state.k = k
        if not stepper.is_finite():
            state.X = stepper.materialize(last)
            state.k = k - 1
            state.extras["diverged_at"] = k
            return state, Termination.DIVERGED
        last = stepper.checkpoint()
        over_time = time_budget is not None and elapsed >= time_budget
        if k % residual_every == 0 or k == max_iters or over_time:
            with np.errstate(over="ignore", invalid="ignore"):
                rel = stepper.residual(A) / scale
            if not np.isfinite(rel):
                state.X = stepper.materialize(last)
                state.extras["diverged_at"] = k
                return state, Termination.DIVERGED
            state.history.append(HistoryPoint(k, rel, counter.total, elapsed if record_time else 0.0))
            if rel <= tol:
                state.X = stepper.snapshot()
                return state, Termination.TOL_REACHED
            if over_time:
                state.X = stepper.snapshot()
                return state, Termination.TIME_BUDGET
    state.X = stepper.snapshot()
    return state, Termination.MAX_ITERS


def run_inverter(config, counter=None):
    """Run one configured method; returns ``(state, termination)``.

    Raises :class:`DivergenceError` carrying the last finite state when the
    iterate stops being finite.
    """
    rng = make_rng(config.seed, config.trial)
    stepper = make_stepper(config)
    counter = FlopCounter() if counter is None else counter
    state, term = iterate(
        stepper, config.A, rng,
        tol=config.tol, max_iters=config.max_iters, residual_every=config.residual_every,
        counter=counter, time_budget=config.time_budget, record_time=config.record_time,
    )
    state.extras["flops_breakdown"] = dict(counter.breakdown)
    if getattr(stepper, "primal", None) is not None:
        state.extras["primal"] = stepper.primal
    if term is Termination.DIVERGED:
        raise DivergenceError(f"{config.method} diverged after {state.k} finite steps", state)
    return state, term
