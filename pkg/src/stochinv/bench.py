"""Multi-method benchmark runs with CSV and SVG convergence traces."""

import csv
import io as _io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .driver import (
    BASELINE_METHODS,
    METHODS,
    VARIANTS,
    InverterConfig,
    Termination,
    run_inverter,
)
from .errors import ConfigError, DivergenceError, NumericalError
from .flops import FlopCounter
from .io import resolve_matrix
from .linalg import WeightSpec, as_problem
from .sketching import SketchRule, default_q

log = logging.getLogger(__name__)

CSV_HEADER = ("method", "iter", "residual", "flops", "seconds")
SKETCHES = ("block", "coordinate", "gaussian")
WEIGHT_NAMES = {
    "identity": WeightSpec.identity,
    "inv-a": WeightSpec.inverse_of_a,
    "a2": WeightSpec.a_squared,
    "gram-left": WeightSpec.gram_left,
    "gram-right": WeightSpec.gram_right,
}


def weight_from_name(name):
    try:
        return WEIGHT_NAMES[name]()
    except KeyError:
        raise ConfigError(f"unknown weight {name!r}; choose from {', '.join(WEIGHT_NAMES)}") from None


@dataclass
class MethodSpec:
    """One method of a benchmark: name plus sketch settings.

    ``sketch`` is ``block`` (contiguous coordinate blocks), ``coordinate`` or
    ``gaussian``; it only applies to sketch-and-project methods.
    """

    name: str
    q: Optional[int] = None
    probabilities: Optional[str] = None
    weight: str = "identity"
    sketch: str = "block"

    def __post_init__(self):
        if self.name not in METHODS:
            raise ConfigError(f"unknown method {self.name!r}; choose from {', '.join(METHODS)}")
        if self.sketch not in SKETCHES:
            raise ConfigError(f"unknown sketch {self.sketch!r}; choose from {', '.join(SKETCHES)}")
        weight_from_name(self.weight)
        if self.weight != "identity" and self.name not in VARIANTS:
            raise ConfigError(f"{self.name} fixes its own weight; --weight applies to row, col and sym")

    def rule(self, n):
        """The sketch rule for an ``n x n`` problem (``None`` for baselines)."""
        name, p = self.name, self.probabilities
        q = default_q(n) if self.q is None else self.q
        if name in BASELINE_METHODS:
            return None
        if name == "adarbfgs-cols":
            return SketchRule.adaptive_cols(n, q, p or "convenient")
        if name == "adarbfgs-gauss":
            if p is not None:
                raise ConfigError("gaussian sketches take no probability rule")
            return SketchRule.adaptive_gauss(n, q)
        if name == "good-broyden":
            return SketchRule.coordinate(n, p or "uniform")
        if self.sketch == "gaussian":
            if p is not None:
                raise ConfigError("gaussian sketches take no probability rule")
            return SketchRule.gaussian(n, q)
        if self.sketch == "coordinate" or q == 1:
            return SketchRule.coordinate(n, p or "convenient")
        return SketchRule.coordinate_block(n, q, p or "convenient")


@dataclass
class BenchmarkSpec:
    """A benchmark: one matrix, several methods, shared stopping rule.

    ``matrix`` is a :class:`ProblemMatrix`, an array, or a source string for
    :func:`stochinv.io.resolve_matrix`.  ``init`` is ``method`` (per-method
    defaults) or ``identity`` (every method starts from ``I``).
    """

    matrix: object
    methods: list
    tol: float = 1e-2
    max_iters: int = 10_000
    time_budget: Optional[float] = None
    seed: int = 0
    trials: int = 1
    init: str = "method"
    residual_every: int = 10
    record_time: bool = True
    workers: Optional[int] = None

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("a benchmark needs at least one method")
        self.methods = [m if isinstance(m, MethodSpec) else MethodSpec(m) for m in self.methods]
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.init not in ("method", "identity"):
            raise ConfigError(f"unknown init policy {self.init!r}")


@dataclass
class ConvergenceTrace:
    """History of one method (and trial) on the benchmark matrix."""

    label: str
    points: list
    status: str
    message: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def final_residual(self):
        return self.points[-1].residual if self.points else math.nan

    @property
    def final_flops(self):
        return self.points[-1].flops if self.points else 0


def _run_one(A, method, spec, trial):
    config = InverterConfig(
        A,
        method.name,
        W=weight_from_name(method.weight),
        rule=method.rule(A.n),
        tol=spec.tol,
        max_iters=spec.max_iters,
        seed=spec.seed,
        trial=trial if spec.trials > 1 else None,
        residual_every=spec.residual_every,
        time_budget=spec.time_budget,
        record_time=spec.record_time,
        init=spec.init,
    )
    label = method.name if spec.trials == 1 else f"{method.name}/trial{trial}"
    try:
        state, term = run_inverter(config, FlopCounter())
    except DivergenceError as exc:
        return ConvergenceTrace(label, exc.state.history, Termination.DIVERGED.value, str(exc))
    except NumericalError as exc:
        log.warning("%s failed: %s", label, exc)
        return ConvergenceTrace(label, [], Termination.ERROR.value, str(exc))
    return ConvergenceTrace(label, state.history, term.value, extras={"k": state.k})


def run_benchmark(spec, csv_path=None, svg_path=None):
    """Run every method of ``spec`` and optionally write the CSV and SVG.

    Methods run one after another; trials of one method run concurrently,
    each with its own random stream.  Failures are recorded in the trace
    status and do not stop the other methods.
    """
    A = resolve_matrix(spec.matrix) if isinstance(spec.matrix, str) else as_problem(spec.matrix)
    traces = []
    for method in spec.methods:
        method.rule(A.n)  # configuration errors surface before any work
        if spec.trials == 1:
            traces.append(_run_one(A, method, spec, 0))
            continue
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            traces.extend(pool.map(lambda t: _run_one(A, method, spec, t), range(spec.trials)))
    if csv_path is not None:
        write_csv(traces, csv_path)
    if svg_path is not None:
        write_svg(traces, svg_path)
    return traces


def traces_to_csv(traces):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for tr in traces:
        for p in tr.points:
            w.writerow((tr.label, p.k, repr(float(p.residual)), p.flops, f"{p.seconds:.6f}"))
    return buf.getvalue()


def write_csv(traces, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(traces_to_csv(traces))


PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def _log_range(values):
    vals = [v for v in values if v > 0 and math.isfinite(v)]
    if not vals:
        return -1.0, 0.0
    lo, hi = math.floor(math.log10(min(vals))), math.ceil(math.log10(max(vals)))
    return float(lo), float(hi if hi > lo else lo + 1)


def _panel(traces, xkey, title, x0, y0, w, h, ylo, yhi):
    xs = [getattr(p, xkey) for tr in traces for p in tr.points]
    xmax = max(xs) if xs and max(xs) > 0 else 1.0
    out = [
        f'<g><rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#000"/>',
        f'<text x="{x0 + w / 2}" y="{y0 - 8}" text-anchor="middle" font-size="13">{title}</text>',
    ]
    for e in range(int(ylo), int(yhi) + 1):
        y = y0 + h - (e - ylo) / (yhi - ylo) * h
        out.append(f'<line x1="{x0}" y1="{y:.1f}" x2="{x0 + w}" y2="{y:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{x0 - 6}" y="{y + 4:.1f}" text-anchor="end" font-size="10">1e{e}</text>')
    for t in range(5):
        x = x0 + t / 4 * w
        out.append(f'<text x="{x:.1f}" y="{y0 + h + 14}" text-anchor="middle" font-size="10">{t / 4 * xmax:.3g}</text>')
    for i, tr in enumerate(traces):
        pts = []
        for p in tr.points:
            if not (p.residual > 0 and math.isfinite(p.residual)):
                continue
            ly = min(max(math.log10(p.residual), ylo), yhi)
            pts.append(f"{x0 + getattr(p, xkey) / xmax * w:.2f},{y0 + h - (ly - ylo) / (yhi - ylo) * h:.2f}")
        if pts:
            color = PALETTE[i % len(PALETTE)]
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(pts)}"/>')
    out.append("</g>")
    return out


def traces_to_svg(traces, width=900, height=380):
    """Two panels, residual against seconds and against flops, log-scale y."""
    ylo, yhi = _log_range([p.residual for tr in traces for p in tr.points])
    pw, ph, top = (width - 160) / 2, height - 110, 40
    body = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
        '<rect width="100%" height="100%" fill="#fff"/>',
    ]
    body += _panel(traces, "seconds", "relative residual vs seconds", 60, top, pw, ph, ylo, yhi)
    body += _panel(traces, "flops", "relative residual vs flops", 120 + pw, top, pw, ph, ylo, yhi)
    for i, tr in enumerate(traces):
        x = 60 + (i % 4) * 200
        y = height - 40 + (i // 4) * 14
        color = PALETTE[i % len(PALETTE)]
        body.append(f'<rect x="{x}" y="{y - 8}" width="12" height="3" fill="{color}"/>')
        body.append(f'<text x="{x + 16}" y="{y}" font-size="11">{_escape(tr.label)} ({tr.status})</text>')
    body.append("</svg>")
    return "\n".join(body) + "\n"


def _escape(s):
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_svg(traces, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(traces_to_svg(traces))


def first_hit(trace, tol):
    """First history point with residual at most ``tol`` (or ``None``)."""
    for p in trace.points:
        if p.residual <= tol:
            return p
    return None

