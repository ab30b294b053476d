"""Stochastic sketch-and-project methods for inverting matrices."""

from .adarbfgs import FactoredState, adarbfgs_step, one_step_rate_bound, reconstruct
from .baselines import mr_init, mr_step, newton_schulz_init, newton_schulz_step
from .bench import BenchmarkSpec, ConvergenceTrace, MethodSpec, run_benchmark
from .driver import InverterConfig, InverterState, Termination, iterate, run_inverter
from .errors import (
    ConfigError,
    DegeneratePivot,
    DivergenceError,
    MatrixFormatError,
    NotSPDError,
    NumericalError,
    RankDeficientSketch,
    StochInvError,
)
from .flops import FlopCounter
from .io import build_ridge_hessian, gen_synthetic, load_matrix_market, write_matrix_market
from .linalg import (
    IDENTITY,
    EigenDecomposition,
    ProblemMatrix,
    WeightSpec,
    eigh_sym,
    residual_norm,
    spectral_norm_estimate,
    sym_pinv,
    weighted_frobenius_norm,
    weighted_operator_norm,
)
from .qn import (
    aip_step,
    bad_broyden_step,
    bfgs_step,
    column_update_step,
    dfp_step,
    good_broyden_step,
    kaczmarz_step,
    psb_step,
)
from .rates import (
    RateReport,
    expected_z_discrete,
    fracsum_optimal_p,
    gamma_upper_bound,
    iteration_complexity,
    kappa_2F,
    projector_z,
    rho,
)
from .simi import step_col, step_row, step_sym
from .sketching import (
    DiscreteSampling,
    SketchRule,
    SketchSample,
    convenient_probabilities,
    draw_sketch,
    make_rng,
    optimized_probabilities,
)

__version__ = "0.1.0"
