"""Quasi-sure SDE solutions under a finite family of volatility models.

Per-measure strong solving driven only by path data, cross-measure
compatibility checks, patching into one universal solution, and
worst-case (G-) expectations.
"""
__version__ = "0.1.0"

from .calculus import (
    GridProcess,
    IntegralResult,
    ito_epsilon,
    ito_limsup,
    ito_sum,
    qv_from_integral,
    stopping_partition,
)
from .gexpect import Estimate, Functional, GEstimate, estimate, g_expect, payoff, robust_price
from .kernels import BACKEND
from .measures import (
    Constant,
    DriverPath,
    MeasureFamily,
    Member,
    Mixture,
    PathStream,
    PiecewiseConstant,
    RegimeSwitching,
    TimeGrid,
    average_measure,
    make_grid,
    sample_driver,
    sample_vol_path,
    simulate_family,
)
from .patching import (
    CompatibilityReport,
    ConflictError,
    UniversalSolutionTable,
    assign_typical,
    check_average_consistency,
    check_compatibility,
    patch,
    typical_under,
)
from .sde import (
    BlowUpError,
    CoefficientSet,
    SolutionPath,
    builtin_coefficients,
    check_lipschitz,
    check_monotone,
    check_yamada_watanabe,
    solve_strong,
)
