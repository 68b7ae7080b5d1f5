"""Spectral simulation of the periodic DNLS gauge transformation under Gaussian measures."""

__version__ = "0.1.0"

from .flow import (
    FlowError,
    FlowOptions,
    FlowResult,
    TailMassError,
    flow_discrepancy,
    gauge_exact,
    gauge_truncated,
    group_defect,
)
from .functionals import (
    DivergenceMismatch,
    FunctionalValue,
    LPStats,
    SeriesTruncationError,
    divergence,
    f_n,
    f_split,
    jacobian_log_det,
    lp_stats,
)
from .measure import MeasureSpec, SampleBatch, StarvationError, log_density_finite, sample
from .montecarlo import MCEstimate, TailCurve, estimate_moment, pushforward_check, rate_fit, tail_curve
from .spectral import AliasingError, SpectralFunction, gauge_potential, lp_block, project
from .wick import ComplexityError, WickMoment, rate_table, second_moment_diff
