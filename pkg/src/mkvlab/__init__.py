"""mkvlab: simulation and verification lab for McKean-Vlasov SDEs.

Solves the mean-field fixed point by Picard iteration on sample clouds,
simulates the interacting particle system, and quantifies propagation of
chaos through change-of-measure entropy functionals, explicit TV bound
chains, and a deterministic CDF oracle for the rank-based model.
"""

__version__ = "0.1.0"

from .coefficients import (
    DriftSpec,
    RankG,
    VolatilitySpec,
    check_bound,
    eval_drift,
    make_constant_drift,
    make_mean_field_drift,
    make_rank_drift,
    zero_drift,
)
from .engine import euler_step, simulate_coupled, simulate_frozen
from .girsanov import (
    LogDensityLedger,
    accumulate_log_density,
    path_relative_entropy,
    squared_drift_gap,
)
from .measures import (
    Histogram,
    empirical_cdf,
    kl_hist,
    tv_hist,
    w1_1d,
)
from .picard import contraction_report, picard_solve
from .chaos import (
    Neighborhood,
    PathFunctional,
    chaos_gap,
    marginal_tv,
    sanov_rate_check,
    tail_probability,
    tv_bound_chain,
)
from .burgers import PdeGrid, PdeSolution, compare_particle_pde, default_pde_grid, fd_solve
from .state import Cloud, InitialLaw, TimeGrid
from .streams import NoiseBank, derive_seed

__all__ = [
    "Cloud",
    "DriftSpec",
    "Histogram",
    "InitialLaw",
    "LogDensityLedger",
    "Neighborhood",
    "NoiseBank",
    "PathFunctional",
    "PdeGrid",
    "PdeSolution",
    "RankG",
    "TimeGrid",
    "VolatilitySpec",
    "accumulate_log_density",
    "chaos_gap",
    "check_bound",
    "compare_particle_pde",
    "contraction_report",
    "default_pde_grid",
    "empirical_cdf",
    "euler_step",
    "eval_drift",
    "fd_solve",
    "kl_hist",
    "make_constant_drift",
    "make_mean_field_drift",
    "make_rank_drift",
    "marginal_tv",
    "path_relative_entropy",
    "picard_solve",
    "sanov_rate_check",
    "simulate_coupled",
    "simulate_frozen",
    "squared_drift_gap",
    "tail_probability",
    "tv_bound_chain",
    "tv_hist",
    "w1_1d",
    "zero_drift",
]
