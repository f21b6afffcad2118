"""spinsim: exact and fast approximate simulation of finite long-range
spin systems, with deterministic companions and analytic error bounds."""

from .coupling import (CoupledErrorSeries, PoissonStreamBank, bench_speedup,
                       couple_run, fit_delta, normalized_error_experiment)
from .fastsum import KernelSpec, TreeConfig, convolve_fft, sum_dense, sum_tree
from .models import (ConfigError, DenseModel, GaussConv1DModel,
                     IsingKac2DModel, NormConstants, RateModel, load_model,
                     rate_function)
from .ode import (BoundReport, OdeSolution, SolverError, e_growth_bound,
                  euler_bound, midpoint_bound, solve_error_field, solve_rho,
                  solve_rho_delta)
from .simulate import (InitSpec, SimConfig, TrajectoryRecord,
                       simulate_euler, simulate_exact,
                       simulate_independent_sites, simulate_midpoint,
                       simulate_poisson_tau_leap, transition_probability)

__version__ = "0.1.0"

__all__ = [
    "BoundReport", "ConfigError", "CoupledErrorSeries", "DenseModel",
    "GaussConv1DModel", "InitSpec", "IsingKac2DModel", "KernelSpec",
    "NormConstants", "OdeSolution", "PoissonStreamBank", "RateModel",
    "SimConfig", "SolverError", "TrajectoryRecord", "TreeConfig",
    "bench_speedup", "convolve_fft", "couple_run", "e_growth_bound",
    "euler_bound", "fit_delta", "load_model", "midpoint_bound",
    "normalized_error_experiment", "rate_function", "simulate_euler",
    "simulate_exact", "simulate_independent_sites", "simulate_midpoint",
    "simulate_poisson_tau_leap", "solve_error_field", "solve_rho",
    "solve_rho_delta", "sum_dense", "sum_tree", "transition_probability",
]
