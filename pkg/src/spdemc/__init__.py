"""Stochastic finite differences and multilevel Monte Carlo for basket loss models."""

from .fdcore import (CREDIT_PARAMS, GridSpec, InitialCondition, ModelParams,
                     SolverState, apply_monitoring, discrete_mass, exact_density,
                     milstein_step_pentadiagonal, milstein_step_tridiagonal,
                     project_initial, solve_path)
from .paths import BrownianPath, SeedSpec, coarsen_path, generate_fine_path
from .stability import (build_stability_matrices, check_stability,
                        fourier_symbols, ms_amplification,
                        verify_matrix_eigenstructure)
from .mlmc import (MlmcConfig, MlmcResult, complexity_regime, level_sample,
                   optimal_allocation, run_mlmc)
from .credit import (PaymentSchedule, TrancheSpec, loss_from_state,
                     protection_leg, tranche_notional, tranche_spread)
from .particles import BasketSpec, LossPath, sde_timestep_mlmc, simulate_basket

__version__ = "0.1.0"
