"""Monte Carlo engine for the 1-D stochastic wave equation on a dyadic light-cone lattice."""

from .kernel import (Bump, Constant, Indicator, InitialData, SigmaSpec, SigmaTraits, Tabulated,
                     WaveKernel, anderson_second_moment_oracle, bound_curves, gaussian_moment_oracle,
                     initial_wave, kernel_identities, kernel_value, sigma_traits)
from .noise import NoiseGrid, NoiseKey, Rectangle, SplicedNoise, agree_on, gaussian_at
from .solver import LatticeState, SchemeConfig, Snapshots, reference_solve, solve
from .picard import (dependence_radius, dependence_set, picard_gap_bound, picard_iterate,
                     picard_sequence, verify_cone)
from .estimators import (comparison_report, estimate_moments, field_diagnostics, holder_modulus,
                         lyapunov_fit, sup_growth, tail_curve, weighted_norm)
from .experiments import ExperimentConfig, emit_plotdata, run_experiment

__version__ = "0.1.0"
