"""Continuous weak-measurement simulation of superconducting-qubit readout.

Three mutually cross-validating engines: a joint qubit-cavity trajectory
integrator in a truncated Fock basis, a reduced qubit-only trajectory
equation with time-dependent measurement rates, and a coarse-grained
Bayesian update from accumulated homodyne records; plus joint-pure-state
tracking with a disentangling cavity reset, and SNR/efficiency/purity
analysis.
"""
from .analysis import (ConsistencyReport, EnsembleSummary,
                       efficiency_curve, ensemble_vs_unconditional,
                       purity_curve, snr_dispersive_analytic,
                       snr_empirical, snr_longitudinal_analytic)
from .bayes import (BayesUpdate, bayes_update, compute_update,
                    gaussian_functional, purity_factor, random_phase)
from .cavity import (CavityPair, Rates, alpha_dispersive, alpha_longitudinal,
                     integrate_alpha_ode, rates_at)
from .config import ReadoutConfig, Scheme, optimal_lo_phase, suggested_n_max
from .effective import (QubitState, effective_current, run_effective_trajectory,
                        step_effective, trace_distance, unconditional_evolve)
from .errors import (ConfigError, GridMismatchError, InvariantViolation,
                     PositivityError, TruncationError)
from .fullsme import (FockJointState, OperatorSet, build_operators,
                      reduce_qubit, run_trajectory_full, step_sme)
from .jointstate import (JointPureState, propagate_joint,
                         qubit_reduced_from_joint, reset, reset_full_sme)
from .kernels import BACKEND
from .records import HomodyneRecord

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BayesUpdate", "CavityPair", "ConfigError",
    "ConsistencyReport", "EnsembleSummary", "FockJointState",
    "GridMismatchError", "HomodyneRecord", "InvariantViolation",
    "JointPureState", "OperatorSet", "PositivityError", "QubitState",
    "Rates", "ReadoutConfig", "Scheme", "TruncationError",
    "alpha_dispersive", "alpha_longitudinal", "bayes_update",
    "build_operators", "compute_update", "effective_current",
    "efficiency_curve", "ensemble_vs_unconditional", "gaussian_functional",
    "integrate_alpha_ode", "optimal_lo_phase", "propagate_joint",
    "purity_curve", "purity_factor", "qubit_reduced_from_joint",
    "random_phase", "rates_at", "reduce_qubit", "reset", "reset_full_sme",
    "run_effective_trajectory", "run_trajectory_full", "snr_dispersive_analytic",
    "snr_empirical", "snr_longitudinal_analytic", "step_effective", "step_sme",
    "suggested_n_max", "trace_distance", "unconditional_evolve",
]
