"""Hamiltonian dynamics driven by vacuum-fluctuation noise.

Submodules
----------
phase_core
    Catalog Hamiltonians, phase-space states, minimal-uncertainty dispersions.
stability
    Variational matrices, mode classification, Lyapunov spectra.
sde_engine
    Noisy Hamilton equations and reproducible multi-path integration.
ensemble_stats
    Ensemble moments, slope/rate fits and the covariance moment oracle.
fokker_planck
    Finite-volume phase-space master equation.
scenario_cli
    Scenario files, the built-in catalog and the ``stochmech`` command.
"""

from __future__ import annotations

from ._version import __version__
from .kernels import BACKEND
from .phase_core import (
    HamiltonianModel,
    PhaseState,
    builtin_model,
    evaluate_derivatives,
    evaluate_energy,
    evaluate_hessian,
    minimal_uncertainty_dispersions,
)
from .stability import classify_modes, linearize, lyapunov_spectrum
from .sde_engine import NoiseSpec, integrate_path, simulate_paths
from .ensemble_stats import (
    InitialDistribution,
    covariance_ode_oracle,
    exponential_rate_fit,
    kick_ensemble,
    run_ensemble,
    variance_slope,
)
from .fokker_planck import (
    DistributionGrid,
    MasterEqConfig,
    build_grid,
    evolve_master_equation,
    gibbs_entropy,
)

__all__ = [
    "__version__",
    "BACKEND",
    "HamiltonianModel",
    "PhaseState",
    "builtin_model",
    "evaluate_derivatives",
    "evaluate_energy",
    "evaluate_hessian",
    "minimal_uncertainty_dispersions",
    "classify_modes",
    "linearize",
    "lyapunov_spectrum",
    "NoiseSpec",
    "integrate_path",
    "simulate_paths",
    "InitialDistribution",
    "covariance_ode_oracle",
    "exponential_rate_fit",
    "kick_ensemble",
    "run_ensemble",
    "variance_slope",
    "DistributionGrid",
    "MasterEqConfig",
    "build_grid",
    "evolve_master_equation",
    "gibbs_entropy",
]
