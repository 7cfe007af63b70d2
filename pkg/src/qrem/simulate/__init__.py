"""Statevector simulation, problem Hamiltonians, noisy sampling and SPSA."""
from .hamiltonians import (DiagonalHamiltonian, Term, ground_state, random_fully_connected,
                           random_max2sat, sk_2d)
from .spsa import SpsaConfig, SpsaResult, spsa_optimize
from .statevector import (covariance, hamiltonian_variance, plus_state, qaoa_state,
                          reduced_density_matrix, sample_counts, sample_measurements)

__all__ = [
    "DiagonalHamiltonian", "Term", "ground_state", "random_fully_connected", "random_max2sat", "sk_2d",
    "SpsaConfig", "SpsaResult", "spsa_optimize",
    "covariance", "hamiltonian_variance", "plus_state", "qaoa_state", "reduced_density_matrix",
    "sample_counts", "sample_measurements",
]
