"""Simulation and reconstruction of hyperentangled photon pairs."""

__version__ = "0.1.0"

from .qcore import DensityOperator, StateVector, SubsystemLayout, partial_trace, partial_transpose, tensor
from .source import SourceConfig, build_hyper_state, make_named_state, simulate_counts
from .metrics import fidelity, linear_entropy, negativity, tangle, visibility
from .bell import ChshSettings, chsh_from_counts, chsh_from_state, optimal_chsh, subspace_project
from .tomography import canonical_set, linear_inversion, mle_reconstruct

__all__ = [
    "DensityOperator",
    "StateVector",
    "SubsystemLayout",
    "partial_trace",
    "partial_transpose",
    "tensor",
    "SourceConfig",
    "build_hyper_state",
    "make_named_state",
    "simulate_counts",
    "fidelity",
    "linear_entropy",
    "negativity",
    "tangle",
    "visibility",
    "ChshSettings",
    "chsh_from_counts",
    "chsh_from_state",
    "optimal_chsh",
    "subspace_project",
    "canonical_set",
    "linear_inversion",
    "mle_reconstruct",
]
