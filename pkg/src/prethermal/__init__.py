"""Normal-form construction and exact-diagonalisation checks for prethermal spin chains."""
from .pauli_algebra import (
    CapacityError,
    ErrorLedger,
    ExtensiveOperator,
    LadderString,
    LocalTerm,
    NumberOperator,
    TruncationPolicy,
    commutator,
    kappa_norm,
    multiply,
    pauli,
    truncate,
)
from .homological import average_over_flow, solve_homological
from .conjugation import ContractionError, conjugate, lemma1_bound, lemma2_estimates
from .normal_form import NormalFormParams, compute_eps0, dress, run, step, theory_constants
from .dense_verify import densify, heisenberg_drift, effective_dynamics_error, spectrum_integerness
from .models import Lattice, ising

__version__ = "0.1.0"
