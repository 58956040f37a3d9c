"""Finite-mode fermion Fock space toolkit for forward and backward quantum
stochastic equations and their duality identities."""

__version__ = "0.1.0"

from .clifford_core import (  # noqa: E402
    AdaptednessError,
    FockBasis,
    ModeGrid,
    SizeError,
    brownian_increment,
    brownian_motion,
    clifford_mul,
    conditional_expectation,
    creation,
    field,
    left_mul_matrix,
    parity,
    right_increment,
    right_mul_matrix,
    vacuum,
)
from .forward_qsde import LinearCoefficients, ProcessSpace, solve_linear  # noqa: E402
from .backward_adjoint import (  # noqa: E402
    AdjointData,
    assemble_relaxed,
    representation_P,
    solve_adjoint_bqsde,
    solve_linear_bqsde,
)
from .identity_lab import IdentityReport, convergence_order  # noqa: E402
