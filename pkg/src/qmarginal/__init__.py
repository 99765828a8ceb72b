"""Desk-scale quantum marginal problems.

Consistency of local density matrices, fermionic N-representability,
weak optimization from membership oracles, the reductions between Local
Hamiltonian and Consistency, maximum-entropy Gibbs fitting and Monte
Carlo simulation of the verification protocols.
"""

from .errors import QMarginalError
from .verdict import Verdict

__version__ = "0.1.0"

__all__ = ["QMarginalError", "Verdict", "__version__"]
