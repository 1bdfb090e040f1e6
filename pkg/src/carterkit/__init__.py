"""Carter-like constants of motion from separable Hamiltonians.

Build constants from a declared separable structure, then check them
numerically: Poisson brackets, cross-chart consistency, functional rank and
drift along integrated orbits.
"""

from .errors import CarterError
from .system_model import PhaseState, SeparableStructure, SystemDefinition, load_system
from .theorem import assemble_hamiltonian, carter_constants, nested_constants

__all__ = [
    "CarterError",
    "PhaseState",
    "SeparableStructure",
    "SystemDefinition",
    "assemble_hamiltonian",
    "carter_constants",
    "load_system",
    "nested_constants",
]
__version__ = "0.1.0"
