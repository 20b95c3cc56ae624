"""contactlab: a numerical laboratory for contact Hamiltonian dynamics,
spectral-invariant contracts, quasi-states and quasi-measures on explicit
model contact manifolds."""

from .models import (
    ChartPoint,
    ContactModel,
    MODEL_NAMES,
    R3_STANDARD,
    S1_CIRCLE,
    T3_UNIT_COTANGENT,
    build_model,
    reeb_flow,
)

__version__ = "0.1.0"

__all__ = [
    "ChartPoint",
    "ContactModel",
    "MODEL_NAMES",
    "R3_STANDARD",
    "S1_CIRCLE",
    "T3_UNIT_COTANGENT",
    "build_model",
    "reeb_flow",
    "__version__",
]
