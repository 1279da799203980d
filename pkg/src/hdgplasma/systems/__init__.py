from .base import PdeModel, DirichletBC, NeumannBC, InadmissibleStateError
from .linear import advection_model, diffusion_model, wave_model
from .twofluid import (
    PlasmaParams,
    TwoFluidState,
    two_fluid_model,
    ideal_jacobians,
    lr_dispersion,
    IDEAL_FIELDS,
)

__all__ = [
    "PdeModel",
    "DirichletBC",
    "NeumannBC",
    "InadmissibleStateError",
    "advection_model",
    "diffusion_model",
    "wave_model",
    "PlasmaParams",
    "TwoFluidState",
    "two_fluid_model",
    "ideal_jacobians",
    "lr_dispersion",
    "IDEAL_FIELDS",
]
