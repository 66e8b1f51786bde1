from .tensor import Tensor, as_tensor, is_grad_enabled, no_grad
from .gradcheck import GradCheckReport, check_parameters, grad_check
from .rng import GENERATOR_NAME, make_rng, msra_mirrored, msra_normal
from . import ops

__all__ = [
    "Tensor",
    "as_tensor",
    "is_grad_enabled",
    "no_grad",
    "GradCheckReport",
    "check_parameters",
    "grad_check",
    "GENERATOR_NAME",
    "make_rng",
    "msra_mirrored",
    "msra_normal",
    "ops",
]
