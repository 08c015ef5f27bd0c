from .engine import (
    CompGraph,
    NonFiniteError,
    ShapeError,
    Tensor,
    backward,
    forward_eval,
    grad,
    no_grad,
)
from .gradcheck import GradCheckReport, grad_check

__all__ = [
    "CompGraph",
    "GradCheckReport",
    "NonFiniteError",
    "ShapeError",
    "Tensor",
    "backward",
    "forward_eval",
    "grad",
    "grad_check",
    "no_grad",
]
