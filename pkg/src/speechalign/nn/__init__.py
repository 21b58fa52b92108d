"""Differentiable-computation substrate: tensors, primitive ops, parameter
stores, and the finite-difference gradient checker."""

from speechalign.nn import ops
from speechalign.nn.gradcheck import GradCheckReport, grad_check
from speechalign.nn.params import ParamStore
from speechalign.nn.tensor import DTYPES, Tensor, constant, no_grad, set_checked

__all__ = [
    "DTYPES",
    "GradCheckReport",
    "ParamStore",
    "Tensor",
    "constant",
    "grad_check",
    "no_grad",
    "ops",
    "set_checked",
]
