"""Kernel operators on Z = R^n x PC(r, m) and their separable inverses."""

from .functions import (
    PointwiseFunction,
    PolyFunction,
    SampledFunction,
    StateFunction,
    integration_rule,
)
from .inverse import (
    InverseKernelOperator,
    QuadratureAgreementWarning,
    apply_inverse,
    composition_residual,
    invert_separable,
    inverse_invariance_residual,
)
from .kernel import (
    BoundaryData,
    KernelOperator,
    SeparableKernelOperator,
    apply_operator,
    inner_product,
    invariance_residual,
    lk_value,
    z_norm,
)

__all__ = [
    "BoundaryData",
    "InverseKernelOperator",
    "KernelOperator",
    "PointwiseFunction",
    "PolyFunction",
    "QuadratureAgreementWarning",
    "SampledFunction",
    "SeparableKernelOperator",
    "StateFunction",
    "apply_inverse",
    "apply_operator",
    "composition_residual",
    "inner_product",
    "integration_rule",
    "invariance_residual",
    "inverse_invariance_residual",
    "invert_separable",
    "lk_value",
    "z_norm",
]
