"""Numerical Euler classes of vector bundles with non-metric connections."""

import jax

jax.config.update("jax_enable_x64", True)

from .errors import (  # noqa: E402
    ContractViolation,
    DegenerateCurveError,
    DomainError,
    EulerClassError,
    GeometryError,
    NumericalBlowup,
    RegistryError,
    SingularMetricError,
)
from .exterior import DifferentialForm, FormMatrix, matrix_wedge, pfaffian, wedge  # noqa: E402
from .fields import (  # noqa: E402
    Chart,
    CurveSegment,
    DerivativeEngine,
    FormField,
    SmoothField,
    codifferential_1,
    exterior_derivative,
    hodge_star_1,
    integrate_along_curve,
    integrate_form,
    integrate_function,
    lie_derivative_metric,
)

__all__ = [
    "ContractViolation", "DegenerateCurveError", "DomainError", "EulerClassError", "GeometryError",
    "NumericalBlowup", "RegistryError", "SingularMetricError",
    "DifferentialForm", "FormMatrix", "matrix_wedge", "pfaffian", "wedge",
    "Chart", "CurveSegment", "DerivativeEngine", "FormField", "SmoothField", "codifferential_1",
    "exterior_derivative", "hodge_star_1", "integrate_along_curve", "integrate_form", "integrate_function",
    "lie_derivative_metric",
]

__version__ = "0.1.0"
