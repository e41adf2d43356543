"""Exception hierarchy shared by every module of the package."""

import numpy as np


class EulerClassError(Exception):
    """Base class for all errors raised by :mod:`eulerclass`."""


class ContractViolation(EulerClassError, ValueError):
    """An operation was called with arguments outside its contract."""


class DomainError(EulerClassError, ValueError):
    """A point lies outside the parameter domain of a chart."""


class SingularMetricError(EulerClassError, np.linalg.LinAlgError):
    """A metric that must be inverted or factorized is degenerate."""


class DegenerateCurveError(EulerClassError, ValueError):
    """A curve has vanishing speed where a unit tangent is needed."""


class GeometryError(EulerClassError, ValueError):
    """A polygon or region is inconsistent (not closed, wrong orientation)."""


class RegistryError(EulerClassError, KeyError):
    """An unknown name was looked up in a registry."""


class NumericalBlowup(EulerClassError, FloatingPointError):
    """A field evaluation produced NaN or infinite values."""
