"""Shared tolerance and iteration-cap configuration."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    """Central numerical tolerances.

    grad_check      relative error allowed against finite differences
    root_solve      relative accuracy of scalar root solves
    invariant_slack absolute slack for nonnegativity-style invariants
    acceptance_abs  absolute slack in acceptance-set comparisons
    acceptance_rel  relative slack in acceptance-set comparisons
    """

    grad_check: float = 1e-6
    root_solve: float = 1e-12
    invariant_slack: float = 1e-10
    acceptance_abs: float = 1e-12
    acceptance_rel: float = 1e-12


@dataclass(frozen=True)
class SolveCaps:
    """Iteration caps for the inexact machinery."""

    outer_acceptance: int = 200
    inner_subproblem: int = 500
    bisections: int = 60


DEFAULT_TOL = Tolerances()
DEFAULT_CAPS = SolveCaps()


class BioptError(Exception):
    """Base class for solver errors."""


class DomainViolation(BioptError):
    """Smooth-part oracle evaluated outside its domain."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class DegenerateCoefficient(BioptError):
    """Coefficient equation has no positive root (zero residual norm)."""


class SubproblemStall(BioptError):
    """Inner subproblem iteration cap exceeded."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class OptimalityReached(BioptError):
    """Anchor of a prox subproblem is already optimal to numerical precision.

    Carried upward so drivers can terminate cleanly instead of certifying an
    accepted point whose residuals are pure roundoff.
    """

    def __init__(self, message: str, point=None, g=None):
        super().__init__(message)
        self.point = point
        self.g = g


class AcceptanceFailure(BioptError):
    """Lower-level loop hit its cap before producing an acceptable point."""

    def __init__(self, message: str, residual_history=None):
        super().__init__(message)
        self.residual_history = residual_history or []


class BisectionStall(BioptError):
    """Segment-search bisection cap exceeded."""


class CertificateUndefined(BioptError):
    """Gap certificate requested before any model mass accumulated."""
