"""Exception hierarchy shared by every module."""

from __future__ import annotations


class KSError(Exception):
    """Base class for all package errors."""


class CollisionError(KSError, ValueError):
    """A radius vanished where the formulation requires r > 0."""


class DegenerateBasisError(KSError, ValueError):
    pass


class ProjectionSingularityError(KSError, ValueError):
    """The point to project sits on the stereographic pole."""


class IntegrationError(KSError, RuntimeError):
    """Integrator failure; ``last`` holds the last valid (s, y) sample."""

    def __init__(self, message, last=None, trajectory=None):
        super().__init__(message)
        self.last = last
        self.trajectory = trajectory


class DiagnosticError(KSError, ValueError):
    pass


class ScenarioError(KSError, ValueError):
    """Scenario input could not be parsed or failed validation."""

    def __init__(self, message, path=None):
        if path:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path
