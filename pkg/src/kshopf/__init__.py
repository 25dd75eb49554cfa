"""KS regularization as a Hopf fibration: algebra, regularized N-body
propagation and topological-stability diagnostics."""

from kshopf.errors import (
    CollisionError,
    DegenerateBasisError,
    DiagnosticError,
    IntegrationError,
    KSError,
    ProjectionSingularityError,
    ScenarioError,
)

__version__ = "0.1.0"

__all__ = [
    "CollisionError",
    "DegenerateBasisError",
    "DiagnosticError",
    "IntegrationError",
    "KSError",
    "ProjectionSingularityError",
    "ScenarioError",
]
