"""Exception hierarchy.

Every error carries a machine-readable ``code`` and the CLI exit status it
maps to (1 parse, 2 precondition, 3 non-convergence).
"""

from __future__ import annotations


class TorsionError(Exception):
    code = "error"
    exit_code = 2

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.code)
        self.details = details

    def to_dict(self) -> dict:
        return {"code": self.code, "message": str(self), "details": self.details}


class PreconditionError(TorsionError, ValueError):
    code = "Precondition"


class InvalidPolygon(PreconditionError):
    code = "InvalidPolygon"


class OriginNotInterior(PreconditionError):
    code = "OriginNotInterior"


class Unbounded(PreconditionError):
    code = "Unbounded"


class VertexRay(PreconditionError):
    code = "VertexRay"


class ZeroArgument(PreconditionError):
    code = "ZeroArgument"


class NonConcentration(PreconditionError):
    """Measure is concentrated in a closed half-circle."""

    code = "NonConcentration"


class ExcludedExponent(PreconditionError):
    code = "ExcludedExponent"


class EmptyInterior(PreconditionError):
    code = "EmptyInterior"


class MeshFailure(TorsionError):
    code = "MeshFailure"
    exit_code = 2


class NonConvergence(TorsionError):
    code = "NonConvergence"
    exit_code = 3


class IllConditioned(NonConvergence):
    code = "IllConditioned"


class DegenerateFacet(NonConvergence):
    code = "DegenerateFacet"


class NonConcentrationDiagnostic(NonConvergence):
    """Iterates escaped the diameter bound during a Minkowski solve."""

    code = "NonConcentration"
