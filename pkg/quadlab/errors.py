"""Exceptions raised by quadlab.

Everything derives from `QuadlabError`. Bad inputs additionally derive from
`ValueError`; numerical breakdowns (a pole, a vanishing determinant, a complex
branch) from `ArithmeticError`, so callers can catch either family.
"""

from typing import Any


class QuadlabError(Exception):
    """Base class for all quadlab errors."""


class InputError(QuadlabError, ValueError):
    """Invalid input (base)."""


class NumericalError(QuadlabError, ArithmeticError):
    """A computation hit a singular or non-real case (base)."""


# Input errors


class InvalidSignature(InputError):
    """Family parameters have the wrong signs for a doubly ruled real quadric."""


class DegenerateAxes(InputError):
    """Two family parameters coincide."""


class OutOfRange(InputError):
    """Spectral parameter outside the admissible range."""


class OffQuadric(InputError):
    """A point expected on a quadric does not satisfy its equation."""


class BadLambda(InputError):
    """Pseudosphere weights are not positive or not unit-norm."""


class OrderingViolation(InputError):
    """Kepler parameters do not satisfy z < a <= b."""


class GridTooCoarse(InputError):
    """Too few grid nodes for the requested finite differences."""


class ArcLengthMismatch(InputError):
    """Wheel and road speeds differ, so the curves cannot roll without slipping."""


class BadSchema(InputError):
    """A job file does not follow the job schema."""


# Numerical errors


class SingularRuling(NumericalError):
    """Evaluation at (or near) the u = v pole of a central parametrization."""


class DegeneratePoint(NumericalError):
    """Elliptic coordinates collide at a point."""


class ComplexRoots(NumericalError):
    """Elliptic coordinates are not all real."""


class DegenerateFrame(NumericalError):
    """The frame triple of a rigid motion is linearly dependent."""


class DegenerateHomography(NumericalError):
    """The tangency equation for u1 is identically satisfied (or has no solution)."""


class NotInTangency(NumericalError):
    """Two points are not in tangency configuration."""


class StepTooLarge(NumericalError):
    """An integrator drifted off its constraint between re-projections."""


class RicattiBlowup(NumericalError):
    """The Ricatti solution left both projective charts within one step."""


class SingularDelta(NumericalError):
    """A Delta quantity used as a denominator vanishes."""


class NoRealBranch(NumericalError):
    """A quadrilateral closure has no real solution."""


class NewtonDivergence(NumericalError):
    """Newton's method did not converge."""


class RankDeficientSamples(NumericalError):
    """Not enough independent samples for a homography fit."""


class LatticeConflict(NumericalError):
    """A lattice fill depends on the path taken."""


class RootCollision(NumericalError):
    """The caustic root collides with the trajectory's own member."""


class NoIntersection(NumericalError):
    """A billiard chord does not meet the mirror again."""


class FirstRowVanishing(NumericalError):
    """An orthogonal field's first row lost a nonzero entry."""


class SingularClosure(NumericalError):
    """A permutability closure matrix is singular."""


class CheckFailure(QuadlabError):
    """At least one verification check exceeded its tolerance."""

    def __init__(self, message: str, report: Any = None):
        super().__init__(message)
        self.report = report
