"""Exception hierarchy for the laboratory.

Every error derives from :class:`FrameLabError`, itself a ``ValueError``, so
callers that only guard against bad values keep working.  Hypothesis
failures carry the name of the failed condition and its numerical margin.
"""

from __future__ import annotations


class FrameLabError(ValueError):
    """Base class for all laboratory errors."""


# ---------------------------------------------------------------------------
# Operator core
# ---------------------------------------------------------------------------


class InvalidOperator(FrameLabError):
    """Input is not a finite square matrix (or vector) of the right size."""


class NotSelfAdjoint(FrameLabError):
    """An operator required to be self-adjoint is not, within tolerance."""


class NotPositive(FrameLabError):
    """An operator required to be positive semidefinite is not."""


class ZeroPencil(FrameLabError):
    """The weight operator of a pencil vanishes within tolerance."""


# ---------------------------------------------------------------------------
# Frame engine
# ---------------------------------------------------------------------------


class NonRealForm(FrameLabError):
    """The controlled quadratic form has a non-negligible imaginary part."""


class NotPositiveBlock(FrameLabError):
    """``C'* pi_W C`` is not positive for one item of the system."""

    def __init__(self, index: int, min_eigenvalue: float) -> None:
        self.index = index
        self.min_eigenvalue = min_eigenvalue
        super().__init__(
            f"block {index} is not positive (smallest eigenvalue "
            f"{min_eigenvalue:.3e})"
        )


class NonSelfAdjointS(NotSelfAdjoint):
    """The controlled frame operator is not self-adjoint."""


class ZeroK(FrameLabError):
    """The operator K (or a replacement for it) vanishes within tolerance."""


class NotAFrame(FrameLabError):
    """The system has no positive lower frame bound."""


class SingularRestriction(FrameLabError):
    """The frame operator restricted to the range of K is not invertible."""


# ---------------------------------------------------------------------------
# Theorem transforms
# ---------------------------------------------------------------------------


class HypothesisFailed(FrameLabError):
    """A numerically checked theorem hypothesis does not hold."""

    def __init__(self, name: str, margin: float, detail: str = "") -> None:
        self.name = name
        self.margin = margin
        message = f"hypothesis {name!r} failed (margin {margin:.3e})"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class RangeNotContained(HypothesisFailed):
    """``range(T)`` is not contained in ``range(K)``."""


class RangesNotOrthogonal(HypothesisFailed):
    """The two operators combined by :func:`combine_k` interfere."""


class NotInvertible(FrameLabError):
    """An operator required to be invertible is singular within tolerance."""


class NotUnitary(FrameLabError):
    """An operator required to be unitary is not."""


# ---------------------------------------------------------------------------
# Front end
# ---------------------------------------------------------------------------


class InvalidConfig(FrameLabError):
    """Generator, suite or document parameters are out of range."""
