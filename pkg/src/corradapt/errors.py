"""Exception types shared across the package."""
from __future__ import annotations


class ValidationError(ValueError):
    """An input violates a documented precondition or invariant."""


class SizeCapError(ValidationError):
    """A dense-table operation would exceed the configured entry cap."""


class ZeroProbabilityError(ValidationError):
    """A conditioning event has zero probability under the measure."""


class GameAborted(RuntimeError):
    """A game role raised mid-interaction; carries the partial transcript."""

    def __init__(self, message: str, transcript=None):
        super().__init__(message)
        self.transcript = transcript
