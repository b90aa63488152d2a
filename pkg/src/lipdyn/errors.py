"""Exception hierarchy for the lip-dynamics engine.

Three broad families map onto the CLI / service exit semantics:
usage problems (exit 1), data problems (exit 2) and numeric failures
(exit 3). Every exception carries a short machine-readable ``kind``
(its class name) so the service layer and CLI can report it on a
single diagnostic line.
"""

from __future__ import annotations


class LipdynError(Exception):
    """Base class for all engine errors."""

    exit_code = 2

    @property
    def kind(self) -> str:
        return type(self).__name__


class DataError(LipdynError):
    """Invalid or unusable input data."""

    exit_code = 2


class NumericError(LipdynError):
    """Numeric failure during computation (divergence, non-finite values)."""

    exit_code = 3


class MalformedRecord(DataError):
    """A landmark interchange record violates the grammar.

    ``line`` is the 1-based line number of the offending record.
    """

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class IoFailure(DataError):
    """Underlying I/O operation failed."""


class DegenerateBox(DataError):
    """Mouth bounding box has zero area."""


class DegenerateGeometry(DataError):
    """Collinear or coincident landmarks prevent contour loop closure."""


class EmptyMask(DataError):
    """Lip mask contains no set pixels."""


class TooFewPixels(DataError):
    """Region has fewer than two valid co-occurring pixel pairs."""


class NotNormalized(DataError):
    """Co-occurrence matrix does not sum to one."""


class WindowTooShort(DataError):
    """Trajectory window has fewer than two frames."""


class UnknownPhoneme(DataError):
    """Phoneme symbol is not in the vowel category table."""


class DimensionMismatch(DataError):
    """Feature vector length disagrees with the model version."""


class VersionMismatch(DataError):
    """Template and model versions disagree."""


class TooFewWindows(DataError):
    """Not enough windows to enroll a subject."""


class NoPositivePairs(DataError):
    """Training pair set contains no same-subject pairs."""


class NoNegativePairs(DataError):
    """Training pair set contains no different-subject pairs."""


class EmptySet(DataError):
    """A score set required to be nonempty is empty."""


class EmptyInput(DataError):
    """Decision set is empty."""


class InsufficientData(DataError):
    """Too few windows per subject for the requested fold count."""


class NonFiniteLoss(NumericError):
    """Training loss became non-finite; training aborted."""
