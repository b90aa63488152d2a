"""Failure types for the extraction tool.

Exit codes mirror the verifier CLI's convention: 1 for usage problems,
2 for bad input data or missing backends.
"""


class ExtractorError(Exception):
    exit_code = 2

    @property
    def kind(self) -> str:
        return type(self).__name__


class BadInput(ExtractorError):
    """Input path is missing, unreadable, or holds no frames."""


class DetectorUnavailable(ExtractorError):
    """The requested detector backend or its model file is not present."""


class NoFaceInAnyFrame(ExtractorError):
    """Every frame of the input failed detection; nothing to write."""
