"""Standalone 68-point landmark extraction to the interchange format."""

from .detectors import (
    Detector,
    DlibRegressionTreesDetector,
    TemplateFitDetector,
    make_detector,
)
from .errors import BadInput, DetectorUnavailable, ExtractorError, NoFaceInAnyFrame
from .extract import ExtractionManifest, extract

__version__ = "0.1.0"

__all__ = [
    "BadInput",
    "Detector",
    "DetectorUnavailable",
    "DlibRegressionTreesDetector",
    "ExtractionManifest",
    "ExtractorError",
    "NoFaceInAnyFrame",
    "TemplateFitDetector",
    "extract",
    "make_detector",
    "__version__",
]
