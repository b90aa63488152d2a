"""Lip-dynamics biometric engine.

Extracts a three-level feature hierarchy from landmark-annotated lip
video (static shape, six-region texture statistics, shape-independent
lip-print motion, landmark-trajectory correlation) and verifies
identity with a Siamese embedding trained by contrastive loss.
"""

__version__ = "0.1.0"

from .config import Config

__all__ = ["Config", "__version__"]
