"""textgate: attentional word-image recognition with an adaptive embedding gate."""

from .estimator import TextGateRecognizer

__all__ = ["TextGateRecognizer"]
__version__ = "0.1.0"
