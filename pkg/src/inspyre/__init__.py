"""Inverse saliency pyramid reconstruction network with pyramid blending for HR inference."""

from .errors import InvalidArgument

__version__ = "0.1.0"

__all__ = ["InvalidArgument", "__version__"]
