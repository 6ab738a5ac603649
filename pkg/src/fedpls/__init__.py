"""Federated multi-agent power control for physical-layer secrecy in
multi-cell networks."""
from ._accel import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
