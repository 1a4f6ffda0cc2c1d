"""Shadowing, Cantor-set construction and chain recurrence for model homeomorphisms."""

from .certificates import Certificate, DynamicsError
from .systems import make_system

__all__ = ["Certificate", "DynamicsError", "make_system"]
__version__ = "0.1.0"
