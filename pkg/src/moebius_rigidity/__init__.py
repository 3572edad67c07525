"""Boundary calculus and circumcenter extension for compact deformations of H^2."""
from .errors import *  # noqa: F401,F403

__version__ = "0.1.0"
