"""Utility functions and classes."""

from app.utils.cache import ProfileCache
from app.utils.logging import set_verbosity, setup_logging

__all__ = ["ProfileCache", "set_verbosity", "setup_logging"]
