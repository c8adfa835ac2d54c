"""Batch figure rendering from exported run CSVs; no simulator imports."""

__version__ = "0.1.0"

from .figures import FigureSpec, SchemaError, render  # noqa: F401
