"""Batch rendering of flgi-trials study CSVs into publication-style figures."""

__version__ = "0.1.0"

from .figures import FigureSpec, plot_null, plot_power  # noqa: F401
