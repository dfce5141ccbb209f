"""Figures from spillsim output files; no simulator internals are imported."""

from .figures import FIGURE_KINDS, FigureSpec, decay_points, fit_log_slope, plot
from .io import SchemaError, read_ledger, read_pairs, read_sweep

__version__ = "0.1.0"
