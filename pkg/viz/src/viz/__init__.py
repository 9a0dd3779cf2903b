"""Offline rendering of hpvem snapshots and convergence CSVs."""

from .plots import EmptyInputError, SchemaError, plot_convergence, plot_mesh

__all__ = ["EmptyInputError", "SchemaError", "plot_convergence", "plot_mesh"]
