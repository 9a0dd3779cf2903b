"""Exception types shared across the solver."""


class MeshError(Exception):
    """Invalid mesh topology or geometry."""


class DegenerateElementError(Exception):
    """An element is too degenerate for basis construction or projection."""


class SolverError(Exception):
    """Linear solve failed (factorization breakdown or non-convergence)."""


class ConfigError(Exception):
    """Invalid run configuration."""
