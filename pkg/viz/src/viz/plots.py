"""Render solver outputs: polygonal meshes colored by degree and
convergence curves from history / p-study CSV files.

Pure file-to-figure transformations; every plotted value is taken verbatim
from the input documents, nothing is recomputed.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.collections import PolyCollection


class SchemaError(Exception):
    """Input file does not match the documented mesh/CSV schemas."""


class EmptyInputError(Exception):
    """CSV carries a header but no data rows."""


KINDS = ("mesh-degrees", "convergence-p", "convergence-sqrt", "convergence-cbrt",
         "hp-vs-h")


def load_snapshot(path: str | Path) -> tuple[np.ndarray, list[list[int]], np.ndarray]:
    try:
        doc = json.loads(Path(path).read_text())
        vertices = np.asarray(doc["vertices"], dtype=float)
        elements = [list(map(int, loop)) for loop in doc["elements"]]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"not a mesh snapshot: {exc}") from None
    if vertices.ndim != 2 or vertices.shape[1] != 2 or not elements:
        raise SchemaError("snapshot must hold (n,2) vertices and nonempty elements")
    for loop in elements:
        if len(loop) < 3 or max(loop) >= len(vertices) or min(loop) < 0:
            raise SchemaError("element loop references missing vertices")
    degrees = doc.get("degrees")
    if degrees is not None:
        degrees = np.asarray(degrees, dtype=int)
        if len(degrees) != len(elements):
            raise SchemaError("degrees array does not match the element count")
    else:
        degrees = np.ones(len(elements), dtype=int)
    return vertices, elements, degrees


def load_csv(path: str | Path) -> dict[str, np.ndarray]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise EmptyInputError(f"{path}: empty file")
            rows = list(reader)
    except OSError as exc:
        raise SchemaError(f"cannot read CSV: {exc}") from None
    if not rows:
        raise EmptyInputError(f"{path}: no data rows")
    columns = {}
    for name in reader.fieldnames:
        values = [row[name] for row in rows]
        try:
            columns[name] = np.array([float(v) if v != "" else np.nan for v in values])
        except (TypeError, ValueError):
            raise SchemaError(f"{path}: non-numeric column {name!r}") from None
    return columns


def plot_mesh(snapshot_path: str | Path, ax=None):
    """Polygon fill colored by the local degree, with edges drawn."""
    vertices, elements, degrees = load_snapshot(snapshot_path)
    if ax is None:
        _, ax = plt.subplots(figsize=(6, 6))
    polys = [vertices[loop] for loop in elements]
    collection = PolyCollection(polys, array=degrees.astype(float),
                                edgecolors="black", linewidths=0.7, cmap="viridis")
    collection.set_clim(degrees.min() - 0.5, degrees.max() + 0.5)
    ax.add_collection(collection)
    ax.autoscale_view()
    ax.set_aspect("equal")
    ax.figure.colorbar(collection, ax=ax, label="degree", shrink=0.85)
    ax.set_title(f"{len(elements)} elements, degrees {degrees.min()}..{degrees.max()}")
    return ax.figure


def _axis_data(columns: dict[str, np.ndarray], kind: str) -> tuple[np.ndarray, str]:
    if kind == "convergence-p":
        if "p" in columns:
            return columns["p"], "p"
        raise SchemaError("kind convergence-p needs a 'p' column")
    if "n_dofs" not in columns:
        raise SchemaError(f"kind {kind} needs an 'n_dofs' column")
    if kind == "convergence-sqrt":
        return np.sqrt(columns["n_dofs"]), "sqrt(dofs)"
    return np.cbrt(columns["n_dofs"]), "cbrt(dofs)"


def _error_columns(columns: dict[str, np.ndarray]):
    have = []
    for name, label in (("error", "error"), ("energy_error", "error"),
                        ("eta_comp", "estimator")):
        if name in columns:
            have.append((columns[name], label))
    if not have:
        raise SchemaError("no error/estimator columns found")
    return have


def plot_convergence(csv_paths, kind: str = "convergence-p", ax=None):
    """Semilog-y error and estimator curves; several files overlay."""
    if kind not in KINDS or kind == "mesh-degrees":
        raise SchemaError(f"unknown convergence kind {kind!r}")
    if isinstance(csv_paths, (str, Path)):
        csv_paths = [csv_paths]
    if kind == "hp-vs-h" and len(csv_paths) < 2:
        raise SchemaError("kind hp-vs-h needs two CSV files to compare")
    if ax is None:
        _, ax = plt.subplots(figsize=(6.5, 5))
    styles = ("o-", "s--", "d:", "^-.")
    xlabel = ""
    for i, path in enumerate(csv_paths):
        columns = load_csv(path)
        x, xlabel = _axis_data(columns, "convergence-cbrt" if kind == "hp-vs-h" else kind)
        stem = Path(path).stem
        for values, label in _error_columns(columns):
            ax.semilogy(x, values, styles[i % len(styles)],
                        label=f"{stem}: {label}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("normalized value")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    return ax.figure
