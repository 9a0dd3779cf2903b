"""Computable a posteriori error indicators.

Per element: the internal residual eta_E (Laplacian of the projected
solution plus the projected load, measured coefficient-exactly in the
orthonormal basis), the stabilization term zeta_E and the data oscillation
rho_E.  Per internal edge: the projected normal-derivative jump eta_e.
Each internal edge contributes half of its squared indicator to both
incident elements, so the global sum counts every edge exactly once.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import polyquad
from .assembly import Solution
from .projectors import laplacian_in_ortho


@dataclass
class EstimatorReport:
    eta_elem: np.ndarray
    zeta: np.ndarray
    rho: np.ndarray
    eta_edge: np.ndarray  # NaN on boundary edges, which carry no indicator
    eta_p_sq: np.ndarray  # bulk + half of the incident internal edge squares
    eta_comp_sq_elem: np.ndarray
    eta_comp_sq: float
    eta_bar_sq: float

    @property
    def eta_comp(self) -> float:
        return float(np.sqrt(self.eta_comp_sq))


def _f_moments(sol: Solution, eid: int) -> np.ndarray:
    """L2-orthonormal coefficients of Pi0 f on one element."""
    op = sol.ops[eid]
    n2 = op.n_moments
    if n2 == 0:
        return np.zeros(0)
    fv = np.asarray(sol.f(op.quad.points[:, 0], op.quad.points[:, 1]), dtype=float)
    return op.ortho.eval(op.quad.points)[:n2] @ (op.quad.weights * fv)


def internal_residual(sol: Solution, eid: int) -> tuple[np.ndarray, float]:
    """Residual polynomial (orthonormal coefficients, degree p-2) and eta_E."""
    op = sol.ops[eid]
    if op.degree < 2:
        raise ValueError(f"element {eid}: internal residual needs p >= 2, got {op.degree}")
    lap = laplacian_in_ortho(op.ortho)
    coeffs = lap @ sol.pinabla_coeffs(eid) + _f_moments(sol, eid)
    h = sol.mesh.elements[eid].diameter
    eta = h / op.degree * float(np.linalg.norm(coeffs))
    return coeffs, eta


def edge_residual(sol: Solution, edge_id: int) -> tuple[np.ndarray, float]:
    """Jump of the projected normal derivative across an internal edge.

    Returns ascending coefficients in tau in [-1, 1] along the edge's
    canonical direction, and eta_e."""
    mesh = sol.mesh
    edge = mesh.edges[edge_id]
    if edge.is_boundary:
        raise ValueError(f"edge {edge_id} is a boundary edge and carries no indicator")
    plus = edge.elem_plus
    minus = edge.elems[0] if edge.elems[1] == plus else edge.elems[1]
    a = mesh.vertices[edge.v0]
    b = mesh.vertices[edge.v1]
    sides = {}
    for sign, eid in ((1.0, plus), (-1.0, minus)):
        op = sol.ops[eid]
        mono = op.ortho.to_monomial(sol.pinabla_coeffs(eid))
        sides[sign] = polyquad.poly_normal_derivative(
            mono, op.mono, a, b, edge.unit_normal)
    deg = max(len(sides[1.0]), len(sides[-1.0]))
    jump = np.zeros(deg)
    jump[:len(sides[1.0])] += sides[1.0]
    jump[:len(sides[-1.0])] -= sides[-1.0]
    p_e = int(sol.deg.p_edge[edge_id])
    xq, wq = polyquad.gauss_legendre(p_e + 1)
    length = float(np.linalg.norm(b - a))
    norm_sq = (length / 2.0) * float(wq @ polyquad.polyval_1d(jump, xq) ** 2)
    eta = np.sqrt(length / p_e) * np.sqrt(max(norm_sq, 0.0))
    return jump, eta


def stab_term(sol: Solution, eid: int) -> float:
    """zeta_E: the stabilization energy of the non-polynomial part.

    Evaluated residual-first, (I - Pi)d before the diagonal form, so that a
    polynomial dof vector yields zeta at the rounding floor of the residual
    rather than of the assembled quadratic form."""
    d = sol.u[sol.dofmap.element(eid).global_ids]
    residual = d - sol.ops[eid].pinabla_dof @ d
    d_recipe = sol.local_systems[eid].d_recipe
    return float(np.sqrt(max(d_recipe @ residual**2, 0.0)))


def data_oscillation(sol: Solution, eid: int) -> float:
    """rho_E = (h/p) || f - Pi0 f ||_{0,E} by element quadrature."""
    op = sol.ops[eid]
    fv = np.asarray(sol.f(op.quad.points[:, 0], op.quad.points[:, 1]), dtype=float)
    n2 = op.n_moments
    if n2:
        coeffs = op.ortho.eval(op.quad.points)[:n2] @ (op.quad.weights * fv)
        fv = fv - coeffs @ op.ortho.eval(op.quad.points)[:n2]
    h = sol.mesh.elements[eid].diameter
    return h / op.degree * float(np.sqrt(max(op.quad.weights @ fv**2, 0.0)))


def report(sol: Solution) -> EstimatorReport:
    """All indicators plus the global and mean combined estimators."""
    mesh = sol.mesh
    nel = mesh.n_elements
    eta_elem = np.empty(nel)
    zeta = np.empty(nel)
    rho = np.empty(nel)
    for eid in range(nel):
        eta_elem[eid] = internal_residual(sol, eid)[1]
        zeta[eid] = stab_term(sol, eid)
        rho[eid] = data_oscillation(sol, eid)

    eta_edge = np.full(mesh.n_edges, np.nan)
    eta_p_sq = eta_elem**2
    for e in mesh.edges:
        if e.is_boundary:
            continue
        eta_edge[e.id] = edge_residual(sol, e.id)[1]
        for eid in e.elems:
            eta_p_sq[eid] += 0.5 * eta_edge[e.id] ** 2

    comp_elem = eta_p_sq + zeta**2 + rho**2
    comp = float(comp_elem.sum())
    return EstimatorReport(
        eta_elem=eta_elem, zeta=zeta, rho=rho, eta_edge=eta_edge,
        eta_p_sq=eta_p_sq, eta_comp_sq_elem=comp_elem, eta_comp_sq=comp,
        eta_bar_sq=comp / nel,
    )


def report_to_csv(rep: EstimatorReport, sol: Solution, path) -> None:
    """One row per element: id, h_E, p_E, eta_E, edge share, zeta, rho, comp."""
    mesh = sol.mesh
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["element", "h", "p", "eta_E", "eta_edge_share",
                         "zeta_E", "rho_E", "eta_comp_sq"])
        for eid in range(mesh.n_elements):
            edge_share = np.sqrt(max(rep.eta_p_sq[eid] - rep.eta_elem[eid] ** 2, 0.0))
            writer.writerow([
                eid,
                format(mesh.elements[eid].diameter, ".17g"),
                int(sol.deg.p_elem[eid]),
                format(rep.eta_elem[eid], ".17g"),
                format(edge_share, ".17g"),
                format(rep.zeta[eid], ".17g"),
                format(rep.rho[eid], ".17g"),
                format(rep.eta_comp_sq_elem[eid], ".17g"),
            ])
