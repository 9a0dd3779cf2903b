"""Polynomial bases, polynomial calculus and quadrature on edges, triangles
and convex polygons.

Element-local polynomials are expanded in scaled monomials

    m_{(a,b)}(x, y) = ((x - cx)/h)^a ((y - cy)/h)^b

centered at the element barycenter and scaled by the element diameter,
ordered by total degree and then lexicographically in the exponent pair.
An element-wise L2-orthonormal basis is produced from the monomials by a
modified Gram-Schmidt sweep (run twice for stability) in the element L2
inner product.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import solve_triangular
from scipy.special import roots_jacobi

from .errors import DegenerateElementError


def n_poly_2d(degree: int) -> int:
    """Dimension of the space of 2D polynomials of total degree <= degree."""
    if degree < 0:
        return 0
    return (degree + 1) * (degree + 2) // 2


@lru_cache(maxsize=None)
def monomial_exponents(degree: int) -> np.ndarray:
    """Exponent pairs (a, b) up to total degree, graded-lexicographic order."""
    pairs = [(a, d - a) for d in range(degree + 1) for a in range(d + 1)]
    return np.array(pairs, dtype=int).reshape(-1, 2)


def _safe_power(base: np.ndarray, exps: np.ndarray) -> np.ndarray:
    """base[j] ** exps[i] with 0**0 = 1, shaped (len(exps), len(base))."""
    return base[None, :] ** exps[:, None]


@dataclass
class MonomialBasis:
    """Scaled, shifted monomials on one element."""

    degree: int
    center: np.ndarray
    scale: float
    exponents: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.exponents = monomial_exponents(self.degree)

    @property
    def n_members(self) -> int:
        return n_poly_2d(self.degree)

    def eval(self, points: np.ndarray) -> np.ndarray:
        """Values of all members at `points` (n, 2); returns (n_members, n)."""
        pts = np.atleast_2d(points)
        xi = (pts[:, 0] - self.center[0]) / self.scale
        eta = (pts[:, 1] - self.center[1]) / self.scale
        a = self.exponents[:, 0]
        b = self.exponents[:, 1]
        return _safe_power(xi, a) * _safe_power(eta, b)

    def grad(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(d/dx, d/dy) of all members at `points`, each (n_members, n)."""
        pts = np.atleast_2d(points)
        xi = (pts[:, 0] - self.center[0]) / self.scale
        eta = (pts[:, 1] - self.center[1]) / self.scale
        a = self.exponents[:, 0]
        b = self.exponents[:, 1]
        pow_a = _safe_power(xi, np.maximum(a - 1, 0))
        pow_b = _safe_power(eta, np.maximum(b - 1, 0))
        gx = a[:, None] * pow_a * _safe_power(eta, b) / self.scale
        gy = b[:, None] * _safe_power(xi, a) * pow_b / self.scale
        return gx, gy


@dataclass
class OrthoBasis:
    """L2(E)-orthonormal polynomial basis expressed over a MonomialBasis.

    `coeffs` is lower triangular in the graded monomial ordering: row i gives
    the monomial expansion of the i-th orthonormal member, and the leading
    n_poly_2d(d) rows span exactly the degree-d polynomials for any d <= degree.
    """

    degree: int
    mono: MonomialBasis
    coeffs: np.ndarray
    element_id: int | None = None

    @property
    def n_members(self) -> int:
        return self.coeffs.shape[0]

    def eval(self, points: np.ndarray) -> np.ndarray:
        return self.coeffs @ self.mono.eval(points)

    def grad(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        gx, gy = self.mono.grad(points)
        return self.coeffs @ gx, self.coeffs @ gy

    def to_monomial(self, ortho_coeffs: np.ndarray) -> np.ndarray:
        """Monomial coefficients of sum_i ortho_coeffs[i] * q_i."""
        ortho_coeffs = np.asarray(ortho_coeffs, dtype=float)
        m = ortho_coeffs.shape[0]
        return self.coeffs[:m].T @ ortho_coeffs

    def from_monomial(self, mono_coeffs: np.ndarray) -> np.ndarray:
        """Orthonormal coefficients of a polynomial given in monomial coords."""
        mono_coeffs = np.asarray(mono_coeffs, dtype=float)
        m = mono_coeffs.shape[0]
        return solve_triangular(self.coeffs[:m, :m].T, mono_coeffs, lower=False)


@dataclass
class QuadRule:
    """Positive-weight quadrature rule in physical coordinates."""

    points: np.ndarray
    weights: np.ndarray
    order: int

    def integrate(self, values: np.ndarray) -> float | np.ndarray:
        return values @ self.weights


@dataclass
class GaussLobattoRule:
    """Gauss-Lobatto nodes/weights on [-1, 1] for edge value dofs."""

    degree: int
    nodes: np.ndarray
    weights: np.ndarray


def gauss_lobatto(p: int) -> GaussLobattoRule:
    """p+1 Gauss-Lobatto nodes on [-1, 1]: roots of (1 - x^2) P_p'(x).

    Newton-refined from Chebyshev-Lobatto initial guesses; exact for
    polynomials of degree <= 2p - 1.
    """
    if p < 1:
        raise ValueError(f"Gauss-Lobatto rule needs p >= 1, got {p}")
    n = p + 1
    x = np.cos(np.pi * np.arange(n) / p)
    vand = np.zeros((n, n))
    x_prev = x + 1.0
    for _ in range(100):
        if np.max(np.abs(x - x_prev)) <= 1e-15:
            break
        vand[:, 0] = 1.0
        vand[:, 1] = x
        for k in range(1, p):
            vand[:, k + 1] = ((2 * k + 1) * x * vand[:, k] - k * vand[:, k - 1]) / (k + 1)
        x_prev = x
        x = x_prev - (x_prev * vand[:, p] - vand[:, p - 1]) / (n * vand[:, p])
    w = 2.0 / (p * n * vand[:, p] ** 2)
    return GaussLobattoRule(degree=p, nodes=x[::-1].copy(), weights=w[::-1].copy())


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre nodes/weights on [-1, 1]."""
    x, w = leggauss(n)
    return x, w


@lru_cache(maxsize=None)
def _reference_triangle_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    n = order // 2 + 1
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    xl, wl = leggauss(n)
    xi = (xj + 1.0) / 2.0
    wxi = wj / 4.0
    t = (xl + 1.0) / 2.0
    wt = wl / 2.0
    pts = np.empty((n * n, 2))
    wts = np.empty(n * n)
    k = 0
    for i in range(n):
        for j in range(n):
            pts[k, 0] = xi[i]
            pts[k, 1] = (1.0 - xi[i]) * t[j]
            wts[k] = wxi[i] * wt[j]
            k += 1
    return pts, wts


def triangle_quadrature(order: int) -> QuadRule:
    """Rule on the reference triangle (0,0)-(1,0)-(0,1), exact to `order`.

    Collapsed Gauss-Jacobi x Gauss-Legendre tensor construction; all weights
    positive, order//2 + 1 points per direction.
    """
    if order < 1:
        raise ValueError(f"quadrature order must be >= 1, got {order}")
    pts, wts = _reference_triangle_rule(order)
    return QuadRule(points=pts.copy(), weights=wts.copy(), order=order)


def map_to_triangle(rule: QuadRule, tri: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map a reference-triangle rule onto the physical triangle `tri` (3, 2)."""
    v0, v1, v2 = tri
    e1 = v1 - v0
    e2 = v2 - v0
    det = e1[0] * e2[1] - e1[1] * e2[0]
    pts = v0[None, :] + np.outer(rule.points[:, 0], e1) + np.outer(rule.points[:, 1], e2)
    return pts, rule.weights * abs(det)


def element_quadrature(mesh, element_id: int, order: int) -> QuadRule:
    """Quadrature on a convex polygonal element via its fan subtriangulation."""
    sub = mesh.subtriangulate(element_id)
    ref = triangle_quadrature(order)
    pts = []
    wts = []
    for tri in sub.triangle_coords():
        p, w = map_to_triangle(ref, tri)
        pts.append(p)
        wts.append(w)
    return QuadRule(points=np.vstack(pts), weights=np.concatenate(wts), order=order)


def orthonormalize(basis: MonomialBasis, quad: QuadRule) -> OrthoBasis:
    """Modified Gram-Schmidt in the L2 inner product induced by `quad`.

    The quadrature must be exact to twice the basis degree on the element.
    Runs the orthogonalization sweep twice per member, which keeps the Gram
    defect near machine precision also for high degrees.
    """
    vals = basis.eval(quad.points).astype(float)
    w = quad.weights
    n = basis.n_members
    coeffs = np.eye(n)
    norms0 = np.sqrt(np.maximum((vals * vals) @ w, 0.0))
    for i in range(n):
        for _ in range(2):
            for j in range(i):
                proj = (vals[i] * vals[j]) @ w
                vals[i] -= proj * vals[j]
                coeffs[i] -= proj * coeffs[j]
        nrm = np.sqrt(max((vals[i] * vals[i]) @ w, 0.0))
        if not nrm > 1e-13 * norms0[i]:
            raise DegenerateElementError(
                f"Gram matrix numerically singular while orthonormalizing "
                f"member {i} (degree {basis.degree})"
            )
        vals[i] /= nrm
        coeffs[i] /= nrm
    return OrthoBasis(degree=basis.degree, mono=basis, coeffs=coeffs)


@lru_cache(maxsize=None)
def _second_derivative_maps(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Dimensionless d2/dxi2 and d2/deta2 maps from degree p to p-2 monomials."""
    exps = monomial_exponents(degree)
    n_lo = n_poly_2d(degree - 2)
    index = {(int(a), int(b)): k for k, (a, b) in enumerate(monomial_exponents(max(degree - 2, 0)))}
    dxx = np.zeros((n_lo, len(exps)))
    dyy = np.zeros((n_lo, len(exps)))
    for k, (a, b) in enumerate(exps):
        if a >= 2:
            dxx[index[(a - 2, b)], k] = a * (a - 1)
        if b >= 2:
            dyy[index[(a, b - 2)], k] = b * (b - 1)
    return dxx, dyy


@lru_cache(maxsize=None)
def _derivative_maps(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Dimensionless d/dxi and d/deta maps from degree p to p-1 monomials."""
    exps = monomial_exponents(degree)
    n_lo = n_poly_2d(degree - 1)
    index = {(int(a), int(b)): k for k, (a, b) in enumerate(monomial_exponents(max(degree - 1, 0)))}
    dx = np.zeros((n_lo, len(exps)))
    dy = np.zeros((n_lo, len(exps)))
    for k, (a, b) in enumerate(exps):
        if a >= 1:
            dx[index[(a - 1, b)], k] = a
        if b >= 1:
            dy[index[(a, b - 1)], k] = b
    return dx, dy


def poly_laplacian(mono_coeffs: np.ndarray, basis: MonomialBasis) -> np.ndarray:
    """Monomial coefficients of the Laplacian of a degree-p polynomial.

    Includes the 1/h^2 chain-rule factor of the scaled coordinates; the result
    lives in the degree p-2 monomial basis (empty for p < 2).
    """
    mono_coeffs = np.asarray(mono_coeffs, dtype=float)
    dxx, dyy = _second_derivative_maps(basis.degree)
    if dxx.shape[0] == 0:
        return np.zeros(0)
    return (dxx + dyy) @ mono_coeffs / basis.scale**2


def poly_gradient(mono_coeffs: np.ndarray, basis: MonomialBasis) -> tuple[np.ndarray, np.ndarray]:
    """Monomial coefficients (degree p-1) of the two partial derivatives."""
    mono_coeffs = np.asarray(mono_coeffs, dtype=float)
    dx, dy = _derivative_maps(basis.degree)
    if dx.shape[0] == 0:
        z = np.zeros(1)
        return z, z.copy()
    return dx @ mono_coeffs / basis.scale, dy @ mono_coeffs / basis.scale


def _affine_power(alpha: float, beta: float, n: int) -> np.ndarray:
    """Ascending coefficients of (alpha + beta*t)^n."""
    out = np.array([1.0])
    base = np.array([alpha, beta])
    for _ in range(n):
        out = np.convolve(out, base)
    return out


def restrict_to_segment(
    mono_coeffs: np.ndarray, basis: MonomialBasis, a: np.ndarray, b: np.ndarray
) -> np.ndarray:
    """Restrict a 2D polynomial to the segment a->b.

    Returns ascending coefficients in the segment parameter tau in [-1, 1]
    (tau = -1 at `a`, tau = +1 at `b`; affine in arc length).
    """
    mono_coeffs = np.asarray(mono_coeffs, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    deg = 0
    exps = monomial_exponents(basis.degree)[: len(mono_coeffs)]
    mid = (a + b) / 2.0
    half = (b - a) / 2.0
    ax = (mid[0] - basis.center[0]) / basis.scale
    bx = half[0] / basis.scale
    ay = (mid[1] - basis.center[1]) / basis.scale
    by = half[1] / basis.scale
    acc = np.zeros(int(exps[:, 0].max() + exps[:, 1].max()) + 1 if len(exps) else 1)
    for (ea, eb), c in zip(exps, mono_coeffs):
        if c == 0.0:
            continue
        piece = c * np.convolve(_affine_power(ax, bx, int(ea)), _affine_power(ay, by, int(eb)))
        acc[: len(piece)] += piece
        deg = max(deg, int(ea + eb))
    return acc[: deg + 1]


def poly_normal_derivative(
    mono_coeffs: np.ndarray,
    basis: MonomialBasis,
    a: np.ndarray,
    b: np.ndarray,
    normal: np.ndarray,
) -> np.ndarray:
    """1D polynomial (ascending, tau in [-1, 1] along a->b) of grad(q) . n."""
    gx, gy = poly_gradient(mono_coeffs, basis)
    gn = normal[0] * gx + normal[1] * gy
    lo = MonomialBasis(max(basis.degree - 1, 0), basis.center, basis.scale)
    return restrict_to_segment(gn, lo, a, b)


def polyval_1d(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate an ascending-coefficient 1D polynomial."""
    return np.polynomial.polynomial.polyval(x, coeffs)


def lagrange_matrix(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Values of the Lagrange basis on `nodes` at `x`; shape (len(x), len(nodes))."""
    nodes = np.asarray(nodes, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = len(nodes)
    out = np.ones((len(x), n))
    for j in range(n):
        for k in range(n):
            if k != j:
                out[:, j] *= (x - nodes[k]) / (nodes[j] - nodes[k])
    return out
