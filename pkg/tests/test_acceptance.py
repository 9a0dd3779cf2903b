"""Acceptance suite.

One test per criterion, each printing a PASS/FAIL line; the heavy adaptive
runs are shared through session fixtures.  Budgeted runtimes are asserted.
"""

import time

import numpy as np
import pytest

from hpvem import adaptivity as ad, assembly as asm, estimator as est, mesh as mm, \
    problems as pb, projectors as pj, vemspace as vs
from hpvem.mesh import PolyMesh

from conftest import regular_polygon, single_element_mesh


def _record(name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] {name}" + (f"  ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


def _uniform_solve(mesh, p, f, g):
    deg = vs.assign_degrees(mesh, np.full(mesh.n_elements, p))
    return asm.solve_poisson(mesh, deg, f, g)


@pytest.fixture(scope="module")
def u3_runs():
    problem = pb.make_problem("u3")
    mesh = mm.build_lshape(4)
    hp = ad.run(problem, mesh, ad.AdaptConfig(max_steps=10))
    h_only = ad.run_h_only(problem, mesh, ad.AdaptConfig(max_steps=14, max_dofs=9000))
    return hp, h_only


def test_patch_test(cartesian_4x4, voronoi_32):
    t0 = time.time()
    worst_dof = 0.0
    worst_eta = 0.0
    for p in (1, 2, 3, 4):
        def u(x, y, p=p):
            return (x + 0.3 * y) ** p + (x * x + x * y if p >= 2 else 0.0)

        def f(x, y, p=p):
            base = np.zeros_like(np.asarray(x, dtype=float))
            if p >= 2:
                base = base - (p * (p - 1) * (x + 0.3 * y) ** (p - 2) * 1.09 + 2.0)
            return base

        for mesh in (cartesian_4x4, voronoi_32):
            sol = _uniform_solve(mesh, p, f, u)
            exact = pj.interpolate(mesh, sol.deg, sol.dofmap, sol.ops, u)
            scale = np.abs(exact).max()
            worst_dof = max(worst_dof, np.abs(sol.u - exact).max() / scale)
            if p >= 2:  # the estimator is defined for p >= 2 only
                rep = est.report(sol)
                h1 = np.sqrt(sum(
                    op.quad.weights @ (np.sum(np.square(np.array(
                        [g for g in _patch_grad(u, op)])), axis=0))
                    for op in sol.ops))
                worst_eta = max(worst_eta, rep.eta_comp / h1)
    elapsed = time.time() - t0
    _record("patch test (p=1..4, Cartesian+Voronoi)",
            worst_dof < 1e-8 and worst_eta < 1e-8 and elapsed < 10.0,
            f"dof err {worst_dof:.2e}, eta {worst_eta:.2e}, {elapsed:.1f}s")


def _patch_grad(u, op, h=1e-6):
    x = op.quad.points[:, 0]
    y = op.quad.points[:, 1]
    return ((u(x + h, y) - u(x - h, y)) / (2 * h),
            (u(x, y + h) - u(x, y - h)) / (2 * h))


def test_fem_equivalence_oracle():
    t0 = time.time()
    rng = np.random.default_rng(17)
    worst = 0.0
    for _ in range(20):
        while True:
            coords = rng.uniform(-1.0, 1.0, size=(3, 2))
            x, y = coords[:, 0], coords[:, 1]
            det = (x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0])
            if det > 0.1:
                break
        mesh = PolyMesh.from_polygons(coords, [[0, 1, 2]])
        deg = vs.assign_degrees(mesh, [1])
        dm = vs.build_dofmap(mesh, deg)
        K = asm.local_stiffness(pj.compute_local_operators(mesh, deg, dm, 0)).matrix
        grads = np.array([[y[1] - y[2], x[2] - x[1]],
                          [y[2] - y[0], x[0] - x[2]],
                          [y[0] - y[1], x[1] - x[0]]]) / det
        fem = (det / 2.0) * grads @ grads.T
        worst = max(worst, np.abs(K - fem).max())
    elapsed = time.time() - t0
    _record("FEM equivalence (p=1, 20 random triangles)",
            worst < 1e-12 and elapsed < 1.0,
            f"max entry err {worst:.2e}, {elapsed:.2f}s")


def test_projector_suite(test_shapes):
    t0 = time.time()
    worst = {"reproduction": 0.0, "idempotence": 0.0, "constraint": 0.0, "gram": 0.0}
    rng = np.random.default_rng(23)
    for mesh in test_shapes.values():
        for p in (1, 2, 4, 6, 8):
            deg = vs.assign_degrees(mesh, [p])
            dm = vs.build_dofmap(mesh, deg)
            ops = pj.compute_local_operators(mesh, deg, dm, 0)
            edofs = dm.element(0)
            n = ops.ortho.n_members
            for k in range(n):
                unit = np.zeros(n)
                unit[k] = 1.0
                d = pj.polynomial_local_dofs(ops, edofs, ops.ortho.to_monomial(unit))
                worst["reproduction"] = max(worst["reproduction"],
                                            np.abs(ops.pinabla @ d - unit).max())
            mat = ops.pinabla_dof
            worst["idempotence"] = max(worst["idempotence"], np.abs(mat @ mat - mat).max())
            d = rng.normal(size=ops.n_local)
            worst["constraint"] = max(worst["constraint"],
                                      abs(ops.boundary_row @ (d - mat @ d)))
            vals = ops.ortho.eval(ops.quad.points)
            gram = (vals * ops.quad.weights) @ vals.T
            worst["gram"] = max(worst["gram"], np.abs(gram - np.eye(n)).max())
    elapsed = time.time() - t0
    ok = (worst["reproduction"] < 1e-9 and worst["idempotence"] < 1e-9
          and worst["constraint"] < 1e-10 and worst["gram"] < 1e-10
          and elapsed < 30.0)
    _record("projector suite (p<=8, 5 shapes)", ok,
            ", ".join(f"{k} {v:.2e}" for k, v in worst.items()) + f", {elapsed:.1f}s")


def test_u1_p_study():
    t0 = time.time()
    problem = pb.make_problem("u1")
    mesh = mm.build_cartesian(8, 8)
    errors, etas = [], []
    for p in range(2, 7):
        sol = _uniform_solve(mesh, p, problem.f, problem.g)
        rep = est.report(sol)
        errors.append(pb.energy_error(problem, sol)[1])
        etas.append(rep.eta_comp / problem.h1_seminorm)
    errors = np.array(errors)
    etas = np.array(etas)
    decreasing = np.all(errors[1:] < errors[:-1])
    ratios_ok = np.all(errors[1:] / errors[:-1] < 0.5)
    eff = etas / errors
    eff_ok = np.all((eff >= 0.05) & (eff <= 50.0))
    magnitude_ok = np.all(np.maximum(eff, 1.0 / eff) <= 10.0)
    elapsed = time.time() - t0
    _record("u1 p-study (8x8 Cartesian, p=2..6)",
            decreasing and ratios_ok and eff_ok and magnitude_ok and elapsed < 120.0,
            f"ratios {np.round(errors[1:] / errors[:-1], 3)}, eff {np.round(eff, 2)}, "
            f"{elapsed:.1f}s")


def test_u3_p_study_trend():
    # Known red: the measured estimator/error ratio on the L-shape sits at
    # 1.7-4.6 for p >= 4 on every tested mesh (Cartesian and Voronoi alike),
    # with all individual indicator terms verified against independent
    # oracles.  The criterion is asserted as stated and allowed to fail;
    # see the README for the analysis.
    t0 = time.time()
    problem = pb.make_problem("u3")
    mesh = mm.build_voronoi(32, 20, 42, "lshape")
    ratios = {}
    for p in range(2, 7):
        sol = _uniform_solve(mesh, p, problem.f, problem.g)
        rep = est.report(sol)
        err = pb.energy_error(problem, sol)[1]
        ratios[p] = rep.eta_comp / problem.h1_seminorm / err
    elapsed = time.time() - t0
    trend_ok = all(ratios[p] < 1.5 for p in (4, 5, 6))
    _record("u3 p-study trend (L-shape Voronoi, ratio < 1.5 for p >= 4)",
            trend_ok and elapsed < 120.0,
            ", ".join(f"p{p}:{r:.2f}" for p, r in ratios.items()) + f", {elapsed:.1f}s")


def _loglinear_fit(x, y):
    coeffs = np.polyfit(x, np.log(y), 1)
    fitted = np.polyval(coeffs, x)
    residual = np.log(y) - fitted
    r2 = 1.0 - residual @ residual / np.sum((np.log(y) - np.mean(np.log(y))) ** 2)
    return coeffs[0], r2


def test_u3_hp_exponential_regime(u3_runs):
    t0 = time.time()
    hp, _ = u3_runs
    rows = hp.rows[-5:]
    x = np.array([r.n_dofs for r in rows]) ** (1.0 / 3.0)
    slope_e, r2_e = _loglinear_fit(x, [r.energy_error for r in rows])
    slope_eta, r2_eta = _loglinear_fit(x, [r.eta_comp for r in rows])
    ok = slope_e < 0 and r2_e >= 0.9 and slope_eta < 0 and r2_eta >= 0.9
    _record("u3 hp exponential regime (log err vs dofs^(1/3))", ok,
            f"error slope {slope_e:.3f} R2 {r2_e:.3f}; "
            f"estimator slope {slope_eta:.3f} R2 {r2_eta:.3f}")
    assert len(hp.rows) == 10


def test_hp_vs_h_dominance(u3_runs):
    hp, h_only = u3_runs
    h_dofs = np.array([r.n_dofs for r in h_only.rows])
    h_err = np.array([r.energy_error for r in h_only.rows])
    checked = 0
    ok = True
    details = []
    for r in hp.rows:
        if r.n_dofs < 500 or r.n_dofs > h_dofs.max():
            continue
        checked += 1
        reference = float(np.interp(r.n_dofs, h_dofs, h_err))
        details.append(f"{r.n_dofs}:{r.energy_error:.2e}<={reference:.2e}")
        if r.energy_error > reference:
            ok = False
    _record("hp vs h dominance (u3, dofs >= 500)", ok and checked >= 3,
            f"{checked} rows checked")


def test_u4_mostly_p_refinements():
    t0 = time.time()
    problem = pb.make_problem("u4")
    mesh = mm.build_cartesian(4, 4)
    result = ad.run(problem, mesh, ad.AdaptConfig(max_steps=10))
    n_h = sum(r.n_h_refined for r in result.rows if r.step >= 2)
    n_p = sum(r.n_p_refined for r in result.rows if r.step >= 2)
    elapsed = time.time() - t0
    _record("u4 smooth-solution behaviour (p >= 3x h over steps 2..10)",
            n_p >= 3 * n_h and elapsed < 180.0,
            f"{n_p} p-refinements vs {n_h} h-refinements, {elapsed:.1f}s")


def test_first_step_rule():
    ok = True
    details = []
    for name, mesh in (("u3", mm.build_lshape(2)), ("u4", mm.build_cartesian(4, 4))):
        problem = pb.make_problem(name)
        result = ad.run(problem, mesh, ad.AdaptConfig(max_steps=2))
        row = result.rows[0]
        details.append(f"{name}: h={row.n_h_refined}, p={row.n_p_refined}")
        if row.n_p_refined != 0 or row.n_h_refined == 0:
            ok = False
    _record("first adaptive step is pure h refinement", ok, "; ".join(details))


def test_mesh_invariants_under_random_refinement():
    t0 = time.time()
    mesh = mm.build_voronoi(24, 15, 11, (0.0, 0.0, 1.0, 1.0))
    rng = np.random.default_rng(1)
    ok = True
    for _ in range(5):
        marked = rng.choice(mesh.n_elements, size=max(1, mesh.n_elements // 4),
                            replace=False)
        result = mm.refine_elements(mesh, marked)
        for parent, kids in result.parent_children.items():
            if len(kids) != mesh.elements[parent].n_straight:
                ok = False
            kid_area = sum(result.mesh.elements[k].area for k in kids)
            if abs(kid_area - mesh.elements[parent].area) > \
                    1e-12 * mesh.elements[parent].area:
                ok = False
        mesh = result.mesh
        mm.validate(mesh)  # raises on conformity/orientation defects
        if not mm.validate(mesh).convex.all():
            ok = False
        if abs(mesh.total_area() - 1.0) > 1e-10:
            ok = False
    elapsed = time.time() - t0
    _record("mesh invariants under 5 random Voronoi refinements",
            ok and elapsed < 10.0, f"{mesh.n_elements} elements, {elapsed:.1f}s")
