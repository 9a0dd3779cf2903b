"""Command-line driver.

    hpvem <command> --config <file> [--out <dir>] [--snapshots] [--seed <n>]

Commands: p-study, adaptive-hp, adaptive-h, mesh-gen, validate.  The config
is a single JSON document; unknown keys are rejected.  Exit codes: 0 on
success, 2 for configuration errors, 3 for data or mesh validation errors,
4 for solver failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import adaptivity, estimator, mesh as meshmod, problems
from .assembly import solve_poisson
from .errors import ConfigError, MeshError, SolverError
from .vemspace import assign_degrees

_FMT = ".17g"

_MESH_KEYS = {
    "cartesian": {"kind", "nx", "ny", "domain"},
    "lshape": {"kind", "n"},
    "voronoi": {"kind", "n_seeds", "lloyd_iters", "rng_seed", "domain"},
}
_ADAPT_KEYS = {"sigma", "gamma_h", "gamma_p", "gamma_n", "p0", "p_min", "p_max",
               "max_steps", "max_dofs", "target_eta", "solver"}
_TOP_KEYS = {"problem", "mesh", "p_min", "p_max", "adapt", "out_dir", "snapshots",
             "mesh_file"}


def _fail_keys(given: dict, allowed: set, where: str) -> None:
    unknown = set(given) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            config = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    _fail_keys(config, _TOP_KEYS, "config")
    return config


def _build_mesh(options, seed_override=None):
    if not isinstance(options, dict) or "kind" not in options:
        raise ConfigError("field 'mesh' must be an object with a 'kind'")
    kind = options["kind"]
    if kind not in _MESH_KEYS:
        raise ConfigError(f"field 'mesh.kind': unknown kind {kind!r}")
    _fail_keys(options, _MESH_KEYS[kind], "mesh")
    try:
        if kind == "cartesian":
            domain = tuple(options.get("domain", (0.0, 0.0, 1.0, 1.0)))
            return meshmod.build_cartesian(int(options["nx"]), int(options["ny"]), domain)
        if kind == "lshape":
            return meshmod.build_lshape(int(options["n"]))
        seed = options.get("rng_seed", 0) if seed_override is None else seed_override
        domain = options.get("domain", (0.0, 0.0, 1.0, 1.0))
        if isinstance(domain, list):
            domain = tuple(domain)
        return meshmod.build_voronoi(int(options["n_seeds"]), int(options.get("lloyd_iters", 0)),
                                     int(seed), domain)
    except KeyError as exc:
        raise ConfigError(f"field 'mesh.{exc.args[0]}' is required for kind {kind!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field 'mesh': {exc}") from None


def _get_problem(config: dict) -> problems.ManufacturedProblem:
    name = config.get("problem")
    if name is None:
        raise ConfigError("field 'problem' is required")
    try:
        return problems.make_problem(str(name))
    except ValueError as exc:
        raise ConfigError(f"field 'problem': {exc}") from None


def _adapt_config(config: dict) -> adaptivity.AdaptConfig:
    options = config.get("adapt", {})
    if not isinstance(options, dict):
        raise ConfigError("field 'adapt' must be an object")
    _fail_keys(options, _ADAPT_KEYS, "adapt")
    cfg = adaptivity.AdaptConfig(**options)
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(f"field 'adapt': {exc}") from None
    return cfg


def _write_rows(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for cell in row:
            if cell is None:
                cells.append("")
            elif isinstance(cell, float):
                cells.append(format(cell, _FMT))
            else:
                cells.append(str(cell))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


def cmd_p_study(config: dict, out_dir: Path, snapshots: bool, seed) -> int:
    problem = _get_problem(config)
    mesh = _build_mesh(config.get("mesh"), seed)
    p_lo = int(config.get("p_min", 2))
    p_hi = int(config.get("p_max", 6))
    if p_lo < 1 or p_hi < p_lo:
        raise ConfigError(f"field 'p_min'/'p_max': invalid range {p_lo}..{p_hi}")
    rows = []
    for p in range(p_lo, p_hi + 1):
        deg = assign_degrees(mesh, np.full(mesh.n_elements, p, dtype=int))
        sol = solve_poisson(mesh, deg, problem.f, problem.g)
        rep = estimator.report(sol)
        err_n = problems.energy_error(problem, sol)[1]
        eta_n = rep.eta_comp / problem.h1_seminorm
        rows.append([p, sol.dofmap.n_dofs, err_n, eta_n,
                     problems.effectivity(eta_n, err_n)])
    _write_rows(out_dir / "p_study.csv",
                ["p", "n_dofs", "error", "eta_comp", "effectivity"], rows)
    return 0


def cmd_adaptive(config: dict, out_dir: Path, snapshots: bool, seed, h_only: bool) -> int:
    problem = _get_problem(config)
    mesh = _build_mesh(config.get("mesh"), seed)
    cfg = _adapt_config(config)
    want_snaps = snapshots or bool(config.get("snapshots", False))
    runner = adaptivity.run_h_only if h_only else adaptivity.run
    result = runner(problem, mesh, cfg, keep_snapshots=want_snaps)
    rows = [[r.step, r.n_elements, r.n_dofs, r.p_min, r.p_max, r.eta_comp,
             r.energy_error, r.n_h_refined, r.n_p_refined] for r in result.rows]
    _write_rows(out_dir / "history.csv",
                ["step", "n_elements", "n_dofs", "p_min", "p_max", "eta_comp",
                 "energy_error", "n_h_refined", "n_p_refined"], rows)
    if want_snaps:
        for step, snap_mesh, snap_deg in result.snapshots:
            path = out_dir / f"snapshot_step_{step:02d}.json"
            path.write_text(snap_mesh.to_json(snap_deg.p_elem))
    return 0


def cmd_mesh_gen(config: dict, out_dir: Path, snapshots: bool, seed) -> int:
    mesh = _build_mesh(config.get("mesh"), seed)
    (out_dir / "mesh.json").write_text(mesh.to_json())
    return 0


def cmd_validate(config: dict, out_dir: Path, snapshots: bool, seed) -> int:
    mesh_file = config.get("mesh_file")
    if mesh_file is None:
        raise ConfigError("field 'mesh_file' is required for validate")
    try:
        text = Path(mesh_file).read_text()
    except OSError as exc:
        raise MeshError(f"cannot read mesh file: {exc}") from None
    mesh, _ = meshmod.PolyMesh.from_json(text)
    quality = meshmod.validate(mesh)
    lines = [
        f"vertices:  {mesh.n_vertices}",
        f"edges:     {mesh.n_edges}",
        f"elements:  {mesh.n_elements}",
        f"area:      {format(mesh.total_area(), _FMT)}",
        f"convex elements: {int(quality.convex.sum())}/{mesh.n_elements}",
        f"min edge/diameter ratio: {format(float(quality.min_edge_ratio.min()), _FMT)}",
        f"min inradius ratio:      {format(float(quality.inradius_ratio.min()), _FMT)}",
        f"max interior angle:      {format(float(quality.max_interior_angle.max()), _FMT)}",
    ]
    report_text = "\n".join(lines) + "\n"
    sys.stdout.write(report_text)
    (out_dir / "quality.txt").write_text(report_text)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="hpvem", description=__doc__)
    parser.add_argument("command",
                        choices=["p-study", "adaptive-hp", "adaptive-h",
                                 "mesh-gen", "validate"])
    parser.add_argument("--config", required=True, help="JSON configuration file")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--snapshots", action="store_true",
                        help="write per-step mesh+degree snapshots")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the mesh rng seed")
    args = parser.parse_args(argv)

    try:
        config = _load_config(args.config)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "p-study":
            return cmd_p_study(config, out_dir, args.snapshots, args.seed)
        if args.command == "adaptive-hp":
            return cmd_adaptive(config, out_dir, args.snapshots, args.seed, h_only=False)
        if args.command == "adaptive-h":
            return cmd_adaptive(config, out_dir, args.snapshots, args.seed, h_only=True)
        if args.command == "mesh-gen":
            return cmd_mesh_gen(config, out_dir, args.snapshots, args.seed)
        return cmd_validate(config, out_dir, args.snapshots, args.seed)
    except ConfigError as exc:
        print(f"hpvem: config error: {exc}", file=sys.stderr)
        return 2
    except MeshError as exc:
        print(f"hpvem: mesh/data error: {exc}", file=sys.stderr)
        return 3
    except SolverError as exc:
        print(f"hpvem: solver failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
