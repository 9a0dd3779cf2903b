"""The hp refinement loop: SOLVE -> ESTIMATE -> MARK -> REFINE.

Marked elements whose combined indicator reaches its prediction are
h-refined, the rest are p-refined; predictions forecast the next indicator
under an analyticity hypothesis.  On the first step the predictions are
seeded at half of the computed indicators, which makes every marked element
h-refine.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import solve_poisson
from .errors import SolverError
from .estimator import EstimatorReport, report
from .mesh import PolyMesh, refine_elements
from .problems import ManufacturedProblem, energy_error
from .vemspace import DegreeMap, assign_degrees


@dataclass
class AdaptConfig:
    sigma: float = 0.75
    gamma_h: float | None = None  # None: use the child count N^E of each element
    gamma_p: float = 0.4
    gamma_n: float = 1.0
    p0: int = 2
    p_min: int = 2
    p_max: int = 12
    max_steps: int = 10
    max_dofs: int | None = None
    target_eta: float | None = None
    solver: str = "direct"

    def validate(self) -> None:
        if not 0.0 < self.sigma < 1.0:
            raise ValueError(f"sigma must be in (0, 1), got {self.sigma}")
        if not 0.0 < self.gamma_p < 1.0:
            raise ValueError(f"gamma_p must be in (0, 1), got {self.gamma_p}")
        if self.gamma_n <= 0.0:
            raise ValueError(f"gamma_n must be positive, got {self.gamma_n}")
        if self.gamma_h is not None and self.gamma_h <= 0.0:
            raise ValueError(f"gamma_h must be positive, got {self.gamma_h}")
        if self.p0 < self.p_min or self.p_min < 1:
            raise ValueError(f"need p0 >= p_min >= 1, got p0={self.p0}, p_min={self.p_min}")
        if self.p_max < self.p0:
            raise ValueError(f"p_max must be >= p0, got {self.p_max}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass
class AdaptState:
    mesh: PolyMesh
    deg: DegreeMap
    eta_pred_sq: np.ndarray
    step: int


@dataclass
class HistoryRow:
    step: int
    n_elements: int
    n_dofs: int
    p_min: int
    p_max: int
    eta_comp: float
    energy_error: float | None
    n_h_refined: int
    n_p_refined: int


@dataclass
class RunResult:
    rows: list[HistoryRow]
    state: AdaptState
    snapshots: list[tuple[int, PolyMesh, DegreeMap]] = field(default_factory=list)


def mark(rep: EstimatorReport, sigma: float) -> np.ndarray:
    """Elements whose combined squared indicator reaches sigma times the mean."""
    return np.nonzero(rep.eta_comp_sq_elem >= sigma * rep.eta_bar_sq)[0]


def decide_and_refine(state: AdaptState, marked: np.ndarray, rep: EstimatorReport,
                      config: AdaptConfig) -> tuple[AdaptState, int, int]:
    """Split the marked set into h- and p-refinements and apply both."""
    comp = rep.eta_comp_sq_elem
    pred = state.eta_pred_sq
    p_old = state.deg.p_elem
    h_set = []
    p_set = []
    for eid in marked:
        eid = int(eid)
        if comp[eid] >= pred[eid] or p_old[eid] >= config.p_max:
            h_set.append(eid)
        else:
            p_set.append(eid)
    p_set_mask = np.zeros(state.mesh.n_elements, dtype=bool)
    p_set_mask[p_set] = True

    result = refine_elements(state.mesh, h_set)
    new_mesh = result.mesh
    new_p = np.empty(new_mesh.n_elements, dtype=int)
    new_pred = np.empty(new_mesh.n_elements)
    for old, new in result.carried.items():
        new_p[new] = p_old[old] + (1 if p_set_mask[old] else 0)
        if p_set_mask[old]:
            new_pred[new] = config.gamma_p * comp[old]
        else:
            new_pred[new] = config.gamma_n * pred[old]
    for old, children in result.parent_children.items():
        n_children = len(children)
        gamma_h = config.gamma_h if config.gamma_h is not None else float(n_children)
        value = gamma_h / n_children * 0.25 ** p_old[old] * comp[old]
        for child in children:
            new_p[child] = p_old[old]
            new_pred[child] = value
    new_deg = assign_degrees(new_mesh, new_p)
    new_state = AdaptState(mesh=new_mesh, deg=new_deg, eta_pred_sq=new_pred,
                           step=state.step + 1)
    return new_state, len(h_set), len(p_set)


def run(problem: ManufacturedProblem, mesh: PolyMesh, config: AdaptConfig,
        h_only: bool = False, keep_snapshots: bool = False) -> RunResult:
    """Drive the adaptive loop until a stop criterion fires.

    One history row per step, holding the state that was solved at that step
    and the refinement counts applied afterwards.  A solver failure aborts
    the loop with the partial history preserved."""
    config.validate()
    deg = assign_degrees(mesh, np.full(mesh.n_elements, config.p0, dtype=int))
    state = AdaptState(mesh=mesh, deg=deg, eta_pred_sq=np.zeros(mesh.n_elements),
                       step=0)
    rows: list[HistoryRow] = []
    snapshots: list[tuple[int, PolyMesh, DegreeMap]] = []
    norm = problem.h1_seminorm
    for step in range(config.max_steps):
        try:
            sol = solve_poisson(state.mesh, state.deg, problem.f, problem.g,
                                method=config.solver)
        except SolverError:
            if rows:
                return RunResult(rows=rows, state=state, snapshots=snapshots)
            raise
        rep = report(sol)
        err = energy_error(problem, sol)[1]
        eta_n = rep.eta_comp / norm
        if step == 0 and not h_only:
            state.eta_pred_sq = rep.eta_comp_sq_elem / 2.0
        if h_only:
            state.eta_pred_sq = np.zeros(state.mesh.n_elements)

        marked = mark(rep, config.sigma)
        n_dofs = sol.dofmap.n_dofs
        stop = (
            step == config.max_steps - 1
            or (config.max_dofs is not None and n_dofs >= config.max_dofs)
            or (config.target_eta is not None and eta_n <= config.target_eta)
            or rep.eta_comp_sq == 0.0
            or len(marked) == 0
        )
        if keep_snapshots:
            snapshots.append((step, state.mesh, state.deg))
        if stop:
            rows.append(HistoryRow(step, state.mesh.n_elements, n_dofs,
                                   int(state.deg.p_elem.min()), int(state.deg.p_elem.max()),
                                   eta_n, err, 0, 0))
            break
        new_state, n_h, n_p = decide_and_refine(state, marked, rep, config)
        rows.append(HistoryRow(step, state.mesh.n_elements, n_dofs,
                               int(state.deg.p_elem.min()), int(state.deg.p_elem.max()),
                               eta_n, err, n_h, n_p))
        state = new_state
    return RunResult(rows=rows, state=state, snapshots=snapshots)


def run_h_only(problem: ManufacturedProblem, mesh: PolyMesh, config: AdaptConfig,
               keep_snapshots: bool = False) -> RunResult:
    """Pure h-adaptivity: predictions pinned to zero, every marked element
    is h-refined."""
    return run(problem, mesh, config, h_only=True, keep_snapshots=keep_snapshots)
