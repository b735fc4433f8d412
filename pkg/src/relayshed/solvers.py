"""Uniform interface to the in-process LP/MILP solvers.

The mandatory backend is HiGHS as vendored by scipy: dual simplex for
LPs (vertex solutions with row duals) and branch-and-bound for MILPs.
A GLPK backend (via cvxopt, when installed) is kept purely for
cross-checking fixture optima against an independent solver.

Row duals are reported as sensitivities of the model-sense objective to
the row's right-hand side, so named duals keep the sign conventions of
the formulations that declared the rows.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from relayshed.formulations import AlgebraicModel, Key

CAP_INDICATOR = "indicator_constraints"
CAP_TARGET = "target_cutoff"
CAP_WARM_START = "warm_start"
CAP_BASIC = "basic_solutions"


class SolverError(RuntimeError):
    pass


class BackendCapabilityError(SolverError):
    pass


@dataclass
class SolveOptions:
    time_limit_s: float = 600.0
    target_objective: float | None = None  # stop early once the incumbent reaches it
    emphasis: str = "default"  # "default" | "find_feasible"
    warm_start: dict[Key, float] | None = None
    require_basic_solution: bool = False
    thread_count: int = 1
    random_seed: int = 0
    mip_gap_tol: float = 1e-4
    feasibility_tol: float = 1e-6
    log_path: str | None = None

    def __post_init__(self):
        if not self.time_limit_s > 0:
            raise ValueError("time_limit_s must be positive")
        if self.thread_count < 1:
            raise ValueError("thread_count must be >= 1")


@dataclass
class SolveResult:
    status: str  # optimal | feasible_time_limit | feasible_target_reached |
    #              infeasible | unbounded | error
    objective: float
    best_bound: float
    gap: float
    wall_time_s: float
    values: dict[Key, float] = field(default_factory=dict)
    duals: dict[Key, float] = field(default_factory=dict)
    incumbent_log: list[tuple[float, float]] = field(default_factory=list)
    message: str = ""

    @property
    def has_solution(self) -> bool:
        return self.status in ("optimal", "feasible_time_limit", "feasible_target_reached")


def relative_gap(objective: float, best_bound: float) -> float:
    if not (np.isfinite(objective) and np.isfinite(best_bound)):
        return float("inf")
    return abs(best_bound - objective) / max(1e-10, abs(objective))


# ---------------------------------------------------------------------------
# Model -> array conversion shared by the backends
# ---------------------------------------------------------------------------


@dataclass
class _Arrays:
    var_keys: list[Key]
    c: np.ndarray  # minimization coefficients
    obj_sign: float  # model objective = obj_sign * (c @ x) + offset
    offset: float
    lb: np.ndarray
    ub: np.ndarray
    integrality: np.ndarray
    a_matrix: sp.csr_matrix
    row_lb: np.ndarray
    row_ub: np.ndarray
    row_keys: list[Key]
    row_senses: list[str]


def _to_arrays(model: AlgebraicModel) -> _Arrays:
    var_keys = list(model.variables)
    index = {k: i for i, k in enumerate(var_keys)}
    n = len(var_keys)
    lb = np.full(n, -np.inf)
    ub = np.full(n, np.inf)
    integrality = np.zeros(n)
    for i, k in enumerate(var_keys):
        v = model.variables[k]
        lb[i], ub[i] = v.lb, v.ub
        if v.kind == "binary":
            integrality[i] = 1.0
    obj_sign = -1.0 if model.sense == "max" else 1.0
    c = np.zeros(n)
    for k, coef in model.objective.items():
        c[index[k]] = obj_sign * coef

    rows, cols, vals = [], [], []
    row_lb, row_ub, row_keys, row_senses = [], [], [], []
    for r_i, row in enumerate(model.rows.values()):
        for vk, coef in row.coeffs.items():
            rows.append(r_i)
            cols.append(index[vk])
            vals.append(coef)
        row_keys.append(row.key)
        row_senses.append(row.sense)
        if row.sense == "<=":
            row_lb.append(-np.inf)
            row_ub.append(row.rhs)
        elif row.sense == ">=":
            row_lb.append(row.rhs)
            row_ub.append(np.inf)
        else:
            row_lb.append(row.rhs)
            row_ub.append(row.rhs)
    a_matrix = sp.coo_matrix((vals, (rows, cols)), shape=(len(row_keys), n)).tocsr()
    return _Arrays(var_keys=var_keys, c=c, obj_sign=obj_sign, offset=model.objective_offset,
                   lb=lb, ub=ub, integrality=integrality, a_matrix=a_matrix,
                   row_lb=np.array(row_lb), row_ub=np.array(row_ub),
                   row_keys=row_keys, row_senses=row_senses)


# ---------------------------------------------------------------------------
# HiGHS via scipy
# ---------------------------------------------------------------------------

_LP_STATUS = {0: "optimal", 1: "feasible_time_limit", 2: "infeasible", 3: "unbounded"}


class ScipyHighsBackend:
    """HiGHS as shipped inside scipy.optimize.

    LPs run through dual simplex, so optimal solutions are basic (vertex)
    solutions and row duals are available. MILPs run through the HiGHS
    branch-and-bound; warm starts, incumbent callbacks, and native target
    cutoffs are not exposed by scipy, so those capabilities are absent
    and callers degrade as documented.
    """

    name = "highs"

    def capabilities(self) -> frozenset[str]:
        return frozenset({CAP_BASIC})

    def solve(self, model: AlgebraicModel, opts: SolveOptions | None = None) -> SolveResult:
        opts = opts or SolveOptions()
        if model.has_indicators:
            raise BackendCapabilityError(
                f"backend '{self.name}' does not support indicator constraints; "
                "solve the big-M reformulation instead or select an indicator-capable backend"
            )
        notes = []
        if opts.warm_start:
            notes.append("warm_start ignored: backend lacks warm_start capability")
        if opts.target_objective is not None:
            notes.append("target_objective not enforced natively: backend lacks target_cutoff")
        if opts.emphasis == "find_feasible":
            notes.append("emphasis hint recorded; backend exposes no heuristic-effort knob")
        arrays = _to_arrays(model)
        start = time.perf_counter()
        try:
            if not model.variables:
                result = self._solve_constant(model, opts)
            elif model.is_mip:
                result = self._solve_mip(model, arrays, opts)
            else:
                result = self._solve_lp(model, arrays, opts)
        except SolverError:
            raise
        except Exception as exc:  # solver crash: wrap with context
            self._dump_on_error(model, opts)
            raise SolverError(f"backend '{self.name}' failed on model '{model.name}': {exc}") from exc
        result.wall_time_s = time.perf_counter() - start
        if notes:
            result.message = "; ".join([result.message] + notes) if result.message else "; ".join(notes)
        if result.status == "error":
            self._dump_on_error(model, opts)
        self._write_log(model, opts, result)
        return result

    def _solve_constant(self, model: AlgebraicModel, opts: SolveOptions) -> SolveResult:
        """Degenerate model with no variables: constant-feasibility check."""
        tol = opts.feasibility_tol
        for row in model.rows.values():
            lhs = 0.0
            feasible = {"<=": lhs <= row.rhs + tol, ">=": lhs >= row.rhs - tol,
                        "==": abs(lhs - row.rhs) <= tol}[row.sense]
            if not feasible:
                return SolveResult(status="infeasible", objective=float("nan"),
                                   best_bound=float("nan"), gap=float("inf"), wall_time_s=0.0,
                                   message=f"constant row {row.key} violated")
        obj = model.objective_offset
        return SolveResult(status="optimal", objective=obj, best_bound=obj, gap=0.0,
                           wall_time_s=0.0, duals={k: 0.0 for k in model.rows})

    def _solve_lp(self, model: AlgebraicModel, a: _Arrays, opts: SolveOptions) -> SolveResult:
        le_rows = [i for i, s in enumerate(a.row_senses) if s == "<="]
        ge_rows = [i for i, s in enumerate(a.row_senses) if s == ">="]
        eq_rows = [i for i, s in enumerate(a.row_senses) if s == "=="]
        a_ub = sp.vstack([a.a_matrix[le_rows], -a.a_matrix[ge_rows]]) if le_rows or ge_rows else None
        b_ub = np.concatenate([a.row_ub[le_rows], -a.row_lb[ge_rows]]) if a_ub is not None else None
        a_eq = a.a_matrix[eq_rows] if eq_rows else None
        b_eq = a.row_lb[eq_rows] if eq_rows else None
        res = linprog(
            c=a.c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
            bounds=np.column_stack([a.lb, a.ub]),
            method="highs-ds",
            options={"time_limit": opts.time_limit_s, "presolve": True},
        )
        status = _LP_STATUS.get(res.status, "error")
        if status == "feasible_time_limit" and res.x is None:
            status = "error"
        values, duals = {}, {}
        objective = float("nan")
        if res.x is not None:
            values = dict(zip(a.var_keys, map(float, res.x)))
            objective = a.obj_sign * float(res.fun) + a.offset
            marg_le = res.ineqlin.marginals if a_ub is not None else np.zeros(0)
            marg_eq = res.eqlin.marginals if a_eq is not None else np.zeros(0)
            for pos, i in enumerate(le_rows):
                duals[a.row_keys[i]] = a.obj_sign * float(marg_le[pos])
            for pos, i in enumerate(ge_rows):
                duals[a.row_keys[i]] = -a.obj_sign * float(marg_le[len(le_rows) + pos])
            for pos, i in enumerate(eq_rows):
                duals[a.row_keys[i]] = a.obj_sign * float(marg_eq[pos])
        best = objective if status == "optimal" else float("nan")
        return SolveResult(
            status=status, objective=objective, best_bound=best,
            gap=0.0 if status == "optimal" else float("inf"),
            wall_time_s=0.0, values=values, duals=duals,
            incumbent_log=[], message=str(res.message or ""))

    def _solve_mip(self, model: AlgebraicModel, a: _Arrays, opts: SolveOptions) -> SolveResult:
        constraints = []
        if a.a_matrix.shape[0]:
            constraints.append(LinearConstraint(a.a_matrix, a.row_lb, a.row_ub))
        res = milp(
            c=a.c, constraints=constraints, integrality=a.integrality,
            bounds=Bounds(a.lb, a.ub),
            options={"time_limit": opts.time_limit_s, "mip_rel_gap": opts.mip_gap_tol,
                     "presolve": True},
        )
        status = _LP_STATUS.get(res.status, "error")
        values = {}
        objective = float("nan")
        best = float("nan")
        if res.x is not None:
            values = dict(zip(a.var_keys, map(float, res.x)))
            objective = a.obj_sign * float(res.fun) + a.offset
            raw_bound = getattr(res, "mip_dual_bound", None)
            if raw_bound is not None and np.isfinite(raw_bound):
                best = a.obj_sign * float(raw_bound) + a.offset
            elif status == "optimal":
                best = objective
        elif status == "feasible_time_limit":
            status = "error"
        gap = relative_gap(objective, best)
        if status == "optimal":
            gap = min(gap, opts.mip_gap_tol)
        incumbents = [(0.0, objective)] if np.isfinite(objective) else []
        if (opts.target_objective is not None and np.isfinite(objective)
                and status in ("optimal", "feasible_time_limit")):
            reached = (objective >= opts.target_objective - 1e-6
                       if model.sense == "max" else objective <= opts.target_objective + 1e-6)
            if reached and status == "feasible_time_limit":
                status = "feasible_target_reached"
        return SolveResult(status=status, objective=objective, best_bound=best, gap=gap,
                           wall_time_s=0.0, values=values, duals={},
                           incumbent_log=incumbents, message=str(res.message or ""))

    def _dump_on_error(self, model: AlgebraicModel, opts: SolveOptions) -> None:
        if opts.log_path:
            Path(str(opts.log_path) + ".lp").write_text(model.to_lp_format(), encoding="utf-8")

    def _write_log(self, model: AlgebraicModel, opts: SolveOptions, result: SolveResult) -> None:
        if not opts.log_path:
            return
        lines = [
            f"model: {model.name}",
            f"variables: {len(model.variables)} rows: {len(model.rows)} "
            f"binaries: {sum(1 for v in model.variables.values() if v.kind == 'binary')}",
            f"status: {result.status}",
            f"objective: {result.objective!r} best_bound: {result.best_bound!r} gap: {result.gap!r}",
            f"wall_time_s: {result.wall_time_s:.3f}",
            f"message: {result.message}",
        ]
        Path(opts.log_path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# GLPK via cvxopt: optional cross-check backend
# ---------------------------------------------------------------------------


class GlpkCrosscheckBackend:
    """Minimal GLPK driver used only to cross-check fixture optima."""

    name = "glpk"

    def __init__(self):
        try:
            import cvxopt  # noqa: F401
            import cvxopt.glpk  # noqa: F401
        except Exception as exc:  # pragma: no cover - environment dependent
            raise BackendCapabilityError(f"cvxopt GLPK is not installed: {exc}") from exc

    def capabilities(self) -> frozenset[str]:
        return frozenset()

    def solve(self, model: AlgebraicModel, opts: SolveOptions | None = None) -> SolveResult:
        import cvxopt
        import cvxopt.glpk

        opts = opts or SolveOptions()
        if model.has_indicators:
            raise BackendCapabilityError(
                "backend 'glpk' does not support indicator constraints")
        a = _to_arrays(model)
        n = len(a.var_keys)
        g_rows, h_vals, eq_rows, eq_rhs = [], [], [], []
        dense = a.a_matrix.toarray()
        for i, sense in enumerate(a.row_senses):
            if sense == "<=":
                g_rows.append(dense[i]); h_vals.append(a.row_ub[i])
            elif sense == ">=":
                g_rows.append(-dense[i]); h_vals.append(-a.row_lb[i])
            else:
                eq_rows.append(dense[i]); eq_rhs.append(a.row_lb[i])
        for j in range(n):  # finite bounds become rows
            if np.isfinite(a.ub[j]):
                row = np.zeros(n); row[j] = 1.0
                g_rows.append(row); h_vals.append(a.ub[j])
            if np.isfinite(a.lb[j]):
                row = np.zeros(n); row[j] = -1.0
                g_rows.append(row); h_vals.append(-a.lb[j])
        gm = cvxopt.matrix(np.array(g_rows, dtype=float)) if g_rows else cvxopt.matrix(np.zeros((1, n)))
        hm = cvxopt.matrix(np.array(h_vals, dtype=float)) if g_rows else cvxopt.matrix(np.zeros(1))
        am = cvxopt.matrix(np.array(eq_rows, dtype=float)) if eq_rows else None
        bm = cvxopt.matrix(np.array(eq_rhs, dtype=float)) if eq_rows else None
        cm = cvxopt.matrix(a.c)
        cvxopt.glpk.options.update(
            {"msg_lev": "GLP_MSG_OFF", "tm_lim": int(opts.time_limit_s * 1000)})
        start = time.perf_counter()
        binaries = {j for j in range(n) if a.integrality[j] > 0}
        if binaries:
            if am is not None:
                status, x = cvxopt.glpk.ilp(cm, gm, hm, am, bm, B=binaries)
            else:
                status, x = cvxopt.glpk.ilp(cm, gm, hm, B=binaries)
        else:
            out = cvxopt.glpk.lp(cm, gm, hm, am, bm) if am is not None \
                else cvxopt.glpk.lp(cm, gm, hm)
            status, x = out[0], out[1]
        wall = time.perf_counter() - start
        if status != "optimal" or x is None:
            mapped = "infeasible" if "infeasible" in str(status) else "error"
            if "unbounded" in str(status):
                mapped = "unbounded"
            return SolveResult(status=mapped, objective=float("nan"), best_bound=float("nan"),
                               gap=float("inf"), wall_time_s=wall, message=str(status))
        xv = np.array(x).ravel()
        objective = a.obj_sign * float(a.c @ xv) + a.offset
        return SolveResult(status="optimal", objective=objective, best_bound=objective,
                           gap=0.0, wall_time_s=wall,
                           values=dict(zip(a.var_keys, map(float, xv))), message=str(status))


# ---------------------------------------------------------------------------
# Backend registry
# ---------------------------------------------------------------------------

BACKEND_ENV_VAR = "RELAYSHED_SOLVER"
_BACKENDS = {
    "highs": ScipyHighsBackend,
    "glpk": GlpkCrosscheckBackend,
}


def available_backends() -> tuple[str, ...]:
    return tuple(_BACKENDS)


def get_backend(name: str | None = None):
    name = name or os.environ.get(BACKEND_ENV_VAR, "highs")
    try:
        factory = _BACKENDS[name]
    except KeyError:
        raise SolverError(
            f"unknown solver backend {name!r}; available: {', '.join(_BACKENDS)}") from None
    return factory()
