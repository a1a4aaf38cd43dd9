"""Vertex-returning LP solver.

The bundled method is a bounded-variable revised primal simplex:

* every row gets a slack column (``A v + s = b``; the slack's bounds encode
  the row sense), so the slack basis is the starting point;
* rows the starting point violates get an artificial column and phase 1
  minimizes their sum;
* Dantzig pricing, switching to Bland's rule after 50 consecutive
  degenerate pivots until the next nondegenerate one;
* the basis is refactorized densely every 100 pivots, with product-form
  eta updates in between.

Large models go to the HiGHS solver that ships with scipy: interior point
plus crossover, which also ends at a vertex. ``method="auto"`` picks by row
count.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.optimize import linprog

from .lp import LpModel

PIVOT_TOL = 1e-9
DROP_TOL = 1e-12
OPT_TOL = 1e-9
PRIMAL_TOL = 1e-9
REFACTOR_EVERY = 100
DEGENERATE_SWITCH = 50
AUTO_MAX_ROWS = 1500


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass
class LpSolution:
    status: Status
    values: np.ndarray
    objective: float
    basis: frozenset
    iterations: int
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    dual_objective: float | None = None
    method: str = "revised"
    phase1_iterations: int = 0
    bland_pivots: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


# ---------------------------------------------------------------------------
# basis factorization

class _Factor:
    def __init__(self, A: sp.csc_matrix, basis: np.ndarray):
        self.lu = la.lu_factor(A[:, basis].toarray(), check_finite=False)
        self.etas: list[tuple[int, np.ndarray]] = []

    def solve(self, b: np.ndarray) -> np.ndarray:
        x = la.lu_solve(self.lu, b, check_finite=False)
        for r, d in self.etas:
            xr = x[r] / d[r]
            x -= d * xr
            x[r] = xr
        return x

    def solve_t(self, c: np.ndarray) -> np.ndarray:
        w = np.array(c, dtype=float)
        for r, d in reversed(self.etas):
            wr = w[r]
            w[r] = (wr - (d @ w - d[r] * w[r])) / d[r]
        return la.lu_solve(self.lu, w, trans=1, check_finite=False)

    def push(self, r: int, d: np.ndarray) -> None:
        d = d.copy()
        d[np.abs(d) < DROP_TOL] = 0.0
        self.etas.append((r, d))


class _Revised:
    def __init__(self, A: sp.csc_matrix, b, c, lo, hi, max_iter, deadline):
        self.A = A
        self.AT = A.T.tocsr()
        self.b = b
        self.c = c
        self.lo = lo
        self.hi = hi
        self.m, self.n = A.shape
        self.max_iter = max_iter
        self.deadline = deadline
        self.iterations = 0
        self.bland_pivots = 0

    def start(self, x: np.ndarray, basis: np.ndarray) -> None:
        self.x = x
        self.basis = basis
        self.is_basic = np.zeros(self.n, dtype=bool)
        self.is_basic[basis] = True
        self.refactor()

    def refactor(self) -> None:
        self.factor = _Factor(self.A, self.basis)
        self.since_refactor = 0
        xN = np.where(self.is_basic, 0.0, self.x)
        self.x[self.basis] = self.factor.solve(self.b - self.A @ xN)

    def duals(self, cost: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        y = self.factor.solve_t(cost[self.basis])
        d = cost - self.AT @ y
        d[self.is_basic] = 0.0
        return y, d

    def run(self, cost: np.ndarray) -> Status:
        degenerate_run = 0
        bland = False
        lo, hi = self.lo, self.hi
        movable = lo < hi
        while True:
            if self.iterations >= self.max_iter or (self.deadline and time.perf_counter() > self.deadline):
                return Status.ITERATION_LIMIT
            y, d = self.duals(cost)
            x = self.x
            at_lo = np.isclose(x, lo, rtol=0, atol=PRIMAL_TOL) & np.isfinite(lo)
            at_hi = np.isclose(x, hi, rtol=0, atol=PRIMAL_TOL) & np.isfinite(hi)
            free = ~at_lo & ~at_hi
            can_up = movable & ~self.is_basic & (d < -OPT_TOL) & (at_lo | free)
            can_down = movable & ~self.is_basic & (d > OPT_TOL) & (at_hi | free)
            eligible = np.flatnonzero(can_up | can_down)
            if eligible.size == 0:
                return Status.OPTIMAL
            if bland:
                q = int(eligible[0])
            else:
                q = int(eligible[np.argmax(np.abs(d[eligible]))])
            direction = 1.0 if can_up[q] else -1.0

            w = self.factor.solve(self.A[:, q].toarray().ravel())
            alpha = direction * w
            xb = x[self.basis]
            lob, hib = lo[self.basis], hi[self.basis]
            ratios = np.full(self.m, np.inf)
            dec = alpha > PIVOT_TOL
            inc = alpha < -PIVOT_TOL
            with np.errstate(invalid="ignore", divide="ignore"):
                ratios[dec] = (xb[dec] - lob[dec]) / alpha[dec]
                ratios[inc] = (hib[inc] - xb[inc]) / -alpha[inc]
            ratios = np.maximum(ratios, 0.0)
            theta_q = hi[q] - lo[q]
            theta = ratios.min(initial=np.inf)
            if not np.isfinite(theta) and not np.isfinite(theta_q):
                return Status.UNBOUNDED

            self.iterations += 1
            if bland:
                self.bland_pivots += 1
            if theta_q <= theta:
                # bound flip, basis unchanged
                step = theta_q
                x[q] += direction * step
                x[self.basis] -= step * alpha
                if step > PRIMAL_TOL:
                    degenerate_run, bland = 0, False
                continue

            ties = np.flatnonzero(ratios <= theta + PRIMAL_TOL)
            if bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(alpha[ties]))])
            step = ratios[r]
            leaving = int(self.basis[r])
            x[q] += direction * step
            x[self.basis] -= step * alpha
            x[leaving] = lob[r] if alpha[r] > 0 else hib[r]

            self.basis[r] = q
            self.is_basic[leaving] = False
            self.is_basic[q] = True
            self.factor.push(r, w)
            self.since_refactor += 1
            if self.since_refactor >= REFACTOR_EVERY:
                self.refactor()

            if step <= PRIMAL_TOL:
                degenerate_run += 1
                if degenerate_run >= DEGENERATE_SWITCH:
                    bland = True
            else:
                degenerate_run, bland = 0, False


def _nonbasic_start(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))


def _slack_bounds(senses: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lo = np.where(senses == "G", -np.inf, 0.0)
    hi = np.where(senses == "L", np.inf, 0.0)
    return lo, hi


def solve_revised(model: LpModel, max_iterations: int | None = None, time_budget: float | None = None) -> LpSolution:
    n, m = model.num_vars, model.num_rows
    if max_iterations is None:
        max_iterations = 50 * (n + m)
    deadline = time.perf_counter() + time_budget if time_budget else None
    if np.any(model.lo > model.hi):
        return LpSolution(Status.INFEASIBLE, _nonbasic_start(model.lo, model.hi), np.nan, frozenset(), 0)

    slo, shi = _slack_bounds(model.senses)
    x0 = _nonbasic_start(model.lo, model.hi)
    resid = model.rhs - model.A @ x0
    # slack basic where its implied value respects the slack bounds
    ok = (resid >= slo - PRIMAL_TOL) & (resid <= shi + PRIMAL_TOL)
    bad = np.flatnonzero(~ok)
    k = bad.size
    sign = np.sign(resid[bad] - np.clip(resid[bad], slo[bad], shi[bad]))
    art = sp.csc_matrix((sign, (bad, np.arange(k))), shape=(m, k))
    A = sp.hstack([model.A.tocsc(), sp.identity(m, format="csc"), art], format="csc")
    lo = np.concatenate([model.lo, slo, np.zeros(k)])
    hi = np.concatenate([model.hi, shi, np.full(k, np.inf)])
    x = np.concatenate([x0, np.clip(resid, slo, shi), np.zeros(k)])
    basis = np.arange(n, n + m)
    basis[bad] = n + m + np.arange(k)
    x[n + bad] = np.clip(resid[bad], slo[bad], shi[bad])

    c_full = np.concatenate([model.objective, np.zeros(m + k)])
    solver = _Revised(A, model.rhs.astype(float), c_full, lo, hi, max_iterations, deadline)
    solver.start(x, basis)

    phase1_iters = 0
    if k:
        c1 = np.concatenate([np.zeros(n + m), np.ones(k)])
        status = solver.run(c1)
        phase1_iters = solver.iterations
        infeas = solver.x[n + m:].sum()
        if status is Status.ITERATION_LIMIT:
            return _pack(model, solver, Status.ITERATION_LIMIT, c_full, phase1_iters)
        if infeas > 1e-7:
            return _pack(model, solver, Status.INFEASIBLE, c_full, phase1_iters)
        # artificials may stay basic at zero but can no longer move
        solver.hi[n + m:] = 0.0
        solver.x[n + m:] = 0.0
        solver.refactor()
    status = solver.run(c_full)
    return _pack(model, solver, status, c_full, phase1_iters)


def _pack(model: LpModel, solver: _Revised, status: Status, cost: np.ndarray, phase1_iters: int) -> LpSolution:
    n, m = model.num_vars, model.num_rows
    x = solver.x.copy()
    values = x[:n]
    y, d = solver.duals(cost)
    dual_obj = float(model.rhs @ y + d[~solver.is_basic] @ x[~solver.is_basic])
    return LpSolution(
        status=status,
        values=values,
        objective=float(model.objective @ values),
        basis=frozenset(int(j) for j in solver.basis),
        iterations=solver.iterations,
        duals=y,
        reduced_costs=d[:n + m],
        dual_objective=dual_obj,
        method="revised",
        phase1_iterations=phase1_iters,
        bland_pivots=solver.bland_pivots,
        extra={"x_full": x, "A_full": solver.A, "lo_full": solver.lo.copy(), "hi_full": solver.hi.copy(),
               "basis_order": solver.basis.copy()},
    )


def solve_highs(model: LpModel, max_iterations: int | None = None, time_budget: float | None = None,
                algorithm: str = "ipm") -> LpSolution:
    """HiGHS through scipy: interior point followed by crossover to a basis, or dual simplex."""
    A = model.A.tocsr()
    ub = model.senses != "E"
    sign = np.where(model.senses == "G", -1.0, 1.0)
    A_ub = sp.diags(sign[ub]) @ A[ub] if ub.any() else None
    b_ub = (sign * model.rhs)[ub] if ub.any() else None
    eq = model.senses == "E"
    A_eq = A[eq] if eq.any() else None
    b_eq = model.rhs[eq] if eq.any() else None
    bounds = np.column_stack([np.where(np.isfinite(model.lo), model.lo, -np.inf), np.where(np.isfinite(model.hi), model.hi, np.inf)])
    options = {"presolve": True}
    if max_iterations is not None:
        options["maxiter"] = int(max_iterations)
    if time_budget is not None:
        options["time_limit"] = float(time_budget)
    res = linprog(model.objective, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method=f"highs-{algorithm}", options=options)
    status = {0: Status.OPTIMAL, 1: Status.ITERATION_LIMIT, 2: Status.INFEASIBLE, 3: Status.UNBOUNDED}.get(res.status, Status.ITERATION_LIMIT)
    if res.x is None:
        return LpSolution(status, np.full(model.num_vars, np.nan), np.nan, frozenset(), int(getattr(res, "nit", 0)), method="highs")
    values = np.asarray(res.x, dtype=float)
    y = np.zeros(model.num_rows)
    if ub.any():
        y[ub] = sign[ub] * res.ineqlin.marginals
    if eq.any():
        y[eq] = res.eqlin.marginals
    d = model.objective - model.A.T @ y
    inside = (values > model.lo + PRIMAL_TOL) & (values < model.hi - PRIMAL_TOL)
    dual_obj = float(model.rhs @ y + d @ values)
    return LpSolution(
        status=status, values=values, objective=float(res.fun), basis=frozenset(int(j) for j in np.flatnonzero(inside)),
        iterations=int(res.nit), duals=y, reduced_costs=d, dual_objective=dual_obj, method="highs",
    )


def solve(model: LpModel, max_iterations: int | None = None, time_budget: float | None = None, method: str = "auto") -> LpSolution:
    """Solve ``model`` to a vertex optimum.

    Infeasible, unbounded and iteration-limited outcomes are reported in
    ``status``; they are not exceptions.
    """
    if method == "auto":
        method = "revised" if model.num_rows <= AUTO_MAX_ROWS else "highs"
    if method == "revised":
        return solve_revised(model, max_iterations, time_budget)
    if method in ("highs", "highs-ipm"):
        return solve_highs(model, max_iterations, time_budget, "ipm")
    if method == "highs-ds":
        return solve_highs(model, max_iterations, time_budget, "ds")
    raise ValueError(f"unknown LP method {method!r}")


def solve_vertex_with_objective(polytope: LpModel, c) -> LpSolution:
    """Optimize ``c`` over one school's prefix-sum polytope with the bundled simplex."""
    c = np.asarray(c, dtype=float)
    if c.shape != (polytope.num_vars,):
        raise ValueError(f"objective has shape {c.shape}, polytope has {polytope.num_vars} columns")
    model = LpModel(c, polytope.A, polytope.senses, polytope.rhs, polytope.lo, polytope.hi,
                    polytope.col_names, polytope.row_names, polytope.row_families, polytope.var_keys,
                    polytope.kind, polytope.instance, polytope.mode)
    return solve_revised(model)


def verify_basic(model: LpModel, sol: LpSolution, tol: float = 1e-7) -> bool:
    """Check that ``sol`` is the basic solution of its reported basis."""
    if sol.method != "revised" or "x_full" not in sol.extra:
        raise ValueError("basis verification needs a bundled-simplex solution")
    x = sol.extra["x_full"]
    A = sol.extra["A_full"]
    lo, hi = sol.extra["lo_full"], sol.extra["hi_full"]
    basis = sol.extra["basis_order"]
    nonbasic = np.ones(x.size, dtype=bool)
    nonbasic[basis] = False
    free_zero = ~np.isfinite(lo) & ~np.isfinite(hi) & (np.abs(x) <= tol)
    at_bound = np.isclose(x, lo, rtol=0, atol=tol) | np.isclose(x, hi, rtol=0, atol=tol) | free_zero
    if not at_bound[nonbasic].all():
        return False
    B = A[:, basis].toarray()
    if np.linalg.matrix_rank(B) < model.num_rows:
        return False
    xN = np.where(nonbasic, x, 0.0)
    xb = np.linalg.solve(B, model.rhs - A @ xN)
    return bool(np.allclose(xb, x[basis], rtol=0, atol=tol))
