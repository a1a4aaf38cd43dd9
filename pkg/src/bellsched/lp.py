"""Time-indexed LP models and the fractional schedules read back from them.

Three builders share one sparse container:

* :func:`build_lp3s` -- prefix-sum (``S``) formulation used for every real solve;
* :func:`build_lp3x` -- the same relaxation in start-indicator (``x``) variables,
  kept for cross-checks on tiny instances;
* :func:`build_ssp_lp` -- the zero-window relaxation with one start
  distribution per school.

Row senses use MPS letters: ``"L"`` (<=), ``"G"`` (>=), ``"E"`` (=).
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .instance import Instance
from .schedule import HorizonMode, horizon

log = logging.getLogger(__name__)

FEAS_TOL = 1e-7
CLAMP_TOL = 1e-9
ROW_WARN_LIMIT = 5_000_000


class LpSizeError(ValueError):
    pass


class NumericalConsistencyError(ValueError):
    pass


class ExtractionError(ValueError):
    pass


class VarKey(NamedTuple):
    family: str  # "S", "x", "y" or "z"
    school: int = -1
    route: int = -1
    slot: int = 0


Z_KEY = VarKey("z")


@dataclass
class LpModel:
    """``min c @ v`` subject to sparse rows and column bounds."""

    objective: np.ndarray
    A: sp.csr_matrix
    senses: np.ndarray
    rhs: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    col_names: list[str]
    row_names: list[str]
    row_families: np.ndarray
    var_keys: dict = field(default_factory=dict)
    kind: str = "generic"
    instance: Instance | None = None
    mode: HorizonMode = HorizonMode.PAPER

    @property
    def num_vars(self) -> int:
        return self.A.shape[1]

    @property
    def num_rows(self) -> int:
        return self.A.shape[0]

    def tally(self) -> dict[str, int]:
        fams, counts = np.unique(self.row_families, return_counts=True)
        return {str(f): int(c) for f, c in zip(fams, counts)}

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "mode": self.mode.value,
            "num_vars": self.num_vars,
            "num_rows": self.num_rows,
            "nonzeros": int(self.A.nnz),
            "rows": self.tally(),
        }

    def summary_json(self) -> bytes:
        return json.dumps(self.summary(), sort_keys=True).encode("utf-8")

    def row_activity(self, values: np.ndarray) -> np.ndarray:
        return self.A @ np.asarray(values, dtype=float)

    def violations(self, values: np.ndarray) -> np.ndarray:
        """Per-row amount by which ``values`` violates each row (0 when satisfied)."""
        act = self.row_activity(values)
        over = np.where(self.senses == "G", 0.0, act - self.rhs)
        under = np.where(self.senses == "L", 0.0, self.rhs - act)
        return np.maximum(np.maximum(over, under), 0.0)

    def bound_violations(self, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        return np.maximum(np.maximum(self.lo - v, v - self.hi), 0.0)

    def is_feasible(self, values: np.ndarray, tol: float = FEAS_TOL) -> bool:
        return bool(self.violations(values).max(initial=0.0) <= tol and self.bound_violations(values).max(initial=0.0) <= tol)

    def column(self, key: VarKey) -> int:
        return self.var_keys[key]


class _RowBuffer:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []
        self.senses, self.rhs, self.names, self.families = [], [], [], []

    def add(self, cols, vals, sense, rhs, name, family):
        r = len(self.senses)
        self.rows.extend([r] * len(cols))
        self.cols.extend(cols)
        self.vals.extend(vals)
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        self.names.append(name)
        self.families.append(family)

    def finish(self, num_cols: int) -> tuple:
        A = sp.coo_matrix(
            (np.asarray(self.vals, dtype=float), (np.asarray(self.rows, dtype=np.int64), np.asarray(self.cols, dtype=np.int64))),
            shape=(len(self.senses), num_cols),
        ).tocsr()
        A.sum_duplicates()
        A.eliminate_zeros()
        return (A, np.asarray(self.senses, dtype="<U1"), np.asarray(self.rhs, dtype=float),
                self.names, np.asarray(self.families, dtype="<U4"))


def count_lp3s_rows(inst: Instance, mode: HorizonMode | str = HorizonMode.PAPER) -> dict[str, int]:
    """Closed-form row tallies of :func:`build_lp3s`."""
    M = inst.M
    pairs = sum(g * (g - 1) * max(0, M - s.window - 1) for g, s in zip(inst.gammas, inst.schools))
    return {
        "3e": pairs,
        "3f": sum(g * (M - 1) for g in inst.gammas),
        "3g": sum(inst.gammas),
        "3i": horizon(inst, mode),
    }


def _s_index(inst: Instance):
    """Column of S_{n,i}^{(m)} is base[n] + i*M + (m-1)."""
    M = inst.M
    base = np.concatenate([[0], np.cumsum(np.asarray(inst.gammas) * M)])
    return base


def build_lp3s(inst: Instance, mode: HorizonMode | str = HorizonMode.PAPER, *, max_rows: int | None = None) -> LpModel:
    """Prefix-sum LP: ``S^(m)`` is the probability a route has started by slot ``m``.

    Window rows ``S_i^(m) <= S_j^(m+l)`` whose right side is ``S_j^(M)`` are
    left out: ``S^(M) = 1`` makes them redundant.
    """
    mode = HorizonMode(mode)
    M = inst.M
    tally = count_lp3s_rows(inst, mode)
    total = sum(tally.values())
    if max_rows is not None and total > max_rows:
        raise LpSizeError(f"prefix-sum LP would have {total} rows (limit {max_rows}): {tally}")
    if total > ROW_WARN_LIMIT:
        warnings.warn(f"prefix-sum LP has {total} rows: {tally}", RuntimeWarning, stacklevel=2)

    base = _s_index(inst)
    nS = int(base[-1])
    z = nS
    col_names, var_keys = [], {}
    for n, g in enumerate(inst.gammas):
        for i in range(g):
            for m in range(1, M + 1):
                var_keys[VarKey("S", n, i, m)] = len(col_names)
                col_names.append(f"S_{n + 1}_{i + 1}_{m}")
    var_keys[Z_KEY] = z
    col_names.append("z")

    rb = _RowBuffer()
    for n, (g, school) in enumerate(zip(inst.gammas, inst.schools)):
        l = school.window
        col = lambda i, m: int(base[n] + i * M + m - 1)  # noqa: E731
        for i in range(g):
            for j in range(g):
                if i == j:
                    continue
                for m in range(1, M - l):
                    rb.add([col(i, m), col(j, m + l)], [1.0, -1.0], "L", 0.0, f"R3e_{n + 1}_{i + 1}_{j + 1}_{m}", "3e")
        for i in range(g):
            for m in range(2, M + 1):
                rb.add([col(i, m - 1), col(i, m)], [1.0, -1.0], "L", 0.0, f"R3f_{n + 1}_{i + 1}_{m}", "3f")
        for i in range(g):
            rb.add([col(i, M)], [1.0], "E", 1.0, f"R3g_{n + 1}_{i + 1}", "3g")

    first_col = base[inst.route_school] + inst.route_index * M  # column of S^(1) per route
    lengths = inst.route_lengths
    for m in range(1, horizon(inst, mode) + 1):
        hi = min(m, M)
        lo = np.minimum(np.maximum(m - lengths, 0), M)
        live = lo < hi
        cols = list(first_col[live] + hi - 1)
        vals = [1.0] * len(cols)
        has_lo = live & (lo > 0)
        cols += list(first_col[has_lo] + lo[has_lo] - 1)
        vals += [-1.0] * int(has_lo.sum())
        rb.add([int(c) for c in cols] + [z], vals + [-1.0], "L", 0.0, f"R3i_{m}", "3i")

    A, senses, rhs, row_names, fams = rb.finish(nS + 1)
    objective = np.zeros(nS + 1)
    objective[z] = 1.0
    lo_b = np.zeros(nS + 1)
    hi_b = np.ones(nS + 1)
    hi_b[z] = np.inf
    return LpModel(objective, A, senses, rhs, lo_b, hi_b, col_names, row_names, fams, var_keys, "lp3s", inst, mode)


def build_lp3x(inst: Instance, mode: HorizonMode | str = HorizonMode.PAPER) -> LpModel:
    """Start-indicator LP with cumulative window rows, for cross-validation only."""
    mode = HorizonMode(mode)
    M = inst.M
    base = _s_index(inst)
    nX = int(base[-1])
    z = nX
    col_names, var_keys = [], {}
    for n, g in enumerate(inst.gammas):
        for i in range(g):
            for m in range(1, M + 1):
                var_keys[VarKey("x", n, i, m)] = len(col_names)
                col_names.append(f"x_{n + 1}_{i + 1}_{m}")
    var_keys[Z_KEY] = z
    col_names.append("z")

    rb = _RowBuffer()
    for n, (g, school) in enumerate(zip(inst.gammas, inst.schools)):
        l = school.window
        first = lambda i: int(base[n] + i * M)  # noqa: E731
        for i in range(g):
            rb.add(list(range(first(i), first(i) + M)), [1.0] * M, "E", 1.0, f"R3a_{n + 1}_{i + 1}", "3a")
        for i in range(g):
            for j in range(g):
                if i == j:
                    continue
                for mt in range(1, M + 1):
                    top = min(mt + l, M)
                    cols = list(range(first(i), first(i) + mt)) + list(range(first(j), first(j) + top))
                    vals = [1.0] * mt + [-1.0] * top
                    rb.add(cols, vals, "L", 0.0, f"R3c_{n + 1}_{i + 1}_{j + 1}_{mt}", "3c")

    first_col = base[inst.route_school] + inst.route_index * M
    for m in range(1, horizon(inst, mode) + 1):
        cols, vals = [], []
        for c0, r in zip(first_col, inst.route_lengths):
            for t in range(max(m - int(r) + 1, 1), min(m, M) + 1):
                cols.append(int(c0 + t - 1))
                vals.append(1.0)
        rb.add(cols + [z], vals + [-1.0], "L", 0.0, f"R3b_{m}", "3b")

    A, senses, rhs, row_names, fams = rb.finish(nX + 1)
    objective = np.zeros(nX + 1)
    objective[z] = 1.0
    hi_b = np.ones(nX + 1)
    hi_b[z] = np.inf
    return LpModel(objective, A, senses, rhs, np.zeros(nX + 1), hi_b, col_names, row_names, fams, var_keys, "lp3x", inst, mode)


def build_ssp_lp(inst: Instance, mode: HorizonMode | str = HorizonMode.PAPER) -> LpModel:
    """Zero-window relaxation: one start distribution ``y_n`` shared by all routes of school ``n``."""
    mode = HorizonMode(mode)
    M, N = inst.M, inst.N
    z = N * M
    col_names, var_keys = [], {}
    for n in range(N):
        for m in range(1, M + 1):
            var_keys[VarKey("y", n, -1, m)] = len(col_names)
            col_names.append(f"y_{n + 1}_{m}")
    var_keys[Z_KEY] = z
    col_names.append("z")

    rb = _RowBuffer()
    for n in range(N):
        rb.add(list(range(n * M, n * M + M)), [1.0] * M, "E", 1.0, f"R2a_{n + 1}", "2a")
    for m in range(1, horizon(inst, mode) + 1):
        coef = np.zeros(N * M)
        for n, school in enumerate(inst.schools):
            for r in school.route_lengths:
                lo, hi = max(m - r + 1, 1), min(m, M)
                if lo <= hi:
                    coef[n * M + lo - 1:n * M + hi] += 1.0
        cols = np.flatnonzero(coef)
        rb.add([int(c) for c in cols] + [z], list(coef[cols]) + [-1.0], "L", 0.0, f"R2b_{m}", "2b")

    A, senses, rhs, row_names, fams = rb.finish(N * M + 1)
    objective = np.zeros(N * M + 1)
    objective[z] = 1.0
    hi_b = np.ones(N * M + 1)
    hi_b[z] = np.inf
    return LpModel(objective, A, senses, rhs, np.zeros(N * M + 1), hi_b, col_names, row_names, fams, var_keys, "ssp", inst, mode)


def single_school_polytope(window: int, gamma: int, M: int) -> LpModel:
    """Rows of one school's prefix-sum polytope (no load rows, no ``z``)."""
    from .instance import School

    inst = Instance(M, [School(window, (1,) * gamma)])
    full = build_lp3s(inst)
    keep = np.flatnonzero(full.row_families != "3i")
    nS = full.num_vars - 1
    return LpModel(
        np.zeros(nS), full.A[keep][:, :nS].tocsr(), full.senses[keep], full.rhs[keep],
        full.lo[:nS].copy(), full.hi[:nS].copy(), full.col_names[:nS], [full.row_names[k] for k in keep],
        full.row_families[keep], {k: v for k, v in full.var_keys.items() if k.family == "S"}, "polytope", inst,
    )


# ---------------------------------------------------------------------------
# variable-space transforms

def x_from_s(S, tol: float = CLAMP_TOL) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    x = np.diff(S, axis=-1, prepend=0.0)
    if (x < -tol).any():
        raise NumericalConsistencyError(f"S decreases by {-x.min():.3g} (tolerance {tol})")
    return np.maximum(x, 0.0)


def s_from_x(x, tol: float = CLAMP_TOL) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if (x < -tol).any():
        raise NumericalConsistencyError(f"negative start mass {x.min():.3g} (tolerance {tol})")
    return np.cumsum(np.maximum(x, 0.0), axis=-1)


@dataclass
class FractionalSchedule:
    """Per-school start distributions: ``S[n]`` and ``x[n]`` have shape ``(Gamma_n, M)``."""

    instance: Instance
    S: list[np.ndarray]
    x: list[np.ndarray]
    z: float
    kind: str = "lp3s"

    @property
    def M(self) -> int:
        return self.instance.M

    def stacked_S(self) -> np.ndarray:
        return np.vstack(self.S)

    def stacked_x(self) -> np.ndarray:
        return np.vstack(self.x)

    def is_integral(self, tol: float = 1e-9) -> bool:
        S = self.stacked_S()
        return bool(np.all(np.minimum(np.abs(S), np.abs(S - 1.0)) <= tol))


def repair_prefix_sums(S: np.ndarray, window: int) -> np.ndarray:
    """Make one school's ``S`` exactly monotone, pinned at 1 and window-consistent.

    Every update takes a minimum over existing entries, so the result only
    moves values by the size of the violations already present and the loop
    reaches a fixed point.
    """
    S = np.clip(np.array(S, dtype=float), 0.0, 1.0)
    S[:, -1] = 1.0
    g, M = S.shape
    shift = np.minimum(np.arange(M) + window, M - 1)
    for _ in range(4 * M * g + 4):
        prev = S.copy()
        S = np.minimum.accumulate(S[:, ::-1], axis=1)[:, ::-1]
        if g > 1:
            ahead = S[:, shift]
            order = np.sort(ahead, axis=0)
            # min over j != i of S_j^(m+l): smallest other row, second smallest for the argmin row.
            others = np.where(ahead == order[0], order[1], order[0])
            S = np.minimum(S, others)
        S[:, -1] = 1.0
        if np.array_equal(S, prev):
            return S
    raise NumericalConsistencyError("prefix-sum repair did not converge")


def extract_fractional(model: LpModel, values, tol: float = FEAS_TOL) -> FractionalSchedule:
    values = np.asarray(values, dtype=float)
    if values.shape != (model.num_vars,):
        raise ExtractionError(f"expected {model.num_vars} values, got shape {values.shape}")
    viol = model.violations(values)
    if viol.size and viol.max() > tol:
        k = int(np.argmax(viol))
        raise ExtractionError(f"row {model.row_names[k]} violated by {viol[k]:.3g}")
    bviol = model.bound_violations(values)
    if bviol.max(initial=0.0) > tol:
        k = int(np.argmax(bviol))
        raise ExtractionError(f"column {model.col_names[k]} violates its bounds by {bviol[k]:.3g}")
    inst = model.instance
    if inst is None or model.kind not in ("lp3s", "lp3x", "ssp"):
        raise ExtractionError(f"cannot read a schedule from a {model.kind!r} model")
    M = inst.M
    base = _s_index(inst)
    S_list, x_list = [], []
    for n, (g, school) in enumerate(zip(inst.gammas, inst.schools)):
        if model.kind == "lp3s":
            raw = values[base[n]:base[n + 1]].reshape(g, M)
        elif model.kind == "lp3x":
            raw = np.cumsum(values[base[n]:base[n + 1]].reshape(g, M), axis=1)
        else:
            raw = np.tile(np.cumsum(values[n * M:(n + 1) * M]), (g, 1))
        window = school.window if model.kind != "ssp" else 0
        S = repair_prefix_sums(raw, window)
        moved = np.abs(S - raw).max()
        if moved > tol:
            raise ExtractionError(f"school {n}: prefix sums needed a {moved:.3g} correction (tolerance {tol})")
        S_list.append(S)
        x_list.append(x_from_s(S))
    z = float(values[model.var_keys[Z_KEY]])
    return FractionalSchedule(inst, S_list, x_list, z, model.kind)
