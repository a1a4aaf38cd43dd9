"""Brute-force optimum for tiny instances and enumeration of one school's feasible starts."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .instance import Instance, School
from .schedule import HorizonMode, StartSchedule, horizon, interval_profile

MAX_ROUTES = 9
MAX_SLOTS = 6


class ExactSizeError(ValueError):
    pass


@dataclass(frozen=True)
class ExactResult:
    opt: int
    schedule: StartSchedule
    nodes_explored: int
    mode: HorizonMode
    optimal: bool = True
    lower_bound: int = 0

    def to_dict(self) -> dict:
        return {
            "opt": self.opt,
            "optimal": self.optimal,
            "lower_bound": self.lower_bound,
            "nodes_explored": self.nodes_explored,
            "mode": self.mode.value,
            "schedule": self.schedule.to_dict(),
        }


def enumerate_school_points(school: School, M: int, *, max_routes: int = 3, max_slots: int = 5) -> set[tuple[int, ...]]:
    """Every start vector of the school whose spread is within its window."""
    if school.num_routes > max_routes or M > max_slots:
        raise ExactSizeError(f"enumeration limited to {max_routes} routes and {max_slots} slots")
    return {
        starts
        for starts in itertools.product(range(1, M + 1), repeat=school.num_routes)
        if max(starts) - min(starts) <= school.window
    }


def _school_options(inst: Instance, n: int, T: int):
    """Distinct load contributions of school ``n`` with one witness start vector each."""
    school = inst.schools[n]
    lengths = np.asarray(school.route_lengths)
    seen: dict[bytes, tuple[int, ...]] = {}
    loads = []
    for starts in itertools.product(range(1, inst.M + 1), repeat=school.num_routes):
        if max(starts) - min(starts) > school.window:
            continue
        prof = interval_profile(np.asarray(starts), lengths, T)
        key = prof.tobytes()
        if key not in seen:
            seen[key] = starts
            loads.append(prof)
    return np.array(loads), list(seen.values())


def exact_opt(
    inst: Instance,
    mode: HorizonMode | str = HorizonMode.PAPER,
    node_budget: int | None = 5_000_000,
    *,
    incumbent: StartSchedule | None = None,
    max_routes: int = MAX_ROUTES,
    max_slots: int = MAX_SLOTS,
) -> ExactResult:
    """Depth-first branch and bound over per-school start vectors.

    Schools are branched in order of decreasing route count; children are
    tried in order of the partial peak load they produce and cut once that
    peak reaches the incumbent.
    """
    mode = HorizonMode(mode)
    if inst.total_routes > max_routes or inst.M > max_slots:
        raise ExactSizeError(
            f"instance has {inst.total_routes} routes and M={inst.M}; oracle limits are {max_routes} and {max_slots}"
        )
    T = horizon(inst, mode)
    lengths = inst.route_lengths

    def peak(sched: StartSchedule) -> int:
        return int(interval_profile(sched.flat(), lengths, T).max())

    if incumbent is None:
        incumbent = StartSchedule(tuple((1,) * g for g in inst.gammas))
    best_val = peak(incumbent)
    best_choice: list[tuple[int, ...]] | None = None

    order = sorted(range(inst.N), key=lambda n: (-inst.gammas[n], n))
    options = [_school_options(inst, n, T) for n in order]
    # each school alone forces at least its own smallest peak
    lower = max(int(opts.max(axis=1).min()) for opts, _ in options)
    total_mass = sum(int(opts[0].sum()) for opts, _ in options) if mode is HorizonMode.EXTENDED else 0
    lower = max(lower, -(-total_mass // T))

    nodes = 0
    exhausted = False
    chosen: list[tuple[int, ...]] = []

    def dfs(depth: int, load: np.ndarray) -> bool:
        nonlocal best_val, best_choice, nodes, exhausted
        if depth == len(options):
            val = int(load.max())
            if val < best_val:
                best_val, best_choice = val, list(chosen)
            return best_val <= lower
        opts, witnesses = options[depth]
        cand = load[None, :] + opts
        peaks = cand.max(axis=1)
        for k in np.argsort(peaks, kind="stable"):
            if peaks[k] >= best_val:
                break
            nodes += 1
            if node_budget is not None and nodes > node_budget:
                exhausted = True
                return True
            chosen.append(witnesses[k])
            done = dfs(depth + 1, cand[k])
            chosen.pop()
            if done:
                return True
        return False

    dfs(0, np.zeros(T, dtype=np.int64))

    if best_choice is None:
        schedule = incumbent
    else:
        starts: list[tuple[int, ...]] = [()] * inst.N
        for n, s in zip(order, best_choice):
            starts[n] = tuple(int(t) for t in s)
        schedule = StartSchedule(tuple(starts))
    return ExactResult(best_val, schedule, nodes, mode, optimal=not exhausted, lower_bound=lower if exhausted else best_val)
