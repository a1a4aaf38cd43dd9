"""Greedy 3-approximation for the school scheduling problem (all windows zero).

``greedy_schedule`` places schools one at a time at the first slot whose
running load is below the bus budget; ``greedy_search`` bisects the budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .instance import Instance, derived_stats
from .schedule import HorizonMode, LoadProfile, StartSchedule, bus_count, load_profile


@dataclass(frozen=True)
class GreedyOutcome:
    feasible: bool
    schedule: StartSchedule | None
    final_loads: LoadProfile
    school_starts: tuple[int, ...]


@dataclass(frozen=True)
class SearchStep:
    guess: int
    feasible: bool
    L: int
    U: int


@dataclass(frozen=True)
class SearchResult:
    U: int
    L: int
    gamma_max: int
    schedule: StartSchedule
    bus_usage: int
    transcript: tuple[SearchStep, ...] = field(default=())

    @property
    def upper_bound(self) -> int:
        return self.U + self.gamma_max

    @property
    def lower_bound(self) -> int:
        return max(self.gamma_max, math.ceil((self.U + self.gamma_max) / 3))

    def to_dict(self) -> dict:
        return {
            "U": self.U,
            "L": self.L,
            "gamma_max": self.gamma_max,
            "bus_usage": self.bus_usage,
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "schedule": self.schedule.to_dict(),
            "transcript": [s.__dict__ for s in self.transcript],
        }


def greedy_schedule(inst: Instance, opt_guess: int) -> GreedyOutcome:
    if opt_guess < 1:
        raise ValueError(f"opt_guess must be positive, got {opt_guess}")
    M = inst.M
    C = np.zeros(M + 1, dtype=np.int64)  # C[m] for m in 1..M; C[0] unused
    starts: list[int] = []
    s = 1
    for school in inst.schools:
        if s > M:
            return GreedyOutcome(False, None, LoadProfile(C[1:].copy(), HorizonMode.PAPER), tuple(starts))
        starts.append(s)
        for r in school.route_lengths:
            C[s:min(s + r, M + 1)] += 1
        below = np.flatnonzero(C[1:] < opt_guess)
        s = int(below[0]) + 1 if below.size else M + 1
    sched = StartSchedule(tuple((t,) * g for t, g in zip(starts, inst.gammas)))
    return GreedyOutcome(True, sched, LoadProfile(C[1:].copy(), HorizonMode.PAPER), tuple(starts))


def greedy_search(inst: Instance) -> SearchResult:
    gamma_max = derived_stats(inst).gamma_max
    L, U = gamma_max, inst.N * gamma_max
    transcript = []
    best = None
    # Probing the lower end first lets U settle at gamma_max when that budget already works.
    if U - L >= 1:
        out = greedy_schedule(inst, L)
        transcript.append(SearchStep(L, out.feasible, L, U))
        if out.feasible:
            U, best = L, out
    while U - L > 1:
        guess = (L + U) // 2
        out = greedy_schedule(inst, guess)
        if out.feasible:
            U, best = guess, out
        else:
            L = guess
        transcript.append(SearchStep(guess, out.feasible, L, U))
    if best is None:
        best = greedy_schedule(inst, U)
        assert best.feasible, "greedy must succeed at budget N * gamma_max"
    usage = bus_count(load_profile(inst, best.schedule, HorizonMode.PAPER))
    return SearchResult(U, L, gamma_max, best.schedule, usage, tuple(transcript))
