"""Start-time schedules, load profiles and bus assignment."""

from __future__ import annotations

import enum
import heapq
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .instance import Instance


class ScheduleError(ValueError):
    """Schedule does not match the instance shape or has starts outside ``[1, M]``."""


class InfeasibleScheduleError(ValueError):
    """Schedule violates a school window."""


class HorizonMode(str, enum.Enum):
    """Where load counting stops.

    ``PAPER`` counts slots ``1..M`` only, exactly as the load rows of the
    time-indexed model do. ``EXTENDED`` counts every slot a route can occupy,
    ``1..M+K_max-1``. Every route active after ``M`` is also active at ``M``,
    so the two maxima always coincide; the arrays differ.
    """

    PAPER = "paper"
    EXTENDED = "extended"


def horizon(inst: Instance, mode: HorizonMode | str) -> int:
    mode = HorizonMode(mode)
    if mode is HorizonMode.PAPER:
        return inst.M
    return inst.M + int(inst.route_lengths.max()) - 1


@dataclass(frozen=True)
class StartSchedule:
    starts: tuple[tuple[int, ...], ...]

    @classmethod
    def from_lists(cls, starts: Sequence[Sequence[int]]) -> "StartSchedule":
        return cls(tuple(tuple(int(t) for t in row) for row in starts))

    @classmethod
    def from_flat(cls, inst: Instance, flat: Sequence[int]) -> "StartSchedule":
        flat = [int(t) for t in flat]
        out, k = [], 0
        for g in inst.gammas:
            out.append(tuple(flat[k:k + g]))
            k += g
        return cls(tuple(out))

    def flat(self) -> np.ndarray:
        return np.fromiter((t for row in self.starts for t in row), dtype=np.int64)

    def to_dict(self) -> dict:
        return {"starts": [list(row) for row in self.starts]}

    def to_json(self) -> bytes:
        return json.dumps(self.to_dict()).encode("utf-8")

    @classmethod
    def from_json(cls, data: bytes | str) -> "StartSchedule":
        doc = json.loads(data)
        if not isinstance(doc, dict) or "starts" not in doc:
            raise ScheduleError("schedule document needs a 'starts' field")
        if doc.get("view", "start") != "start":
            raise ScheduleError("expected a start-view schedule; convert arrival views with from_arrival_view")
        return cls.from_lists(doc["starts"])


@dataclass(frozen=True)
class LoadProfile:
    loads: np.ndarray
    mode: HorizonMode

    @property
    def horizon(self) -> int:
        return int(self.loads.size)


@dataclass(frozen=True)
class BusAssignment:
    bus_of: tuple[tuple[int, ...], ...]
    bus_count: int


@dataclass(frozen=True)
class FeasibilityReport:
    ok: bool
    school: int | None = None
    routes: tuple[int, int] | None = None
    message: str = ""

    def __bool__(self) -> bool:
        return self.ok


def validate_shape(inst: Instance, sched: StartSchedule) -> None:
    if len(sched.starts) != inst.N:
        raise ScheduleError(f"schedule has {len(sched.starts)} schools, instance has {inst.N}")
    for n, (row, g) in enumerate(zip(sched.starts, inst.gammas)):
        if len(row) != g:
            raise ScheduleError(f"school {n}: schedule has {len(row)} routes, instance has {g}")
        for i, t in enumerate(row):
            if not 1 <= t <= inst.M:
                raise ScheduleError(f"school {n} route {i}: start {t} outside [1, {inst.M}]")


def interval_profile(starts: np.ndarray, lengths: np.ndarray, T: int) -> np.ndarray:
    """Count closed slot spans ``[t, t+r-1]`` covering each slot ``1..T``."""
    diff = np.zeros(T + 2, dtype=np.int64)
    first = np.clip(starts, 1, T + 1)
    stop = np.clip(starts + lengths, 1, T + 1)
    np.add.at(diff, first, 1)
    np.add.at(diff, stop, -1)
    return np.cumsum(diff)[1:T + 1]


def load_profile(inst: Instance, sched: StartSchedule, mode: HorizonMode | str = HorizonMode.PAPER) -> LoadProfile:
    validate_shape(inst, sched)
    mode = HorizonMode(mode)
    loads = interval_profile(sched.flat(), inst.route_lengths, horizon(inst, mode))
    loads.setflags(write=False)
    return LoadProfile(loads, mode)


def bus_count(profile: LoadProfile) -> int:
    return int(profile.loads.max()) if profile.loads.size else 0


def check_feasible(inst: Instance, sched: StartSchedule) -> FeasibilityReport:
    if len(sched.starts) != inst.N or any(len(r) != g for r, g in zip(sched.starts, inst.gammas)):
        return FeasibilityReport(False, message="schedule shape does not match instance")
    for n, (row, school) in enumerate(zip(sched.starts, inst.schools)):
        for i, t in enumerate(row):
            if not 1 <= t <= inst.M:
                return FeasibilityReport(False, n, (i, i), f"school {n} route {i}: start {t} outside [1, {inst.M}]")
        lo = min(range(len(row)), key=lambda k: (row[k], k))
        hi = max(range(len(row)), key=lambda k: (row[k], -k))
        if row[hi] - row[lo] > school.window:
            a, b = sorted((lo, hi))
            return FeasibilityReport(
                False, n, (a, b),
                f"school {n}: routes {a} and {b} start {abs(row[a] - row[b])} slots apart, window is {school.window}",
            )
    return FeasibilityReport(True)


def _require_feasible(inst: Instance, sched: StartSchedule) -> None:
    validate_shape(inst, sched)
    report = check_feasible(inst, sched)
    if not report:
        raise InfeasibleScheduleError(report.message)


def assign_buses(inst: Instance, sched: StartSchedule) -> BusAssignment:
    """Interval partitioning by start slot; optimal, so the count equals the peak load."""
    _require_feasible(inst, sched)
    order = sorted(
        ((t, -inst.schools[n].route_lengths[i], n, i) for n, row in enumerate(sched.starts) for i, t in enumerate(row))
    )
    free: list[tuple[int, int]] = []  # (last occupied slot, bus)
    bus_of = [[-1] * g for g in inst.gammas]
    buses = 0
    for t, neg_r, n, i in order:
        if free and free[0][0] < t:
            _, bus = heapq.heappop(free)
        else:
            bus = buses
            buses += 1
        bus_of[n][i] = bus
        heapq.heappush(free, (t - neg_r - 1, bus))
    return BusAssignment(tuple(tuple(row) for row in bus_of), buses)


# ---------------------------------------------------------------------------
# original (arrival-time) view

@dataclass(frozen=True)
class ArrivalSchedule:
    arrivals: tuple[tuple[int, ...], ...]
    school_starts: tuple[int, ...]

    def to_dict(self) -> dict:
        return {"view": "arrival", "starts": [list(r) for r in self.arrivals], "school_starts": list(self.school_starts)}

    def to_json(self) -> bytes:
        return json.dumps(self.to_dict()).encode("utf-8")


def invert_slot(M: int, m: int) -> int:
    return M + 1 - m


def to_arrival_view(inst: Instance, sched: StartSchedule) -> ArrivalSchedule:
    _require_feasible(inst, sched)
    arrivals = tuple(tuple(invert_slot(inst.M, t) for t in row) for row in sched.starts)
    return ArrivalSchedule(arrivals, tuple(max(row) for row in arrivals))


def from_arrival_view(inst: Instance, arrivals: ArrivalSchedule) -> StartSchedule:
    return StartSchedule(tuple(tuple(invert_slot(inst.M, a) for a in row) for row in arrivals.arrivals))
