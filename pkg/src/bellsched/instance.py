"""Problem instances: schools, windows and route lengths on a discrete start horizon.

Slots are 1-based (``1..M``) everywhere in this package; school and route
indices are 0-based list positions.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class InstanceError(ValueError):
    """Raised for malformed instance documents or violated instance invariants."""


@dataclass(frozen=True)
class School:
    window: int
    route_lengths: tuple[int, ...]

    @property
    def num_routes(self) -> int:
        return len(self.route_lengths)


@dataclass(frozen=True)
class InstanceStats:
    gamma_max: int
    k_max: int
    total_routes: int


@dataclass(frozen=True)
class Instance:
    """An SBSP instance on the inverted (start-time) timeline.

    Route lengths above ``M`` are truncated to ``M`` at construction; a route
    that long is necessarily the last one its bus serves. Any window of at
    least ``M - 1`` places no restriction on a school.
    """

    M: int
    schools: tuple[School, ...]
    _routes: tuple = field(init=False, repr=False, compare=False)

    def __init__(self, M: int, schools: Iterable[School | tuple[int, Sequence[int]]], *, truncate: bool = True):
        if isinstance(M, bool) or not isinstance(M, (int, np.integer)) or M < 1:
            raise InstanceError(f"M must be a positive integer, got {M!r}")
        M = int(M)
        built = []
        for n, s in enumerate(schools):
            if not isinstance(s, School):
                s = School(int(s[0]), tuple(int(r) for r in s[1]))
            if s.window < 0:
                raise InstanceError(f"school {n} has negative window l={s.window}")
            if not s.route_lengths:
                raise InstanceError(f"school {n} has no routes")
            lengths = []
            for i, r in enumerate(s.route_lengths):
                if r < 1:
                    raise InstanceError(f"school {n} route {i} has non-positive length {r}")
                if r > M:
                    if not truncate:
                        raise InstanceError(f"school {n} route {i} has length {r} > M={M}")
                    r = M
                lengths.append(int(r))
            built.append(School(int(s.window), tuple(lengths)))
        if not built:
            raise InstanceError("instance has no schools")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "schools", tuple(built))
        school_of = np.repeat(np.arange(len(built)), [s.num_routes for s in built])
        route_of = np.concatenate([np.arange(s.num_routes) for s in built])
        lengths = np.concatenate([np.asarray(s.route_lengths, dtype=np.int64) for s in built])
        for a in (school_of, route_of, lengths):
            a.setflags(write=False)
        object.__setattr__(self, "_routes", (school_of, route_of, lengths))

    @property
    def N(self) -> int:
        return len(self.schools)

    @property
    def gammas(self) -> list[int]:
        return [s.num_routes for s in self.schools]

    @property
    def windows(self) -> list[int]:
        return [s.window for s in self.schools]

    @property
    def route_school(self) -> np.ndarray:
        """School index of every route, in flattened (school, route) order."""
        return self._routes[0]

    @property
    def route_index(self) -> np.ndarray:
        return self._routes[1]

    @property
    def route_lengths(self) -> np.ndarray:
        return self._routes[2]

    @property
    def total_routes(self) -> int:
        return int(self._routes[2].size)

    def as_ssp(self) -> "Instance":
        """Same routes with every window set to zero (all routes of a school co-start)."""
        return Instance(self.M, [School(0, s.route_lengths) for s in self.schools])

    def to_dict(self) -> dict:
        return {"M": self.M, "schools": [{"l": s.window, "routes": list(s.route_lengths)} for s in self.schools]}


def derived_stats(inst: Instance) -> InstanceStats:
    return InstanceStats(
        gamma_max=max(inst.gammas),
        k_max=int(inst.route_lengths.max()),
        total_routes=inst.total_routes,
    )


def apply_transition_time(inst: Instance, delta: int) -> Instance:
    """Fold a constant bus transition time into every route length (capped at M)."""
    if delta < 0:
        raise InstanceError(f"transition time must be nonnegative, got {delta}")
    return Instance(
        inst.M,
        [School(s.window, tuple(min(r + delta, inst.M) for r in s.route_lengths)) for s in inst.schools],
    )


# ---------------------------------------------------------------------------
# serialization

def save_instance(inst: Instance) -> bytes:
    return json.dumps(inst.to_dict()).encode("utf-8")


def _require_int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InstanceError(f"{where} must be an integer, got {value!r}")
    return value


def instance_from_dict(doc, *, truncate: bool = True) -> Instance:
    if not isinstance(doc, dict):
        raise InstanceError("instance document must be a JSON object")
    if set(doc) != {"M", "schools"}:
        extra = sorted(set(doc) - {"M", "schools"})
        missing = sorted({"M", "schools"} - set(doc))
        raise InstanceError(f"instance fields mismatch: missing={missing} extra={extra}")
    M = _require_int(doc["M"], "M")
    if M < 1:
        raise InstanceError(f"M must be positive, got {M}")
    if not isinstance(doc["schools"], list) or not doc["schools"]:
        raise InstanceError("schools must be a nonempty list")
    schools = []
    for n, s in enumerate(doc["schools"]):
        if not isinstance(s, dict) or set(s) != {"l", "routes"}:
            raise InstanceError(f"school {n} must have exactly the fields 'l' and 'routes'")
        window = _require_int(s["l"], f"school {n} field 'l'")
        if window < 0:
            raise InstanceError(f"school {n} field 'l' is negative ({window})")
        if not isinstance(s["routes"], list):
            raise InstanceError(f"school {n} field 'routes' must be a list")
        if not s["routes"]:
            raise InstanceError(f"school {n} has no routes")
        routes = tuple(_require_int(r, f"school {n} routes[{i}]") for i, r in enumerate(s["routes"]))
        schools.append(School(window, routes))
    return Instance(M, schools, truncate=truncate)


def load_instance(data: bytes | str, *, truncate: bool = True) -> Instance:
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"instance document is not valid JSON: {exc}") from exc
    return instance_from_dict(doc, truncate=truncate)


# ---------------------------------------------------------------------------
# generators

class Family(str, enum.Enum):
    BASE = "base"
    SHORT_WINDOW = "short-window"
    SHORT_ROUTE_LITERAL = "short-route-literal"
    MIXED_SCHOOL = "mixed-school"


#: Problem sizes (M, N, gamma_max) of the four standard size classes.
SIZE_CLASSES: dict[int, tuple[int, int, int]] = {
    1: (10, 5, 50),
    2: (30, 50, 50),
    3: (50, 50, 100),
    4: (50, 100, 100),
}


@dataclass(frozen=True)
class GeneratorSpec:
    family: Family
    size_class: int | None = None
    M: int | None = None
    N: int | None = None
    gamma_max: int | None = None
    seed: int = 0
    # ShortRouteLiteral only: draw route lengths from U(1, M/3) instead of shrinking Gamma_n.
    short_lengths: bool = False

    def dims(self) -> tuple[int, int, int]:
        if self.size_class is not None:
            if self.size_class not in SIZE_CLASSES:
                raise InstanceError(f"unknown size class {self.size_class}")
            base = SIZE_CLASSES[self.size_class]
        else:
            base = (None, None, None)
        dims = tuple(o if o is not None else b for o, b in zip((self.M, self.N, self.gamma_max), base))
        if any(d is None for d in dims):
            raise InstanceError("generator needs a size class or explicit M, N and gamma_max")
        if any(isinstance(d, bool) or int(d) != d or d < 1 for d in dims):
            raise InstanceError(f"generator dimensions must be positive integers, got {dims}")
        return tuple(int(d) for d in dims)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def uniform_range(a: float, b: float) -> tuple[int, int]:
    """Integer support of U(a, b) with rounded endpoints and lower end clamped to 1."""
    lo = max(1, round_half_up(a))
    hi = max(lo, round_half_up(b))
    return lo, hi


def family_ranges(family: Family, M: int, N: int, gamma_max: int, n: int, short_lengths: bool = False):
    """Closed integer ranges ``(gamma, window, length)`` for school ``n`` (0-based)."""
    family = Family(family)
    gamma = uniform_range(1, gamma_max)
    window = uniform_range(1, M)
    length = uniform_range(1, M)
    if family is Family.SHORT_WINDOW:
        window = uniform_range(1, M / 3)
    elif family is Family.SHORT_ROUTE_LITERAL:
        if short_lengths:
            length = uniform_range(1, M / 3)
        else:
            gamma = uniform_range(1, gamma_max / 3)
    elif family is Family.MIXED_SCHOOL:
        if n + 1 <= N // 2:
            gamma = uniform_range(1, gamma_max / 3)
        else:
            gamma = uniform_range(2 * gamma_max / 3, gamma_max)
    return gamma, window, length


def generate_instance(spec: GeneratorSpec) -> Instance:
    try:
        family = Family(spec.family)
    except ValueError as exc:
        raise InstanceError(f"unknown family {spec.family!r}") from exc
    M, N, gamma_max = spec.dims()
    rng = np.random.default_rng(np.uint64(spec.seed))
    schools = []
    for n in range(N):
        (g_lo, g_hi), (l_lo, l_hi), (r_lo, r_hi) = family_ranges(family, M, N, gamma_max, n, spec.short_lengths)
        gamma = int(rng.integers(g_lo, g_hi, endpoint=True))
        window = int(rng.integers(l_lo, l_hi, endpoint=True))
        lengths = rng.integers(r_lo, r_hi, size=gamma, endpoint=True)
        schools.append(School(window, tuple(int(r) for r in lengths)))
    return Instance(M, schools)


def tiny_instance(seed: int, *, max_schools: int = 3, max_slots: int = 6, max_gamma: int = 3,
                  max_length: int = 3, max_window: int = 2) -> Instance:
    """Small random instance in the range the exact oracle handles."""
    rng = np.random.default_rng(np.uint64(seed))
    M = int(rng.integers(1, max_slots, endpoint=True))
    N = int(rng.integers(1, max_schools, endpoint=True))
    schools = []
    for _ in range(N):
        gamma = int(rng.integers(1, max_gamma, endpoint=True))
        window = int(rng.integers(0, max_window, endpoint=True))
        lengths = rng.integers(1, min(max_length, M), size=gamma, endpoint=True)
        schools.append(School(window, tuple(int(r) for r in lengths)))
    return Instance(M, schools)
