"""Randomized rounding of fractional start distributions, plus the bound calculators.

All logarithms are natural: the success bound comes from an exponential tail
inequality, so ``log`` there means ``ln``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .instance import Instance, derived_stats
from .lp import FractionalSchedule
from .schedule import StartSchedule, check_feasible, interval_profile

EPSILONS = (0.1, 0.01, 0.001)


class RoundingInputError(ValueError):
    pass


@dataclass(frozen=True)
class RoundingResult:
    schedule: StartSchedule
    z_paper: int
    z_extended: int
    gammas: tuple[float, ...]
    trial_index: int = 0

    def to_dict(self) -> dict:
        return {
            "schedule": self.schedule.to_dict(),
            "z_paper": self.z_paper,
            "z_extended": self.z_extended,
            "gammas": list(self.gammas),
            "trial_index": self.trial_index,
        }


@dataclass(frozen=True)
class BoundReport:
    z_lp: float
    gamma_max: int
    M: int
    z_rand: float
    lambda_star: float
    repeats: dict = field(default_factory=dict)

    def repeats_for(self, eps: float) -> int:
        return repeats_for(eps)

    def to_dict(self) -> dict:
        return {
            "z_lp": self.z_lp, "gamma_max": self.gamma_max, "M": self.M, "z_rand": self.z_rand,
            "lambda_star": self.lambda_star, "repeats": {str(k): v for k, v in self.repeats.items()},
        }


@dataclass(frozen=True)
class TrialStats:
    K: int
    z_min: int
    z_mean: float
    z_max: int
    z_rand: float
    within_z_rand: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class BestOfK:
    best: RoundingResult
    trials: TrialStats
    z_paper: np.ndarray = field(repr=False, compare=False)


def repeats_for(eps: float) -> int:
    """Independent repeats needed to push a 1/2 success chance up to ``1 - eps``."""
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    return math.ceil(math.log(1 / eps) / math.log(2) - 1e-12)


def error_bound(z_lp: float, gamma_max: int, M: int) -> BoundReport:
    if z_lp < 0 or gamma_max < 1 or M < 1:
        raise ValueError(f"need z_lp >= 0, gamma_max >= 1, M >= 1; got {z_lp}, {gamma_max}, {M}")
    a = gamma_max * math.log(2 * M)
    z_rand = z_lp + math.sqrt(2 * a * z_lp) + a
    lam = (a + math.sqrt(a * a + 8 * z_lp * a)) / 2
    return BoundReport(float(z_lp), int(gamma_max), int(M), z_rand, lam, {e: repeats_for(e) for e in EPSILONS})


def chernoff_tail(mu: float, lam: float, T: float) -> float:
    """Upper bound on ``Pr(X > mu + lam)`` for a sum of independent ``[0, T]`` variables with mean ``mu``."""
    if lam <= 0 or T <= 0 or mu < 0:
        raise ValueError(f"need lam > 0, T > 0, mu >= 0; got {lam}, {T}, {mu}")
    return math.exp(-lam * lam / ((2 * mu + lam) * T))


# ---------------------------------------------------------------------------
# sampling

def _route_table(frac: FractionalSchedule):
    inst = frac.instance
    return frac.stacked_S(), inst.route_school, inst.route_lengths


def starts_from_gammas(S: np.ndarray, school_of_route: np.ndarray, gammas: np.ndarray) -> np.ndarray:
    """First slot with ``S >= gamma`` for every route; ``gammas`` has shape ``(K, N)``.

    Returns 1-based starts of shape ``(K, R)``.
    """
    g = gammas[:, school_of_route]  # (K, R)
    M = S.shape[1]
    counts = (S[None, :, :] < g[:, :, None]).sum(axis=2)
    if (counts >= M).any():
        warnings.warn("cumulative start mass below the drawn level; using slot M", RuntimeWarning, stacklevel=2)
        counts = np.minimum(counts, M - 1)
    return counts + 1


def _loads_batch(starts: np.ndarray, lengths: np.ndarray, T: int) -> np.ndarray:
    K, R = starts.shape
    diff = np.zeros((K, T + 2), dtype=np.int64)
    rows = np.repeat(np.arange(K), R)
    np.add.at(diff, (rows, np.clip(starts, 1, T + 1).ravel()), 1)
    np.add.at(diff, (rows, np.clip(starts + lengths[None, :], 1, T + 1).ravel()), -1)
    return np.cumsum(diff, axis=1)[:, 1:T + 1]


def _z_values(inst: Instance, starts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lengths = inst.route_lengths
    T = inst.M + int(lengths.max()) - 1
    loads = _loads_batch(starts, lengths, T)
    return loads[:, :inst.M].max(axis=1), loads.max(axis=1)


def _result(inst: Instance, starts_row: np.ndarray, gammas_row: np.ndarray, trial: int) -> RoundingResult:
    sched = StartSchedule.from_flat(inst, starts_row)
    z_p = int(interval_profile(starts_row, inst.route_lengths, inst.M).max())
    z_e = int(interval_profile(starts_row, inst.route_lengths, inst.M + int(inst.route_lengths.max()) - 1).max())
    return RoundingResult(sched, z_p, z_e, tuple(float(g) for g in gammas_row), trial)


def _check_marginals(frac: FractionalSchedule, tol: float = 1e-9) -> None:
    for n, x in enumerate(frac.x):
        if (x < -tol).any() or np.abs(x.sum(axis=1) - 1).max() > tol:
            raise RoundingInputError(f"school {n}: start distribution is not a probability vector")


def round_ssp(frac: FractionalSchedule, rng: np.random.Generator) -> RoundingResult:
    """Sample one start per school from its (shared) marginal; all its routes co-start."""
    _check_marginals(frac)
    for n, S in enumerate(frac.S):
        if S.shape[0] > 1 and np.abs(S - S[0]).max() > 1e-9:
            raise RoundingInputError(f"school {n}: routes do not share one start distribution")
    inst = frac.instance
    u = rng.random(inst.N)
    S = np.vstack([s[:1] for s in frac.S])  # one row per school
    counts = (S < u[:, None]).sum(axis=1)
    school_start = np.minimum(counts, inst.M - 1) + 1
    starts = school_start[inst.route_school]
    return _result(inst, starts, u, 0)


def round_sbsp(frac: FractionalSchedule, rng: np.random.Generator) -> RoundingResult:
    """One shared uniform level per school; each route starts where its cumulative mass first reaches it."""
    _check_marginals(frac)
    inst = frac.instance
    gammas = rng.random(inst.N)
    S, school_of, _ = _route_table(frac)
    starts = starts_from_gammas(S, school_of, gammas[None, :])[0]
    return _result(inst, starts, gammas, 0)


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(trial)])))


def trial_gammas(seed: int, trials: range | np.ndarray, N: int) -> np.ndarray:
    return np.vstack([trial_rng(seed, k).random(N) for k in trials]) if len(trials) else np.zeros((0, N))


def best_of_k(inst: Instance, frac: FractionalSchedule, K: int = 1000, seed: int = 0, *, chunk: int = 256) -> BestOfK:
    """Run ``K`` independent shared-level roundings and keep the one with the fewest buses.

    Trial ``k`` draws from a stream keyed by ``(seed, k)``, so the outcome does
    not depend on how trials are batched or parallelized.
    """
    if K < 1:
        raise ValueError(f"K must be positive, got {K}")
    if frac.instance is not inst and frac.instance != inst:
        raise RoundingInputError("fractional schedule belongs to a different instance")
    _check_marginals(frac)
    S, school_of, _ = _route_table(frac)
    z_all = np.empty(K, dtype=np.int64)
    best_k, best_z, best_starts, best_g = -1, None, None, None
    for lo in range(0, K, chunk):
        ks = np.arange(lo, min(K, lo + chunk))
        gam = trial_gammas(seed, ks, inst.N)
        starts = starts_from_gammas(S, school_of, gam)
        z_p, _ = _z_values(inst, starts)
        z_all[ks] = z_p
        j = int(np.argmin(z_p))
        if best_z is None or z_p[j] < best_z:
            best_k, best_z, best_starts, best_g = int(ks[j]), int(z_p[j]), starts[j], gam[j]
    best = _result(inst, best_starts, best_g, best_k)
    bound = error_bound(max(frac.z, 0.0), derived_stats(inst).gamma_max, inst.M)
    stats = TrialStats(
        K=K, z_min=int(z_all.min()), z_mean=float(z_all.mean()), z_max=int(z_all.max()),
        z_rand=bound.z_rand, within_z_rand=float(np.mean(z_all <= bound.z_rand)),
    )
    return BestOfK(best, stats, z_all)


def verify_rounding(inst: Instance, result: RoundingResult) -> bool:
    return bool(check_feasible(inst, result.schedule))
