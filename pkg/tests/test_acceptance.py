"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -s``.
"""

import itertools
import math
import os
import subprocess
import sys
import time
import warnings

import numpy as np
import pytest

from bellsched import (
    Family,
    GeneratorSpec,
    Instance,
    School,
    best_of_k,
    build_lp3s,
    build_lp3x,
    check_feasible,
    chernoff_tail,
    error_bound,
    exact_opt,
    export_mps,
    extract_fractional,
    generate_instance,
    greedy_schedule,
    greedy_search,
    import_mps,
    load_profile,
    round_sbsp,
    solve,
    tiny_instance,
)
from bellsched.exact import enumerate_school_points
from bellsched.experiment import ExperimentConfig, emit_report, run_experiment
from bellsched.lp import single_school_polytope
from bellsched.simplex import solve_vertex_with_objective

CORPUS_SIZE = 200


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} | {detail}")
        assert ok, detail

    return emit


def lp_fractional(inst, mode="paper"):
    model = build_lp3s(inst, mode)
    sol = solve(model)
    assert sol.optimal
    return sol, extract_fractional(model, sol.values)


def test_1_oracle_sandwich(verdict):
    t0 = time.perf_counter()
    violations = []
    for seed in range(CORPUS_SIZE):
        inst = tiny_instance(seed)
        sol, frac = lp_fractional(inst)
        bk = best_of_k(inst, frac, 1000, seed)
        ex = exact_opt(inst, incumbent=bk.best.schedule)
        if not (ex.optimal and math.ceil(sol.objective - 1e-9) <= ex.opt <= bk.best.z_paper):
            violations.append((seed, sol.objective, ex.opt, bk.best.z_paper))
    elapsed = time.perf_counter() - t0
    verdict(1, not violations and elapsed < 120,
            f"{CORPUS_SIZE} tiny instances, {len(violations)} violations of ceil(lp) <= opt <= best-of-1000, {elapsed:.1f}s")


def test_2_greedy_sandwich(verdict):
    sandwich, lemma = [], []
    for seed in range(CORPUS_SIZE):
        ssp = tiny_instance(seed).as_ssp()
        G = max(ssp.gammas)
        res = greedy_search(ssp)
        opt = exact_opt(ssp).opt
        if not ((res.U + G) / 3 <= opt <= res.U + G):
            sandwich.append((seed, res.U, G, opt))
        for guess in range(1, ssp.N * G + 1):
            out = greedy_schedule(ssp, guess)
            if out.feasible and load_profile(ssp, out.schedule).loads.max() > guess + G:
                lemma.append((seed, guess))
    verdict(2, not sandwich and not lemma,
            f"{len(sandwich)} violations of (U+G)/3 <= OPT_SSP <= U+G, {len(lemma)} feasible runs above guess+G")


def _x_integer_points(window, gamma, M):
    model = build_lp3x(Instance(M, [School(window, (1,) * gamma)]))
    keep = np.isin(model.row_families, ["3a", "3c"])
    A = model.A[keep][:, :-1].toarray()
    senses, rhs = model.senses[keep], model.rhs[keep]
    X = np.array(list(itertools.product((0.0, 1.0), repeat=gamma * M)))
    act = X @ A.T
    ok = np.where(senses == "E", np.isclose(act, rhs), act <= rhs + 1e-9).all(axis=1)
    return {tuple(int(t) for t in np.argmax(x.reshape(gamma, M), axis=1) + 1) for x in X[ok]}


def test_3_single_school_integrality(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    set_mismatch, fractional = [], []
    for gamma, M, window in itertools.product((1, 2, 3), (3, 4, 5), (0, 1, 2)):
        school = School(window, (1,) * gamma)
        if enumerate_school_points(school, M) != _x_integer_points(window, gamma, M):
            set_mismatch.append((gamma, M, window))
        poly = single_school_polytope(window, gamma, M)
        for _ in range(100):
            sol = solve_vertex_with_objective(poly, rng.normal(size=poly.num_vars))
            dist = np.minimum(np.abs(sol.values), np.abs(sol.values - 1)).max()
            if not sol.optimal or dist > 1e-6:
                fractional.append((gamma, M, window, dist))
    elapsed = time.perf_counter() - t0
    verdict(3, not set_mismatch and not fractional and elapsed < 60,
            f"27 configurations, {len(set_mismatch)} point-set mismatches, {len(fractional)} fractional vertices "
            f"in 2700 solves, {elapsed:.1f}s")


def _fixed_fractional_solutions(count=10):
    out, seed = [], 0
    while len(out) < count:
        inst = tiny_instance(seed)
        seed += 1
        if inst.N < 2 or inst.total_routes < 3:
            continue
        _, frac = lp_fractional(inst)
        if not frac.is_integral():
            out.append((inst, frac))
    return out


def test_4_marginals_and_feasibility(verdict):
    t0 = time.perf_counter()
    trials = 20000
    infeasible, outliers, worst = 0, 0, 0.0
    for k, (inst, frac) in enumerate(_fixed_fractional_solutions()):
        rng = np.random.default_rng(k)
        p = frac.stacked_x()
        counts = np.zeros_like(p)
        rows = np.arange(inst.total_routes)
        for _ in range(trials):
            res = round_sbsp(frac, rng)
            infeasible += not check_feasible(inst, res.schedule)
            counts[rows, res.schedule.flat() - 1] += 1
        se = np.sqrt(p * (1 - p) / trials)
        dev = np.abs(counts / trials - p)
        # zero-variance cells must match exactly
        outliers += int(np.sum(dev > 4 * se + 1e-12))
        worst = max(worst, float(np.max(np.where(se > 0, dev / np.where(se > 0, se, 1), 0))))
    elapsed = time.perf_counter() - t0
    verdict(4, infeasible == 0 and outliers == 0 and elapsed < 60,
            f"10 solutions x {trials} trials, {infeasible} infeasible, {outliers} cells beyond 4 SE "
            f"(worst {worst:.2f} SE), {elapsed:.1f}s")


def test_5_success_probability(verdict):
    fractions = []
    families = list(Family)
    for k in range(10):
        spec = GeneratorSpec(families[k % 4], M=10, N=5, gamma_max=15, seed=100 + k)
        inst = generate_instance(spec)
        _, frac = lp_fractional(inst)
        fractions.append(best_of_k(inst, frac, 1000, seed=k).trials.within_z_rand)
    root_err = 0.0
    for z, G, M in [(0.5, 1, 2), (10.0, 3, 8), (37.2, 15, 10), (250.0, 15, 30), (1000.0, 100, 50)]:
        lam = error_bound(z, G, M).lambda_star
        root_err = max(root_err, abs(chernoff_tail(z, lam, G) - 1 / (2 * M)))
    ok = min(fractions) >= 0.45 and root_err <= 1e-9
    verdict(5, ok, f"min fraction within z_rand {min(fractions):.3f} over 10 instances, lambda* root error {root_err:.2e}")


DESK_CONFIG = dict(sizes=["2p"], instances=5, seed=0, trials=1000, oracle="off")
LIMITS = {Family.BASE: 0.05, Family.SHORT_WINDOW: 0.05, Family.MIXED_SCHOOL: 0.05, Family.SHORT_ROUTE_LITERAL: 0.12}


@pytest.fixture(scope="module")
def desk_runs():
    runs = {}
    for fam in Family:
        t0 = time.perf_counter()
        report = run_experiment(ExperimentConfig(families=[fam], **DESK_CONFIG))
        runs[fam] = (report, time.perf_counter() - t0)
    return runs


def test_6_desk_scale_gaps(verdict, desk_runs):
    parts, ok = [], True
    for fam, (report, seconds) in desk_runs.items():
        gaps = [r.total_gap for r in report.rows if r.status == "ok"]
        avg = float(np.mean(gaps)) if len(gaps) == len(report.rows) else math.inf
        good = avg <= LIMITS[fam] and seconds < 600
        ok &= good
        parts.append(f"{fam.value} {100 * avg:.2f}% (limit {100 * LIMITS[fam]:.0f}%, {seconds:.0f}s)")
    verdict(6, ok, "size 2p average total gap: " + "; ".join(parts))


def test_7_formulation_equivalence(verdict):
    worst_lp, worst_mps = 0.0, 0.0
    for seed in range(20):
        inst = tiny_instance(10_000 + seed)
        model = build_lp3s(inst)
        a = solve(model).objective
        worst_lp = max(worst_lp, abs(a - solve(build_lp3x(inst)).objective))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            again = import_mps(export_mps(model))
        worst_mps = max(worst_mps, abs(a - solve(again).objective))
    verdict(7, worst_lp <= 1e-6 and worst_mps <= 1e-6,
            f"20 tiny instances, max |prefix-sum - start-indicator| {worst_lp:.1e}, max |MPS re-solve - original| {worst_mps:.1e}")


def test_8_determinism(verdict, desk_runs, tmp_path):
    """The CLI run reproduces the in-process desk-scale reports byte for byte."""
    families = [f.value for f in Family]
    cmd = [sys.executable, "-m", "bellsched.cli", "experiment", "--size", "2p", "--instances", "5", "--seed", "0",
           "--trials", "1000", "--oracle", "off", "--out", str(tmp_path)]
    for fam in families:
        cmd += ["--family", fam]
    proc = subprocess.run(cmd, capture_output=True, env={**os.environ, "PYTHONHASHSEED": "1"})
    same = proc.returncode == 0
    for fam in Family:
        in_process = emit_report(desk_runs[fam][0])
        same &= (tmp_path / f"results_{fam.value}.csv").read_bytes() == in_process
    verdict(8, same, f"CLI experiment exit {proc.returncode}, per-family CSV identical to the in-process run: {same}")
