import numpy as np
import pytest

from bellsched import Instance, School, StartSchedule, build_lp3s, build_lp3x, build_ssp_lp, extract_fractional, solve
from bellsched.exact import enumerate_school_points
from bellsched.lp import (
    Z_KEY,
    ExtractionError,
    LpSizeError,
    NumericalConsistencyError,
    VarKey,
    count_lp3s_rows,
    repair_prefix_sums,
    s_from_x,
    x_from_s,
)
from bellsched.schedule import interval_profile

from conftest import tiny_corpus


def values_for(model, sched):
    """Prefix-sum column values of an integral schedule, with z at the paper-mode peak."""
    inst = model.instance
    v = np.zeros(model.num_vars)
    for n, row in enumerate(sched.starts):
        for i, t in enumerate(row):
            for m in range(t, inst.M + 1):
                v[model.var_keys[VarKey("S", n, i, m)]] = 1.0
    v[model.var_keys[Z_KEY]] = interval_profile(sched.flat(), inst.route_lengths, inst.M).max()
    return v


def test_row_tally_example(two_route_school):
    model = build_lp3s(two_route_school)
    assert model.num_vars == 7
    # rows with m + l = M are implied by S^(M) = 1, so only m = 1 survives per ordered pair
    assert model.tally() == {"3e": 2, "3f": 4, "3g": 2, "3i": 3}
    assert "R3e_1_1_2_1" in model.row_names and "R3e_1_2_1_1" in model.row_names


def test_single_route_has_no_window_rows():
    model = build_lp3s(Instance(4, [School(0, (2,)), School(1, (1,))]))
    assert model.tally().get("3e", 0) == 0


def test_full_window_has_no_window_rows():
    inst = Instance(5, [School(4, (1, 2, 3)), School(4, (2, 2))])
    assert build_lp3s(inst).tally().get("3e", 0) == 0


def test_row_counts_match_formula():
    for inst in tiny_corpus(100, offset=1000):
        for mode in ("paper", "extended"):
            model = build_lp3s(inst, mode)
            expect = {k: v for k, v in count_lp3s_rows(inst, mode).items() if v}
            assert model.tally() == expect
            M = inst.M
            assert expect.get("3f", 0) == sum(g * (M - 1) for g in inst.gammas)
            assert expect["3g"] == sum(inst.gammas)


def test_size_guard():
    inst = Instance(6, [School(0, (1, 1, 1))])
    with pytest.raises(LpSizeError, match="3e"):
        build_lp3s(inst, max_rows=10)


def test_ssp_examples():
    sol = solve(build_ssp_lp(Instance(2, [School(0, (1, 1, 1))])))
    assert sol.objective == pytest.approx(1.5, abs=1e-9)
    assert solve(build_ssp_lp(Instance(1, [School(0, (1,))]))).objective == pytest.approx(1.0)
    two = Instance(2, [School(0, (1,)), School(0, (1,))])
    assert solve(build_ssp_lp(two)).objective == pytest.approx(1.0)


def test_ssp_symmetric_marginal():
    model = build_ssp_lp(Instance(2, [School(0, (1, 1, 1))]))
    frac = extract_fractional(model, solve(model).values)
    assert np.allclose(frac.x[0], 0.5, atol=1e-9)


def test_prefix_sum_transforms():
    assert np.allclose(x_from_s([0.2, 0.2, 1.0]), [0.2, 0.0, 0.8])
    assert np.allclose(s_from_x([1, 0, 0]), [1, 1, 1])
    with pytest.raises(NumericalConsistencyError):
        x_from_s([0.5, 0.3, 1.0])
    with pytest.raises(NumericalConsistencyError):
        s_from_x([0.5, -0.1, 0.6])


def test_prefix_sum_round_trip(rng):
    x = rng.dirichlet(np.ones(7), size=1000)
    assert np.abs(x_from_s(s_from_x(x)) - x).max() <= 1e-12


def test_integral_vertex_extracts_unit_vectors():
    inst = Instance(4, [School(1, (2, 1)), School(0, (3,))])
    model = build_lp3s(inst)
    frac = extract_fractional(model, values_for(model, StartSchedule(((2, 3), (1,)))))
    assert frac.is_integral()
    for x in frac.x:
        assert np.all(np.isin(x, [0.0, 1.0])) and np.allclose(x.sum(axis=1), 1)


def test_drift_is_repaired():
    inst = Instance(3, [School(1, (1, 1))])
    model = build_lp3s(inst)
    v = values_for(model, StartSchedule(((1, 2),)))
    v[model.var_keys[VarKey("S", 0, 0, 3)]] = 1 - 5e-10
    frac = extract_fractional(model, v)
    assert frac.S[0][0, -1] == 1.0


def test_extraction_names_violated_row():
    inst = Instance(3, [School(0, (1, 1))])
    model = build_lp3s(inst)
    v = values_for(model, StartSchedule(((1, 1),)))
    v[model.var_keys[VarKey("S", 0, 0, 1)]] = 0.0  # route 1 now starts at 2, route 2 at 1
    with pytest.raises(ExtractionError, match="R3e_1_2_1_1"):
        extract_fractional(model, v)
    with pytest.raises(ExtractionError):
        extract_fractional(model, np.zeros(3))


def test_repair_is_fixpoint_on_valid_input():
    S = np.array([[0.2, 0.5, 1.0], [0.4, 0.6, 1.0]])
    assert np.array_equal(repair_prefix_sums(S, 1), S)


def _random_feasible_x(inst, rng):
    """Convex combination of integral feasible schedules, in x-space per school."""
    xs = []
    for school in inst.schools:
        points = sorted(enumerate_school_points(school, inst.M, max_routes=9, max_slots=9))
        w = rng.dirichlet(np.ones(len(points)))
        x = np.zeros((school.num_routes, inst.M))
        for p, wk in zip(points, w):
            x[np.arange(school.num_routes), np.array(p) - 1] += wk
        xs.append(x)
    return xs


def _pack(model, inst, blocks, family):
    v = np.zeros(model.num_vars)
    for n, b in enumerate(blocks):
        for i in range(b.shape[0]):
            for m in range(1, inst.M + 1):
                v[model.var_keys[VarKey(family, n, i, m)]] = b[i, m - 1]
    return v


def test_x_and_s_spaces_correspond(rng):
    for inst in tiny_corpus(60, offset=2000):
        m3s, m3x = build_lp3s(inst), build_lp3x(inst)
        xs = _random_feasible_x(inst, rng)
        vx = _pack(m3x, inst, xs, "x")
        vx[m3x.var_keys[Z_KEY]] = inst.total_routes
        assert m3x.is_feasible(vx)
        vs = _pack(m3s, inst, [s_from_x(x) for x in xs], "S")
        vs[m3s.var_keys[Z_KEY]] = inst.total_routes
        assert m3s.is_feasible(vs)
        # same load rows in either space
        assert np.allclose(m3s.row_activity(vs)[m3s.row_families == "3i"], m3x.row_activity(vx)[m3x.row_families == "3b"])


def test_lp3s_and_lp3x_optima_agree():
    for inst in tiny_corpus(20, offset=3000):
        for mode in ("paper", "extended"):
            a = solve(build_lp3s(inst, mode))
            b = solve(build_lp3x(inst, mode))
            assert abs(a.objective - b.objective) <= 1e-6


def test_modes_share_optimum():
    for inst in tiny_corpus(30, offset=3100):
        assert solve(build_lp3s(inst, "paper")).objective == pytest.approx(
            solve(build_lp3s(inst, "extended")).objective, abs=1e-7)


def test_objective_is_tight():
    for inst in tiny_corpus(30, offset=3200):
        model = build_lp3s(inst)
        sol = solve(model)
        act = model.row_activity(sol.values)[model.row_families == "3i"]
        # rows read load - z <= 0, so the tightest row sits at zero
        assert act.max() == pytest.approx(0.0, abs=1e-8)


def test_small_lp3s_optimum():
    model = build_lp3s(Instance(3, [School(1, (1, 1))]))
    assert solve(model).objective == pytest.approx(2 / 3, abs=1e-9)
    assert solve(build_lp3x(model.instance)).objective == pytest.approx(2 / 3, abs=1e-9)


def test_summary_json():
    model = build_lp3s(Instance(3, [School(1, (1, 1))]))
    assert model.summary()["rows"] == model.tally()
    assert b'"num_vars": 7' in model.summary_json()
