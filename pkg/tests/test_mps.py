import warnings
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from bellsched import Instance, School, build_lp3s, build_lp3x, export_mps, import_mps, solve
from bellsched.lp import LpModel
from bellsched.mps import MpsFormatError, read_solution, write_solution

from conftest import tiny_corpus

DATA = Path(__file__).parent / "data"


def quiet_export(model):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return export_mps(model)


def short_model():
    A = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, -1.0], [0.0, 1.0]]))
    return LpModel(
        np.array([1.0, 2.0]), A, np.array(list("GLE")), np.array([1.0, 0.5, 0.25]),
        np.array([0.0, -np.inf]), np.array([4.0, np.inf]), ["x", "y"], ["c1", "c2", "c3"], np.array(["g"] * 3),
    )


def test_golden_free_format():
    model = build_lp3s(Instance(3, [School(1, (1, 1))]))
    with pytest.warns(UserWarning, match="free-format"):
        data = export_mps(model)
    assert data == (DATA / "lp3s_small.mps").read_bytes()
    assert data.startswith(b"* WARNING")


def test_fixed_format_when_names_fit():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        data = export_mps(short_model())
    text = data.decode()
    assert "WARNING" not in text
    assert " G  c1" in text
    assert " UP BND       x                    4" in text
    assert " FR BND       y" in text
    back = import_mps(data)
    assert solve(back).objective == pytest.approx(solve(short_model()).objective)


def test_round_trip_preserves_model():
    model = build_lp3s(tiny_corpus(1, offset=1)[0])
    back = import_mps(quiet_export(model))
    assert back.col_names == model.col_names and back.row_names == model.row_names
    assert (back.A != model.A).nnz == 0
    assert np.array_equal(back.senses, model.senses)
    assert np.array_equal(back.lo, model.lo) and np.array_equal(back.hi, model.hi)


def test_resolve_matches_on_random_tiny_models():
    for inst in tiny_corpus(20, offset=7000):
        for build in (build_lp3s, build_lp3x):
            model = build(inst)
            assert solve(import_mps(quiet_export(model))).objective == pytest.approx(solve(model).objective, abs=1e-6)


def test_no_window_rows():
    model = build_lp3s(Instance(3, [School(0, (2,)), School(2, (1, 1))]))
    assert "3e" not in model.tally()
    data = quiet_export(model)
    assert b"R3e" not in data
    assert solve(import_mps(data)).objective == pytest.approx(solve(model).objective)


def test_highs_reads_export(tmp_path):
    highspy = pytest.importorskip("highspy")
    for inst in tiny_corpus(5, offset=7100):
        model = build_lp3s(inst)
        path = tmp_path / "m.mps"
        path.write_bytes(quiet_export(model))
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.readModel(str(path))
        h.run()
        assert h.getInfo().objective_function_value == pytest.approx(solve(model).objective, abs=1e-6)


def test_ranges_and_maximize():
    text = """NAME T
OBJSENSE
    MAX
ROWS
 N obj
 L r1
COLUMNS
 x obj 1 r1 1
RHS
 RHS r1 4
RANGES
 RNG r1 3
BOUNDS
 UP BND x 10
ENDATA
"""
    model = import_mps(text)
    assert model.num_rows == 2
    assert solve(model).objective == pytest.approx(-4)


def test_parse_errors():
    with pytest.raises(MpsFormatError):
        import_mps("ROWS\n N obj\n Q r1\nENDATA\n")
    with pytest.raises(MpsFormatError):
        import_mps("ROWS\n N obj\nCOLUMNS\n x r9 1\nENDATA\n")


def test_solution_files():
    model = short_model()
    vals = np.array([0.75, 0.25])
    assert np.array_equal(read_solution(write_solution(model, vals), model), vals)
    assert read_solution("# comment\ny 2\n", model).tolist() == [0.0, 2.0]
    with pytest.raises(MpsFormatError):
        read_solution("w 1\n", model)
