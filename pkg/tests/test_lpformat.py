import math

import pytest
from hypothesis import given, settings, strategies as st

from ddcsp.errors import ParseError
from ddcsp.milp import LpModel, parse_lp, read_lp_file, solve_milp, write_lp, write_lp_file
from ddcsp.milp.lpformat import models_equal


def sample_model():
    m = LpModel("sample")
    x = m.add_var("x", 0, 1, binary=True)
    y = m.add_var("y", -math.inf, math.inf)
    z = m.add_var("z", 1.5, 7.25)
    m.add_constraint("c1", {x: 3, y: -1.25}, "<=", 4)
    m.add_constraint("c2", {y: 1, z: 1}, ">=", -2)
    m.add_constraint("c3", {x: 1, z: 2}, "=", 5)
    m.set_objective({x: 2, y: 0.1, z: -1}, "max", constant=1.0)
    return m


def test_six_part_layout():
    lines = write_lp(sample_model()).splitlines()
    assert lines[0].startswith("\\")
    heads = [l for l in lines if not l.startswith(" ")]
    assert heads == ["\\ Problem: sample", "Maximize", "Subject To", "Bounds", "Binaries", "End"]
    assert " y free" in lines


def test_round_trip(tmp_path):
    m = sample_model()
    back = parse_lp(write_lp(m))
    assert models_equal(m, back)
    assert write_lp(back) == write_lp(m)
    path = tmp_path / "m.lp"
    write_lp_file(m, path)
    assert models_equal(m, read_lp_file(path))
    assert solve_milp(back).objective == pytest.approx(solve_milp(m).objective)


def test_long_rows_wrap_and_parse():
    m = LpModel("wide")
    xs = [m.add_var(f"x{j}", 0, 1, binary=True) for j in range(30)]
    m.add_constraint("all", {x: 1 for x in xs}, "<=", 7)
    m.set_objective({x: j + 1 for j, x in enumerate(xs)}, "max")
    text = write_lp(m)
    assert max(len(l) for l in text.splitlines()) < 200
    assert models_equal(m, parse_lp(text))


def test_bad_input():
    with pytest.raises(ParseError):
        parse_lp("Minimize\n obj: x\nSubject To\n c: x <=\nEnd\n")
    with pytest.raises(ValueError):
        m = LpModel()
        m.add_var("bad name")
        write_lp(m)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e6, 1e6, allow_nan=False), st.integers(0, 3)),
                min_size=1, max_size=12),
       st.floats(-1e3, 1e3, allow_nan=False), st.sampled_from(["<=", ">=", "="]))
def test_random_round_trip(terms, rhs, sense):
    m = LpModel("rnd")
    for j in range(4):
        m.add_var(f"v{j}", -j, j + 0.5, binary=(j == 0))
    m.add_constraint("r", {j: c for c, j in terms}, sense, rhs)
    m.set_objective({j: c for c, j in terms}, "min")
    assert models_equal(m, parse_lp(write_lp(m)))
