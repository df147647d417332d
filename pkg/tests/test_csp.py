import pytest
from hypothesis import given, settings, strategies as st

from ddcsp.csp import (CspInstance, SideConstraints, brute_force_csp, build_flow_milp,
                       expand_state_graph, solve_flow_milp, solve_labeling, solve_pulse,
                       solve_unconstrained)
from ddcsp.dd import LinearBinarySpec, compile_dd, extreme_path, reduce_dd
from ddcsp.errors import NoFeasiblePath
from ddcsp.pulse import PulseConfig

from oracles import feasible_vectors

METHODS = {
    "labeling": solve_labeling,
    "pulse": solve_pulse,
    "flow": solve_flow_milp,
    "brute": brute_force_csp,
    "state-graph": lambda csp: expand_state_graph(csp).extreme_path(),
}


def knapsack_csp(side_row=(5, 2, 2, 7), budget=7):
    dd = reduce_dd(compile_dd(LinearBinarySpec([4, 3, 7, 8], [[7, 5, 4, 1]], [8]), 4))
    side = SideConstraints.from_variable_rows(dd, [side_row], [budget])
    return CspInstance(dd, side, "max")


@pytest.mark.parametrize("method", sorted(METHODS))
def test_side_row_changes_the_optimum(method):
    csp = knapsack_csp()
    sol = METHODS[method](csp)
    assert sol.objective == 8
    assert csp.dd.assignment(sol.arcs) == (0, 0, 0, 1)


def test_zero_budget_leaves_only_the_empty_selection():
    csp = knapsack_csp(budget=0)
    for method in METHODS.values():
        sol = method(csp)
        assert sol.objective == 0 and csp.dd.assignment(sol.arcs) == (0, 0, 0, 0)


def test_no_side_rows_is_the_plain_longest_path():
    dd = knapsack_csp().dd
    csp = CspInstance(dd, SideConstraints.empty(), "max")
    expected = extreme_path(dd, "max").objective
    assert solve_unconstrained(csp).objective == expected
    for method in METHODS.values():
        assert method(csp).objective == expected


def test_flow_model_shape():
    model = build_flow_milp(knapsack_csp())
    assert model.num_binaries == 10
    assert model.num_constraints == 7


def test_state_graph_sizes():
    graph = expand_state_graph(knapsack_csp())
    dd = graph.csp.dd
    assert graph.states_at(dd.terminal) == [(0.0,), (2.0,), (5.0,), (7.0,)]
    assert graph.num_nodes == 13


def test_unreachable_budget():
    dd = knapsack_csp().dd
    side = SideConstraints(1, [(0, a, 1.0) for a in range(dd.num_arcs)], [1.0])
    csp = CspInstance(dd, side, "max")
    for method in METHODS.values():
        with pytest.raises(NoFeasiblePath):
            method(csp)


def test_side_constraints_validate_their_input():
    with pytest.raises(ValueError):
        SideConstraints(1, [(0, 0, -1.0)], [1.0])
    with pytest.raises(ValueError):
        SideConstraints(1, [], [-1.0])
    with pytest.raises(ValueError):
        CspInstance(knapsack_csp().dd, SideConstraints(1, [(0, 99, 1.0)], [1.0]))


def test_pulse_store_size_does_not_change_the_value():
    csp = knapsack_csp()
    for size in (0, 1, 4, 16):
        assert solve_pulse(csp, PulseConfig(store_size=size)).objective == 8


instances = st.integers(1, 8).flatmap(lambda n: st.tuples(
    st.lists(st.integers(-6, 9), min_size=n, max_size=n),
    st.lists(st.integers(0, 6), min_size=n, max_size=n),
    st.integers(0, 3 * n),
    st.lists(st.lists(st.integers(0, 5), min_size=n, max_size=n), min_size=0, max_size=3),
    st.lists(st.integers(0, 10), min_size=3, max_size=3),
    st.sampled_from(["min", "max"]),
    st.sampled_from([0, 1, 4, 16])))


@settings(max_examples=60, deadline=None)
@given(instances)
def test_methods_agree_with_enumeration(data):
    c, a, cap, G, d, sense, store = data
    n = len(c)
    d = d[:len(G)]
    X = feasible_vectors([a] + G, [cap] + d, n)
    dd = reduce_dd(compile_dd(LinearBinarySpec(c, [a], [cap]), n))
    csp = CspInstance(dd, SideConstraints.from_variable_rows(dd, G, d), sense)
    if len(X) == 0:
        for method in METHODS.values():
            with pytest.raises(NoFeasiblePath):
                method(csp)
        return
    vals = [float(sum(ci * xi for ci, xi in zip(c, x))) for x in X]
    expected = max(vals) if sense == "max" else min(vals)
    for name, method in METHODS.items():
        sol = method(csp)
        assert sol.objective == pytest.approx(expected), name
        assert csp.side.satisfied(sol.arcs), name
    assert solve_pulse(csp, PulseConfig(store_size=store)).objective == pytest.approx(expected)
