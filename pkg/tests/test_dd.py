import itertools

import pytest
from hypothesis import given, settings, strategies as st

from ddcsp.dd import (DecisionDiagram, DpSpec, LinearBinarySpec, compile_dd, enumerate_paths,
                      export_dot, extreme_path, reduce_dd)
from ddcsp.errors import LayerExplosion, NoFeasiblePath, PathCapExceeded

from oracles import feasible_vectors

KNAP_C = [4, 3, 7, 8]
KNAP_A = [[7, 5, 4, 1]]
KNAP_B = [8]


def knapsack_dd(reduce=True):
    dd = compile_dd(LinearBinarySpec(KNAP_C, KNAP_A, KNAP_B), 4)
    return reduce_dd(dd) if reduce else dd


def path_multiset(dd):
    return sorted((dd.assignment(p.arcs), p.objective) for p in enumerate_paths(dd))


class OneVariable(DpSpec):
    def initial_state(self):
        return 0

    def domain(self, state, layer):
        return (0, 1)

    def transition(self, state, layer, value):
        return value

    def cost(self, state, layer, value):
        return value


def test_unreduced_knapsack_layers_hold_the_running_weights():
    dd = knapsack_dd(reduce=False)
    assert dd.layer_sizes() == [1, 2, 3, 4, 1]
    states = [sorted(dd.node_states[u][0] for u in layer) for layer in dd.layers[:-1]]
    assert states == [[0], [0, 7], [0, 5, 7], [0, 4, 5, 7]]


def test_single_variable_diagram():
    dd = compile_dd(OneVariable(), 1)
    assert (dd.num_nodes, dd.num_arcs) == (2, 2)


def test_follower_knapsack_of_three_projects_has_five_paths():
    dd = compile_dd(LinearBinarySpec([1, 1, 1], [[2, 2, 4]], [5]), 3)
    assert dd.path_count() == 5
    assert dd.num_nodes == 7
    assert len(list(enumerate_paths(dd))) == 5


def test_reduced_knapsack_diagram():
    dd = knapsack_dd()
    assert (dd.num_nodes, dd.num_arcs) == (7, 10)
    assert path_multiset(dd) == path_multiset(knapsack_dd(reduce=False))
    assert len(path_multiset(dd)) == 8


def test_reduce_is_idempotent():
    dd = knapsack_dd()
    again = reduce_dd(dd)
    assert (again.num_nodes, again.num_arcs) == (dd.num_nodes, dd.num_arcs)
    assert again.tails == dd.tails and again.heads == dd.heads


def test_reduce_merges_the_last_layer():
    before = knapsack_dd(reduce=False)
    after = reduce_dd(before)
    assert len(before.layers[3]) == 4
    assert len(after.layers[3]) == 1
    assert path_multiset(before) == path_multiset(after)


def test_longest_and_shortest_path():
    dd = knapsack_dd()
    best = extreme_path(dd, "max")
    assert best.objective == 15 and dd.assignment(best.arcs) == (0, 0, 1, 1)
    worst = extreme_path(dd, "min")
    assert worst.objective == 0 and dd.assignment(worst.arcs) == (0, 0, 0, 0)


def test_single_path_diagram():
    dd = compile_dd(LinearBinarySpec([5, 6], [[1, 1]], [0]), 2)
    assert dd.path_count() == 1
    assert extreme_path(dd, "max").values == (0, 0)


def test_path_enumeration_cap():
    with pytest.raises(PathCapExceeded):
        list(enumerate_paths(knapsack_dd(), cap=7))


def test_single_arc_chain_has_one_path():
    dd = DecisionDiagram(1, [0, 1], [0], [1], [0], [0.0])
    assert [p.arcs for p in enumerate_paths(dd)] == [(0,)]


def test_infeasible_spec():
    with pytest.raises(NoFeasiblePath):
        compile_dd(LinearBinarySpec([1, 1], [[1, 1]], [-1]), 2)


def test_layer_cap():
    with pytest.raises(LayerExplosion):
        compile_dd(LinearBinarySpec([1] * 6, [[1, 2, 4, 8, 16, 32]], [63]), 6, node_cap=3)


def test_dot_export():
    text = export_dot(knapsack_dd())
    assert text.count("[label=") - text.count("->") == 7
    assert "style=dashed" in text and "style=solid" in text
    zero = DecisionDiagram(1, [0, 1], [0], [1], [1], [0.0])
    assert 'label="0"' in export_dot(zero)


def test_dead_ends_are_rejected():
    with pytest.raises(ValueError):
        DecisionDiagram(2, [0, 1, 1, 2], [0, 0, 1], [1, 2, 3], [0, 1, 0], [0, 0, 0])


def test_restrict_keeps_only_live_paths():
    dd = knapsack_dd()
    keep = [v == 0 or dd.arc_layer(a) != 3 for a, v in enumerate(dd.values)]
    sub = dd.restrict(keep)
    assert all(x[3] == 0 for x, _ in path_multiset(sub))


def test_variable_order_maps_layers_back_to_variables():
    order = [3, 2, 1, 0]
    spec = LinearBinarySpec([KNAP_C[j] for j in order], [[KNAP_A[0][j] for j in order]], KNAP_B)
    dd = reduce_dd(compile_dd(spec, 4, var_order=order))
    best = extreme_path(dd, "max")
    assert dd.assignment(best.arcs) == (0, 0, 1, 1)


knapsacks = st.integers(1, 7).flatmap(lambda n: st.tuples(
    st.lists(st.integers(-5, 9), min_size=n, max_size=n),
    st.lists(st.lists(st.integers(-3, 8), min_size=n, max_size=n), min_size=1, max_size=2),
    st.lists(st.integers(0, 12), min_size=2, max_size=2)))


@settings(max_examples=60, deadline=None)
@given(knapsacks)
def test_paths_biject_with_feasible_vectors(data):
    c, A, b = data
    b = b[:len(A)]
    n = len(c)
    X = feasible_vectors(A, b, n)
    expected = sorted((tuple(int(v) for v in x), float(sum(ci * xi for ci, xi in zip(c, x))))
                      for x in X)
    try:
        dd = compile_dd(LinearBinarySpec(c, A, b), n)
    except NoFeasiblePath:
        assert not expected
        return
    got = path_multiset(dd)
    assert got == expected
    red = reduce_dd(dd)
    assert path_multiset(red) == expected
    assert reduce_dd(red).num_nodes == red.num_nodes
    assert extreme_path(red, "max").objective == max(v for _, v in expected)
    assert extreme_path(red, "min").objective == min(v for _, v in expected)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(0, 3))
def test_reduced_layers_have_distinct_signatures(n, slack):
    dd = reduce_dd(compile_dd(LinearBinarySpec(list(range(1, n + 1)), [[1] * n], [slack]), n))
    for layer in dd.layers[1:-1]:
        sigs = [tuple(sorted((dd.heads[a], dd.values[a], dd.lengths[a]) for a in dd.out_arcs[u]))
                for u in layer]
        assert len(set(sigs)) == len(sigs)
    assert dd.path_count() == sum(1 for x in itertools.product((0, 1), repeat=n) if sum(x) <= slack)
