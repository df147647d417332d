import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddcsp.bilevel import (BilevelInstance, CpspInstance, brute_force_bilevel, build_follower_dd,
                           build_single_level_milp, compute_big_m, generate_cpsp, solve_ddr,
                           yes_arcs)
from ddcsp.dd import DpSpec, extreme_path
from ddcsp.errors import CapExceeded, InfeasibleInstance
from ddcsp.milp import solve_milp

from oracles import bilevel_optimum, knapsack_optimum

TOY = CpspInstance(cL=[3, 1], dL=[2, 2], cF=[2, 1], aL=[1, 1], aF=[1, 1], bL=1, bF=2)


def knapsack_follower(cF, AF, bF, order="given"):
    n = len(cF)
    return BilevelInstance(c1L=[0] * n, c2L=[0] * n, AL=[[0] * n], BL=[[0] * n], bL=[0],
                           cF=cF, AF=AF, bF=bF, order=order)


def test_toy_by_every_method():
    inst = TOY.to_bilevel()
    for solve in (solve_ddr, brute_force_bilevel):
        sol = solve(inst)
        assert sol.leader_objective == 1
        assert sol.x_leader == (1, 0) and sol.x_follower == (0, 1)


def test_toy_single_level_model_alone():
    inst = TOY.to_bilevel()
    dd = build_follower_dd(inst)
    model = build_single_level_milp(inst, dd, compute_big_m(inst, dd))
    assert solve_milp(model).objective == pytest.approx(1)


def test_follower_dd_of_three_projects():
    dd = build_follower_dd(knapsack_follower([1, 1, 1], [[2, 2, 4]], [5]))
    assert dd.path_count() == 5


def test_loose_follower_budget_keeps_every_subset():
    dd = build_follower_dd(knapsack_follower([1, 2, 3, 4], [[1, 1, 1, 1]], [4]))
    assert dd.path_count() == 16
    assert max(dd.layer_sizes()) <= 5


def test_zero_follower_budget():
    dd = build_follower_dd(knapsack_follower([1, 2, 3], [[1, 1, 1]], [0]))
    assert dd.path_count() == 1 and set(dd.values) == {0}


def test_big_m_rules():
    inst = knapsack_follower([4, 3, 7, 8], [[7, 5, 4, 1]], [8])
    dd = build_follower_dd(inst)
    seven = [a for a in yes_arcs(dd) if dd.lengths[a] == 7]
    assert seven
    wide = compute_big_m(inst, dd, "range")
    tight = compute_big_m(inst, dd, "ell")
    assert all(wide[a] == 29 and tight[a] == 7 for a in seven)
    assert compute_big_m(inst, dd, "auto") == tight

    signed = knapsack_follower([-1, 2], [[1, 1]], [2])
    dd = build_follower_dd(signed, drop_negative=False)
    M = compute_big_m(signed, dd, "auto")
    assert all(M[a] == 5 for a in yes_arcs(dd) if dd.lengths[a] == 2)
    with pytest.raises(ValueError):
        compute_big_m(signed, dd, "ell")


def test_negative_follower_profits_are_dropped_for_nonnegative_rows():
    dd = build_follower_dd(knapsack_follower([-1, 2], [[1, 1]], [2]))
    assert all(dd.lengths[a] >= 0 for a in yes_arcs(dd))
    assert dd.path_count() == 2


def test_zero_leader_budget_leaves_the_follower_alone():
    inst = generate_cpsp(8, 0.5, seed=3)
    inst.bL = 0
    sol = solve_ddr(inst.to_bilevel())
    assert sol.x_leader == (0,) * 8
    best, _ = knapsack_optimum(inst.cF, [inst.aF], [inst.bF])
    assert sol.follower_objective == best
    assert sol.leader_objective == brute_force_bilevel(inst.to_bilevel()).leader_objective


def test_no_leader_penalty_decouples_the_levels():
    inst = generate_cpsp(8, 0.3, seed=4, d_mode="zero")
    best, _ = knapsack_optimum(inst.cL, [inst.aL], [inst.bL])
    assert solve_ddr(inst.to_bilevel()).leader_objective == best


def test_single_follower_path_reduces_to_the_leader_knapsack():
    inst = BilevelInstance(c1L=[5, 4, 3], c2L=[-1, -1, -1], AL=[[2, 2, 1]], BL=[[0, 0, 0]],
                           bL=[3], cF=[1, 1, 1], AF=[[1, 1, 1]], bF=[0])
    best, _ = knapsack_optimum([5, 4, 3], [[2, 2, 1]], [3])
    assert solve_ddr(inst).leader_objective == best


def test_brute_force_limits():
    with pytest.raises(CapExceeded):
        brute_force_bilevel(generate_cpsp(21, 0.5, seed=0).to_bilevel())
    inst = TOY.to_bilevel()
    inst.bL = [-1]
    with pytest.raises(InfeasibleInstance):
        brute_force_bilevel(inst)


def test_huge_penalties_make_the_leader_block_greedily():
    inst = CpspInstance(cL=[0, 0, 0], dL=[100, 100, 100], cF=[3, 2, 1], aL=[1, 1, 1],
                        aF=[1, 1, 1], bL=3, bF=1)
    sol = brute_force_bilevel(inst.to_bilevel())
    assert sol.x_leader == (1, 1, 1) and sol.leader_objective == 0
    assert solve_ddr(inst.to_bilevel()).leader_objective == 0
    # with one block short every choice leaves an item; the first vector wins the tie
    inst.bL = 2
    assert brute_force_bilevel(inst.to_bilevel()).leader_objective == -100


class PairFollower(DpSpec):
    """Follower picks at most two items and earns a bonus for a pair."""

    def __init__(self, gains):
        self.gains = gains

    def initial_state(self):
        return 0

    def domain(self, state, layer):
        return (0, 1) if state < 2 else (0,)

    def transition(self, state, layer, value):
        return state + value

    def cost(self, state, layer, value):
        return value * (self.gains[layer] + (3 if state == 1 else 0))


def test_dp_follower():
    gains = [2, 5, 1, 4]
    inst = BilevelInstance(c1L=[1, 1, 1, 1], c2L=[-2, -3, -1, -2], AL=[[1, 1, 1, 1]],
                           BL=[[0] * 4], bL=[1], follower_spec=PairFollower(gains))
    assert solve_ddr(inst).leader_objective == brute_force_bilevel(inst).leader_objective


def test_generator_contract():
    inst = generate_cpsp(30, 0.1, "u25", seed=1)
    a = np.array(inst.aL)
    assert inst.aF == inst.aL and inst.bF == inst.bL
    assert inst.bL == int(np.floor(0.1 * a.sum() + 0.5))
    assert a.min() >= 1 and a.max() <= 25
    assert all(1 <= c - 5 * x <= 10 for c, x in zip(inst.cL, inst.aL))
    assert all(1 <= c - 5 * x <= 10 for c, x in zip(inst.cF, inst.aF))
    assert inst.dL == inst.cF
    assert generate_cpsp(30, 0.1, "u25", seed=1) == inst
    assert generate_cpsp(12, 1.0, seed=2).bL == sum(generate_cpsp(12, 1.0, seed=2).aL)
    signed = generate_cpsp(10, 0.5, seed=3, follower_profit="signed")
    assert all(-10 <= c <= 10 for c in signed.cF)
    with pytest.raises(ValueError):
        generate_cpsp(5, 0.0)


def test_certificate_residuals():
    for seed in range(5):
        sol = solve_ddr(generate_cpsp(10, 0.5, seed=seed).to_bilevel())
        assert max(sol.residuals.values()) <= 1e-6


bilevels = st.integers(1, 6).flatmap(lambda n: st.tuples(
    st.lists(st.integers(-5, 9), min_size=n, max_size=n),
    st.lists(st.integers(-5, 5), min_size=n, max_size=n),
    st.lists(st.integers(0, 4), min_size=n, max_size=n),
    st.lists(st.integers(0, 3), min_size=n, max_size=n),
    st.integers(0, 8),
    st.lists(st.integers(-6, 9), min_size=n, max_size=n),
    st.lists(st.integers(0, 5), min_size=n, max_size=n),
    st.integers(0, 10),
    st.sampled_from(["given", "weight-asc"]),
    st.sampled_from(["auto", "range"])))


@settings(max_examples=60, deadline=None)
@given(bilevels)
def test_single_level_model_matches_enumeration(data):
    c1, c2, aL, bLrow, bL, cF, aF, bF, order, rule = data
    inst = BilevelInstance(c1L=c1, c2L=c2, AL=[aL], BL=[bLrow], bL=[bL], cF=cF, AF=[aF],
                           bF=[bF], order=order)
    expected = bilevel_optimum(c1, c2, [aL], [bLrow], [bL], cF, [aF], [bF])
    if expected == -np.inf:
        with pytest.raises(InfeasibleInstance):
            solve_ddr(inst, rule=rule)
        return
    sol = solve_ddr(inst, rule=rule)
    assert sol.leader_objective == pytest.approx(expected)
    assert brute_force_bilevel(inst).leader_objective == pytest.approx(expected)
    assert max(sol.residuals.values()) <= 1e-6
    blocked = build_follower_dd(inst, drop_negative=False)
    keep = [not (blocked.values[a] == 1 and sol.x_leader[blocked.var_order[blocked.arc_layer(a)]])
            for a in range(blocked.num_arcs)]
    assert sol.follower_objective == pytest.approx(extreme_path(blocked.restrict(keep), "max").objective)
