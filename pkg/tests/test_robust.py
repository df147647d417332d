import math

import pytest
from hypothesis import given, settings, strategies as st

from ddcsp.csp import CspInstance, brute_force_csp, solve_labeling
from ddcsp.dd import LinearBinarySpec, compile_dd, enumerate_paths
from ddcsp.errors import CapExceeded, LayerExplosion, NoFeasiblePath
from ddcsp.milp import solve_milp
from ddcsp.robust import (RobustConstraintView, RtsptwInstance, Scenario, brute_force_robust,
                          build_ip_baseline, build_sep_milp, build_tsp_dd, check_route,
                          count_robust_infeasible, dd_route, enumerate_scenarios,
                          generate_rtsptw, separate, solve_ip_augmenting,
                          solve_separation_milp, solve_state_augmenting, worst_case_profile,
                          write_iteration_log)

import oracles


def complete(n, d=None, r=None, cost=None, travel=None, l=None, u=None, b=0, **kw):
    """Vertices 0..n, every edge i -> j with i < n, j > 0, i != j."""
    n1 = n + 1
    def mat(fn):
        return [[fn(i, j) if i < n and j > 0 and i != j else None for j in range(n1)]
                for i in range(n1)]
    return RtsptwInstance(cost=mat(cost or (lambda i, j: 1)), travel=mat(travel or (lambda i, j: 1)),
                          r=r or [0] * n1, d=d or [None] * n1, l=l or [0] * (n - 1),
                          u=u or [0] * (n - 1), b=b, **kw)


def hand_chain(**kw):
    return complete(2, d=[None, 3, 3], l=[0], u=[2], b=2, **kw)


def two_route_toy():
    cost = {(0, 1): 1, (1, 2): 1, (2, 3): 1, (0, 2): 1, (2, 1): 2, (1, 3): 1, (0, 3): 1}
    return complete(3, d=[None, 4, 3, 10], cost=lambda i, j: cost.get((i, j), 5),
                    l=[0, 0], u=[2, 2], b=2)


def tightened(seed, n, b, semantics="arrival"):
    inst = generate_rtsptw(n, [20, 40, 60, 80][seed % 4], b, seed)
    d = [inst.d[0]] + [v - b for v in inst.d[1:]]
    return RtsptwInstance(inst.cost, inst.travel, inst.r, d, inst.l, inst.u, b, semantics)


def test_tsp_diagram_of_four_cities():
    dd = build_tsp_dd(complete(4))
    assert (dd.num_nodes, dd.num_arcs, dd.path_count()) == (14, 18, 6)


def test_one_customer_is_a_chain():
    dd = build_tsp_dd(complete(2))
    assert dd.num_nodes == 3 and dd.path_count() == 1
    assert dd_route(dd, next(enumerate_paths(dd)).arcs) == (0, 1, 2)


def test_windows_can_force_the_order():
    inst = complete(4, d=[None, 1, 2, 3, None])
    dd = build_tsp_dd(inst)
    nominal = [r for r in oracles.all_routes(inst) if not oracles.late(inst, r, inst.l)]
    assert nominal == [(0, 1, 2, 3, 4)]
    assert dd.path_count() == 1
    assert build_tsp_dd(inst, prune=False).path_count() == 6


def test_diagram_size_caps():
    with pytest.raises(LayerExplosion):
        build_tsp_dd(complete(5), cap=4)
    with pytest.raises(NoFeasiblePath):
        build_tsp_dd(complete(3, d=[None, 0, 0, 0]))


def test_hand_recursion():
    inst = hand_chain()
    bad = check_route(inst, (0, 1, 2), [2])
    assert not bad.feasible and bad.arrivals == [0, 1, 4] and bad.violations == [2]
    ok = check_route(inst, (0, 1, 2), [1])
    assert ok.feasible and ok.arrivals[2] == 3
    assert check_route(inst, (0, 1, 2), [0]).arrivals == [0, 1, 2]
    assert separate(inst, (0, 1, 2)) == (2, Scenario((2,)))


def test_completion_semantics_counts_the_service():
    inst = complete(2, d=[None, 2, None], l=[0], u=[2], b=2, semantics="completion")
    assert check_route(inst, (0, 1, 2), [1]).feasible
    assert not check_route(inst, (0, 1, 2), [2]).feasible
    assert separate(inst, (0, 1, 2)) == (1, Scenario((2,)))
    arrival = complete(2, d=[None, 2, None], l=[0], u=[2], b=2)
    assert separate(arrival, (0, 1, 2)) is None


def test_zero_budget_separation_is_the_nominal_check():
    inst = complete(2, d=[None, 3, 3], l=[0], u=[2], b=0)
    assert separate(inst, (0, 1, 2)) is None
    inst = complete(2, d=[None, 0, 3], r=[0, 0, 0], l=[0], u=[2], b=0)
    assert separate(inst, (0, 1, 2))[0] == 1


def test_two_route_toy():
    inst = two_route_toy()
    assert inst.route_cost((0, 1, 2, 3)) == 3
    sol = solve_state_augmenting(inst)
    assert sol.route == (0, 2, 1, 3) and sol.objective == 4
    assert len(sol.scenarios) >= 1
    assert [rec.objective for rec in sol.log] == [3, 4]
    assert brute_force_robust(inst).objective == 4
    assert solve_ip_augmenting(inst).objective == 4
    assert solve_state_augmenting(inst, strategy="most-violated").objective == 4
    assert oracles.robust_optimum(inst) == (4, (0, 2, 1, 3))


def test_ip_model_with_the_violated_scenario():
    inst = two_route_toy()
    delta = separate(inst, (0, 1, 2, 3))[1]
    model = build_ip_baseline(inst, [inst.lower, delta])
    assert solve_milp(model).objective == solve_state_augmenting(inst).objective


def test_ip_model_shapes():
    inst = complete(2)
    assert build_ip_baseline(inst, [inst.lower]).num_binaries == 3
    empty = build_ip_baseline(complete(4), [])
    assert empty.num_binaries == empty.num_vars
    assert empty.num_constraints == 8
    with pytest.raises(ValueError):
        build_ip_baseline(inst, [], big_m="huge")


def test_separation_model():
    inst = two_route_toy()
    assert solve_separation_milp(inst, (0, 2, 1, 3)) == (0, None)
    count, delta = solve_separation_milp(inst, (0, 1, 2, 3))
    assert count >= 1 and inst.contains(delta)
    assert not check_route(inst, (0, 1, 2, 3), delta).feasible
    two = complete(3, d=[None, None, 3, 4], l=[0, 0], u=[2, 2], b=2)
    count, delta = solve_separation_milp(two, (0, 1, 2, 3))
    assert count == 2 and check_route(two, (0, 1, 2, 3), delta).violations == [2, 3]
    assert {"budget", "bits_1", "late_2"} <= set(build_sep_milp(two, (0, 1, 2, 3)).con_names)


def test_zero_budget_stops_at_the_nominal_optimum():
    for seed in range(4):
        inst = generate_rtsptw(6, 20, 0, seed)
        sol = solve_state_augmenting(inst)
        assert sol.scenarios == [] and len(sol.log) == 1
        nominal = min(inst.route_cost(r) for r in oracles.all_routes(inst)
                      if not oracles.late(inst, r, inst.l))
        assert sol.objective == nominal


def test_interval_uncertainty_is_the_upper_scenario():
    for seed in range(4):
        base = tightened(seed, 6, 4)
        inst = RtsptwInstance(base.cost, base.travel, base.r, base.d, base.l, base.u, 1000)
        feasible = [r for r in oracles.all_routes(inst) if not oracles.late(inst, r, inst.u)]
        if not feasible:
            with pytest.raises(NoFeasiblePath):
                brute_force_robust(inst)
            continue
        expected = min(inst.route_cost(r) for r in feasible)
        assert brute_force_robust(inst).objective == expected
        assert solve_state_augmenting(inst).objective == expected


def test_no_robust_route():
    inst = complete(3, d=[None, 1, 1, None], l=[0, 0], u=[2, 2], b=2)
    with pytest.raises(NoFeasiblePath):
        solve_state_augmenting(inst)
    with pytest.raises(NoFeasiblePath):
        brute_force_robust(inst)
    with pytest.raises(NoFeasiblePath):
        solve_ip_augmenting(inst)
    with pytest.raises(CapExceeded):
        brute_force_robust(complete(11))


def test_scenario_enumeration():
    inst = complete(4, l=[0, 0, 0], u=[2, 2, 2], b=2)
    got = list(enumerate_scenarios(inst))
    assert got == [Scenario(d) for d in oracles.scenarios(inst.l, inst.u, inst.b)]
    assert len(got) == 10
    with pytest.raises(CapExceeded):
        list(enumerate_scenarios(inst, cap=5))


def test_instance_validation():
    with pytest.raises(ValueError):
        complete(2, d=[0, 3, 3])
    with pytest.raises(ValueError):
        complete(2, l=[3], u=[4], b=2)
    with pytest.raises(ValueError):
        complete(2, r=[0, 5, 0], d=[None, 4, None])
    with pytest.raises(ValueError):
        complete(2).validate_route((0, 2, 1))


def test_iteration_log_file(tmp_path):
    sol = solve_state_augmenting(two_route_toy())
    path = tmp_path / "log.csv"
    write_iteration_log(sol.log, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iteration,objective,scenarios,labels,time"
    assert len(lines) == 1 + len(sol.log)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(3, 7), st.integers(0, 6),
       st.sampled_from(["arrival", "completion"]), st.randoms(use_true_random=False))
def test_separation_matches_enumeration(seed, n, b, semantics, rnd):
    inst = tightened(seed, n, b, semantics)
    routes = list(oracles.all_routes(inst))
    route = routes[rnd.randrange(len(routes))]
    found = separate(inst, route)
    assert (found is None) == oracles.robust_feasible(inst, route)
    if found is not None:
        vertex, delta = found
        assert inst.contains(delta)
        assert vertex in check_route(inst, route, delta).violations
    arrivals, _ = worst_case_profile(inst, route)
    assert arrivals == oracles.worst_arrivals(inst, route)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.integers(4, 7), st.sampled_from([2, 4]),
       st.sampled_from(["arrival", "completion"]))
def test_state_augmentation_matches_brute_force(seed, n, b, semantics):
    inst = tightened(seed, n, b, semantics)
    expected = oracles.robust_optimum(inst)
    if expected is None:
        with pytest.raises(NoFeasiblePath):
            solve_state_augmenting(inst)
        return
    sol = solve_state_augmenting(inst)
    assert sol.objective == expected[0]
    assert brute_force_robust(inst).objective == expected[0]
    assert separate(inst, sol.route) is None
    objs = [rec.objective for rec in sol.log]
    assert objs == sorted(objs)
    assert len(set(sol.scenarios)) == len(sol.scenarios)
    assert len(sol.scenarios) <= count_robust_infeasible(inst)
    assert solve_state_augmenting(inst, prune=False).objective == expected[0]


@settings(max_examples=6, deadline=None)
@given(st.integers(0, 10**6), st.integers(4, 6))
def test_routing_milp_loop_matches_brute_force(seed, n):
    inst = tightened(seed, n, 2)
    expected = oracles.robust_optimum(inst)
    if expected is None:
        with pytest.raises(NoFeasiblePath):
            solve_ip_augmenting(inst)
        return
    assert solve_ip_augmenting(inst).objective == expected[0]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-4, 9), min_size=5, max_size=5),
       st.lists(st.tuples(st.lists(st.lists(st.integers(0, 6), min_size=5, max_size=5),
                                   min_size=1, max_size=2),
                          st.lists(st.integers(0, 12), min_size=2, max_size=2)),
                min_size=1, max_size=4))
def test_robust_rows_become_side_constraints(c, raw):
    scen = [(A, b[:len(A)]) for A, b in raw]
    dd = compile_dd(LinearBinarySpec(c, [[1] * 5], [5]), 5)
    view = RobustConstraintView(dd, scen)
    assert view.num_scenarios == len(scen)
    X = oracles.binary_vectors(5)
    robust = {tuple(x) for x in X
              if all(oracles.feasible_vectors(A, b, 5).tolist().count(list(x)) for A, b in scen)}
    by_filter = {dd.assignment(p.arcs) for p in enumerate_paths(dd) if view.path_feasible(p.arcs)}
    assert by_filter == robust
    side = view.side_constraints()
    by_rows = {dd.assignment(p.arcs) for p in enumerate_paths(dd) if side.satisfied(p.arcs)}
    assert by_rows == robust
    csp = CspInstance(dd, side, "max")
    if not robust:
        with pytest.raises(NoFeasiblePath):
            solve_labeling(csp)
        return
    best = max(sum(ci * xi for ci, xi in zip(c, x)) for x in robust)
    assert solve_labeling(csp).objective == best == brute_force_csp(csp).objective


def test_generator_contract():
    inst = generate_rtsptw(8, 20, 4, 7)
    assert inst.l == [0] * 7 and inst.u == [2] * 7 and inst.b == 4
    assert inst.cost == inst.travel
    assert generate_rtsptw(8, 20, 4, 7) == inst
    for seed in range(10):
        inst = generate_rtsptw(7, [20, 40, 60, 80][seed % 4], 2 * (seed % 3), seed)
        tour = inst.meta["seed_tour"]
        assert check_route(inst, tour, inst.l).feasible
        assert separate(inst, tour) is None
    wide = generate_rtsptw(6, 10**4, 2, 1)
    assert build_tsp_dd(wide).path_count() == math.factorial(5)
