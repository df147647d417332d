"""Robust routing with budgeted service-time uncertainty.

A route starts at depot ``0``, visits every customer ``1..n-1`` once and ends
at depot ``n``.  Service at customer ``j`` takes ``delta_j`` time units where
the scenario ``delta`` ranges over the budgeted set
``{l <= delta <= u, sum delta <= b}``.  A route is robust feasible when every
scenario meets every deadline.

The exact solver adds scenarios one at a time: it finds the cheapest route in
a TSP decision diagram that is feasible for the scenarios collected so far
(pulse search whose resource is one completion time per scenario), asks the
separation routine for a violated scenario and repeats until none exists.
"""
from __future__ import annotations

import csv
import itertools
import math
import time
from collections import namedtuple
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .csp import SideConstraints
from .dd import DEFAULT_NODE_CAP, DecisionDiagram, DpSpec, compile_dd, enumerate_paths
from .errors import CapExceeded, LayerExplosion, NoFeasiblePath, SolverError, TimeLimitReached
from .milp.bnb import solve_milp
from .milp.model import LpModel, Status
from .pulse import PulseConfig, cost_to_go, pulse_search

TSP_CAP = 16
BRUTE_FORCE_CAP = 10
SCENARIO_CAP = 10**6
GRID = 50
SEP_EPS = 1e-4
TOL = 1e-9

RouteCheck = namedtuple("RouteCheck", "feasible arrivals completions violations")
IterationRecord = namedtuple("IterationRecord", "iteration objective scenarios labels time")


class Scenario(tuple):
    """Service times of customers ``1..n-1``; entry ``k`` belongs to vertex ``k + 1``."""

    def __new__(cls, values=()):
        return super().__new__(cls, (int(v) for v in values))

    def service(self, j: int) -> int:
        """Service time at vertex ``j``; zero at both depots."""
        if 1 <= j <= len(self):
            return self[j - 1]
        return 0

    def __repr__(self):
        return f"Scenario({tuple(self)})"


@dataclass
class RtsptwInstance:
    """Vertices ``0..n``; ``cost``/``travel`` are square matrices, ``None`` = no edge.

    ``l`` and ``u`` bound the service times of customers ``1..n-1`` (one entry
    per customer).  ``semantics`` decides what must meet a deadline: the
    arrival before service (``arrival``) or the completion after it
    (``completion``).
    """

    cost: list
    travel: list
    r: list
    d: list
    l: list
    u: list
    b: int
    semantics: str = "arrival"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n1 = len(self.r)
        if n1 < 3:
            raise ValueError("an instance needs two depots and at least one customer")
        if len(self.d) != n1 or len(self.cost) != n1 or len(self.travel) != n1:
            raise ValueError("vertex data have inconsistent lengths")
        if any(len(row) != n1 for row in self.cost) or any(len(row) != n1 for row in self.travel):
            raise ValueError("cost and travel must be square")
        if len(self.l) != n1 - 2 or len(self.u) != n1 - 2:
            raise ValueError("l and u need one entry per customer")
        self.d = [math.inf if v is None else v for v in self.d]
        if self.r[0] != 0 or self.d[0] != math.inf:
            raise ValueError("the start depot has r_0 = 0 and no deadline")
        for j in range(n1):
            if self.r[j] > self.d[j]:
                raise ValueError(f"vertex {j} has r > d")
            for k in range(n1):
                if (self.cost[j][k] is None) != (self.travel[j][k] is None):
                    raise ValueError(f"edge ({j}, {k}) has a cost or a travel time but not both")
                if self.travel[j][k] is not None and (self.travel[j][k] < 0 or self.cost[j][k] < 0):
                    raise ValueError(f"edge ({j}, {k}) has a negative entry")
        if any(lo < 0 or lo > hi for lo, hi in zip(self.l, self.u)):
            raise ValueError("service bounds need 0 <= l <= u")
        if sum(self.l) > self.b:
            raise ValueError("the uncertainty set is empty (sum l > b)")
        if self.semantics not in ("arrival", "completion"):
            raise ValueError("semantics must be 'arrival' or 'completion'")

    @property
    def n(self) -> int:
        """Index of the end depot."""
        return len(self.r) - 1

    def has_edge(self, i: int, j: int) -> bool:
        return self.travel[i][j] is not None

    @property
    def lower(self) -> Scenario:
        return Scenario(self.l)

    @property
    def upper(self) -> Scenario:
        return Scenario(self.u)

    def contains(self, delta: Sequence[int]) -> bool:
        return (len(delta) == len(self.l) and sum(delta) <= self.b
                and all(lo <= v <= hi for lo, v, hi in zip(self.l, delta, self.u)))

    def route_cost(self, route: Sequence[int]) -> float:
        return math.fsum(self.cost[i][j] for i, j in zip(route, route[1:]))

    def validate_route(self, route: Sequence[int]) -> None:
        n = self.n
        if len(route) != n + 1 or route[0] != 0 or route[-1] != n or sorted(route) != list(range(n + 1)):
            raise ValueError(f"{tuple(route)} is not a 0 -> {n} Hamiltonian path")
        for i, j in zip(route, route[1:]):
            if not self.has_edge(i, j):
                raise ValueError(f"route uses the missing edge ({i}, {j})")


def _violates(inst: RtsptwInstance, j: int, arrival: float, completion: float) -> bool:
    t = completion if inst.semantics == "completion" else arrival
    return t > inst.d[j] + TOL


# -- route evaluation --------------------------------------------------------

def check_route(inst: RtsptwInstance, route: Sequence[int], delta: Sequence[int]) -> RouteCheck:
    """Arrival and completion at every position of ``route`` under ``delta``."""
    delta = Scenario(delta)
    arrivals, completions, violations = [0.0], [0.0], []
    e = 0.0
    for i, j in zip(route, route[1:]):
        arr = max(inst.r[j], e + inst.travel[i][j])
        e = arr + delta.service(j)
        arrivals.append(arr)
        completions.append(e)
        if _violates(inst, j, arr, e):
            violations.append(j)
    return RouteCheck(not violations, arrivals, completions, violations)


def _worst_case_tables(inst: RtsptwInstance, route: Sequence[int]):
    """``F[k][beta]``: latest completion at position ``k`` with extra budget ``beta``.

    The extra budget is spent on top of ``l``; ``choice[k][beta]`` records the
    extra service given to position ``k`` in a maximiser.
    """
    # budget beyond what the boxes can absorb is never used
    B = int(min(inst.b - sum(inst.l), sum(hi - lo for lo, hi in zip(inst.l, inst.u))))
    lo, hi = inst.lower, inst.upper
    F = [[0.0] * (B + 1)]
    choice = [[0] * (B + 1)]
    for i, j in zip(route, route[1:]):
        prev = F[-1]
        t = inst.travel[i][j]
        room = hi.service(j) - lo.service(j)
        row, pick = [0.0] * (B + 1), [0] * (B + 1)
        for beta in range(B + 1):
            best, arg = -math.inf, 0
            for x in range(min(room, beta) + 1):
                v = max(inst.r[j], prev[beta - x] + t) + x
                if v > best:
                    best, arg = v, x
            row[beta] = best + lo.service(j)
            pick[beta] = arg
        F.append(row)
        choice.append(pick)
    return F, choice


def worst_case_profile(inst: RtsptwInstance, route: Sequence[int]):
    """Latest arrival and latest completion over all scenarios, per route position."""
    F, _ = _worst_case_tables(inst, route)
    B = len(F[0]) - 1
    arrivals = [0.0]
    for k in range(1, len(route)):
        i, j = route[k - 1], route[k]
        arrivals.append(max(inst.r[j], F[k - 1][B] + inst.travel[i][j]))
    return arrivals, [row[B] for row in F]


def separate(inst: RtsptwInstance, route: Sequence[int]):
    """First vertex whose deadline some scenario violates, with such a scenario.

    Returns ``None`` when the route is robust feasible, otherwise
    ``(vertex, Scenario)``.  The witness spends the budget on the positions
    before the violated vertex; every other customer gets ``l``.
    """
    F, choice = _worst_case_tables(inst, route)
    B = len(F[0]) - 1
    for k in range(1, len(route)):
        i, j = route[k - 1], route[k]
        arr = max(inst.r[j], F[k - 1][B] + inst.travel[i][j])
        if not _violates(inst, j, arr, F[k][B]):
            continue
        extra = [0] * len(inst.l)
        beta = B
        # under completion semantics the violated vertex's own service counts
        start = k if inst.semantics == "completion" else k - 1
        for p in range(start, 0, -1):
            x = choice[p][beta]
            v = route[p]
            if 1 <= v <= len(extra):
                extra[v - 1] = x
            beta -= x
        return j, Scenario(lo + x for lo, x in zip(inst.l, extra))
    return None


def enumerate_scenarios(inst: RtsptwInstance, cap: int = SCENARIO_CAP) -> Iterator[Scenario]:
    """Every integer scenario of the budgeted set, in lexicographic order."""
    total = 1
    for lo, hi in zip(inst.l, inst.u):
        total *= hi - lo + 1
        if total > cap:
            raise CapExceeded(f"the scenario box exceeds {cap} points")
    for delta in itertools.product(*(range(lo, hi + 1) for lo, hi in zip(inst.l, inst.u))):
        if sum(delta) <= inst.b:
            yield Scenario(delta)


# -- TSP decision diagram ----------------------------------------------------

class TspSpec(DpSpec):
    """Hamiltonian ``0 -> n`` paths; state ``(visited bitmask, last vertex)``."""

    def __init__(self, inst: RtsptwInstance):
        self.inst = inst
        self.n = inst.n

    def initial_state(self):
        return (1, 0)

    def domain(self, state, layer):
        visited, last = state
        if layer == self.n - 1:
            return (self.n,) if self.inst.has_edge(last, self.n) else ()
        return [j for j in range(1, self.n)
                if not visited >> j & 1 and self.inst.has_edge(last, j)]

    def transition(self, state, layer, value):
        return (state[0] | 1 << value, value)

    def cost(self, state, layer, value):
        return self.inst.cost[state[1]][value]


def arc_tail_vertex(dd: DecisionDiagram) -> list[int]:
    """Vertex the route sits at before each arc (the state's last vertex)."""
    return [0 if dd.tails[a] == dd.root else dd.node_states[dd.tails[a]][1]
            for a in range(dd.num_arcs)]


def _prune_nominal(inst: RtsptwInstance, dd: DecisionDiagram) -> DecisionDiagram:
    """Drop arcs that miss a deadline even at the earliest completion under ``l``.

    Repeats until no arc is dropped, since removing dead ends can delay the
    earliest completion at surviving nodes.
    """
    lo = inst.lower
    while True:
        frm = arc_tail_vertex(dd)
        e = [math.inf] * dd.num_nodes
        e[dd.root] = 0.0
        keep = [True] * dd.num_arcs
        for layer in dd.layers[:-1]:
            for u in layer:
                for a in dd.out_arcs[u]:
                    j = dd.values[a]
                    arr = max(inst.r[j], e[u] + inst.travel[frm[a]][j])
                    comp = arr + lo.service(j)
                    if _violates(inst, j, arr, comp):
                        keep[a] = False
                    else:
                        h = dd.heads[a]
                        e[h] = min(e[h], comp)
        if all(keep):
            return dd
        dd = dd.restrict(keep)


def build_tsp_dd(inst: RtsptwInstance, prune: bool = True, cap: int = TSP_CAP,
                 node_cap: int = DEFAULT_NODE_CAP) -> DecisionDiagram:
    """Layer ``k`` holds the routes' ``k``-th move; arc value = next vertex.

    Arc lengths are edge costs.  With ``prune`` arcs infeasible already under
    the smallest service times are removed.
    """
    if inst.n > cap:
        raise LayerExplosion(f"n = {inst.n} exceeds the bitmask cap of {cap}")
    dd = compile_dd(TspSpec(inst), inst.n, node_cap=node_cap)
    return _prune_nominal(inst, dd) if prune else dd


def dd_route(dd: DecisionDiagram, arcs: Sequence[int]) -> tuple:
    return (0,) + tuple(dd.values[a] for a in arcs)


# -- exact robust solvers ----------------------------------------------------

@dataclass
class RobustSolution:
    route: tuple
    objective: float
    scenarios: list
    log: list = field(default_factory=list, repr=False)
    stats: dict = field(default_factory=dict, repr=False)


def _latest_completion(inst: RtsptwInstance, dd: DecisionDiagram, frm, delta: Scenario):
    """Latest completion at every node from which ``delta`` can still finish on time."""
    latest = [-math.inf] * dd.num_nodes
    latest[dd.terminal] = math.inf
    completion = inst.semantics == "completion"
    for layer in reversed(dd.layers[:-1]):
        for u in layer:
            best = -math.inf
            for a in dd.out_arcs[u]:
                j = dd.values[a]
                s = delta.service(j)
                # latest admissible arrival at j
                cap = min(latest[dd.heads[a]] - s, inst.d[j] - (s if completion else 0))
                if inst.r[j] <= cap + TOL:
                    best = max(best, cap - inst.travel[frm[a]][j])
            latest[u] = best
    return latest


def _robust_shortest_route(inst, dd, frm, cost, bound, scenarios, config):
    """Cheapest DD route feasible for every listed scenario, by pulse search."""
    latest = [_latest_completion(inst, dd, frm, s) for s in scenarios]
    if any(lat[dd.root] < -TOL for lat in latest):
        raise NoFeasiblePath("a collected scenario admits no feasible route")
    heads, values = dd.heads, dd.values
    r, d, travel = inst.r, inst.d, inst.travel
    completion = inst.semantics == "completion"
    services = [[s.service(j) for j in range(inst.n + 1)] for s in scenarios]
    rows = list(zip(services, latest))

    def extend(e, a):
        j, i, h = values[a], frm[a], heads[a]
        t, dj, rj = travel[i][j], d[j] + TOL, r[j]
        out = []
        for ek, (svc, lat) in zip(e, rows):
            arr = ek + t
            if arr < rj:
                arr = rj
            comp = arr + svc[j]
            if (comp if completion else arr) > dj or comp > lat[h] + TOL:
                return None
            out.append(comp)
        return tuple(out)

    def dominates(e1, e2):
        return all(x <= y + TOL for x, y in zip(e1, e2))

    root = tuple(0.0 for _ in scenarios)
    arcs, _, stats = pulse_search(dd, cost, root, extend, dominates, config, bound=bound)
    return arcs, stats


def solve_state_augmenting(inst: RtsptwInstance, strategy: str = "first",
                           config: PulseConfig = PulseConfig(), prune: bool = True,
                           time_limit: float | None = None) -> RobustSolution:
    """Cheapest robust feasible route by adding violated scenarios one at a time.

    ``strategy`` picks the separation routine: ``first`` (the exact dynamic
    program, first violated vertex) or ``most-violated`` (the separation MILP
    maximising the number of missed deadlines).  Raises NoFeasiblePath when
    no route is robust feasible.
    """
    if strategy not in ("first", "most-violated"):
        raise ValueError("strategy must be 'first' or 'most-violated'")
    t0 = time.perf_counter()
    deadline = None if time_limit is None else t0 + time_limit
    dd = build_tsp_dd(inst, prune=prune)
    frm = arc_tail_vertex(dd)
    cost = list(dd.lengths)
    bound = cost_to_go(dd, cost)
    scenarios: list[Scenario] = []
    log: list[IterationRecord] = []
    while True:
        if deadline is not None:
            left = deadline - time.perf_counter()
            if left <= 0:
                raise TimeLimitReached("state augmentation hit its time limit")
            config = PulseConfig(config.store_size, left, config.greedy_order)
        arcs, stats = _robust_shortest_route(inst, dd, frm, cost, bound, scenarios, config)
        if arcs is None:
            raise NoFeasiblePath("no route is feasible for every scenario")
        route = dd_route(dd, arcs)
        objective = inst.route_cost(route)
        log.append(IterationRecord(len(log) + 1, objective, len(scenarios), stats.pulses,
                                   time.perf_counter() - t0))
        if strategy == "first":
            found = separate(inst, route)
            delta = None if found is None else found[1]
        else:
            delta = solve_separation_milp(inst, route)[1]
        if delta is None:
            return RobustSolution(route, objective, scenarios, log,
                                  {"dd_nodes": dd.num_nodes, "dd_arcs": dd.num_arcs,
                                   "iterations": len(log),
                                   "time": time.perf_counter() - t0})
        if delta in scenarios:
            raise SolverError("separation", f"{delta!r} was already collected")
        scenarios.append(delta)


def brute_force_robust(inst: RtsptwInstance, cap: int = BRUTE_FORCE_CAP) -> RobustSolution:
    """Check routes in order of cost (then route) until one is robust feasible."""
    if inst.n > cap:
        raise CapExceeded(f"n = {inst.n} exceeds the brute-force cap of {cap}")
    try:
        dd = build_tsp_dd(inst, prune=False)
    except NoFeasiblePath:
        raise NoFeasiblePath("the graph has no Hamiltonian 0 -> n path") from None
    routes = sorted((inst.route_cost(dd_route(dd, p.arcs)), dd_route(dd, p.arcs))
                    for p in enumerate_paths(dd, cap=math.factorial(inst.n)))
    for k, (c, route) in enumerate(routes):
        if separate(inst, route) is None:
            return RobustSolution(route, c, [], stats={"checked": k + 1})
    raise NoFeasiblePath("no route is feasible for every scenario")


def count_robust_infeasible(inst: RtsptwInstance) -> int:
    """Number of Hamiltonian routes that some scenario makes infeasible."""
    dd = build_tsp_dd(inst, prune=False)
    return sum(separate(inst, dd_route(dd, p.arcs)) is not None
               for p in enumerate_paths(dd, cap=math.factorial(inst.n)))


def write_iteration_log(log: Sequence[IterationRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "objective", "scenarios", "labels", "time"])
        for rec in log:
            w.writerow([rec.iteration, f"{rec.objective:g}", rec.scenarios, rec.labels,
                        f"{rec.time:.6f}"])


# -- generic robust rows over a diagram -------------------------------------

class RobustConstraintView:
    """Rows ``A(delta) x <= b(delta)`` on DD variables for finitely many scenarios.

    Scenario ``k`` contributes ``g_ia = v_a * A_k[i][var(a)]`` on every arc,
    so a path is robust feasible exactly when its arc sums meet every
    scenario's right-hand side.
    """

    def __init__(self, dd: DecisionDiagram, scenarios: Sequence[tuple]):
        self.dd = dd
        self.A = [[[float(v) for v in row] for row in A] for A, _ in scenarios]
        self.b = [[float(v) for v in b] for _, b in scenarios]
        for A, b in zip(self.A, self.b):
            if len(A) != len(b) or any(len(row) != dd.num_vars for row in A):
                raise ValueError("scenario rows do not match the diagram")

    @property
    def num_scenarios(self) -> int:
        return len(self.A)

    def coefficients(self, k: int) -> list[dict]:
        """Per row of scenario ``k``: ``{arc: g}`` for the non-zero entries."""
        dd = self.dd
        out = []
        for row in self.A[k]:
            g = {}
            for a in range(dd.num_arcs):
                v = dd.values[a] * row[dd.var_order[dd.arc_layer(a)]]
                if v:
                    g[a] = v
            out.append(g)
        return out

    def violated(self, arcs: Sequence[int]):
        """First ``(scenario, row)`` the path breaks, or ``None``."""
        for k in range(self.num_scenarios):
            for i, g in enumerate(self.coefficients(k)):
                if math.fsum(g.get(a, 0.0) for a in arcs) > self.b[k][i] + TOL:
                    return k, i
        return None

    def path_feasible(self, arcs: Sequence[int]) -> bool:
        return self.violated(arcs) is None

    def side_constraints(self) -> SideConstraints:
        """All scenarios stacked as one side-row system (non-negative data only)."""
        entries, rhs = [], []
        for k in range(self.num_scenarios):
            for g, bound in zip(self.coefficients(k), self.b[k]):
                entries.extend((len(rhs), a, v) for a, v in g.items())
                rhs.append(bound)
        return SideConstraints(len(rhs), entries, rhs)


# -- MILP models -------------------------------------------------------------

def _horizon(inst: RtsptwInstance) -> float:
    """A time no route can exceed, used where a deadline is infinite."""
    longest = sum(max((t for t in row if t is not None), default=0) for row in inst.travel)
    return max(inst.r) + longest + sum(inst.u) + max((d for d in inst.d if d < math.inf), default=0)


def route_edges(inst: RtsptwInstance) -> list[tuple[int, int]]:
    n = inst.n
    return [(i, j) for i in range(n) for j in range(1, n + 1)
            if i != j and inst.has_edge(i, j)]


def build_ip_baseline(inst: RtsptwInstance, scenarios: Sequence[Sequence[int]],
                      big_m: str = "edge") -> LpModel:
    """Routing MILP with one set of arrival times ``w^k`` per listed scenario.

    ``x_i_j`` picks edges, degree rows make a ``0 -> n`` path and the time rows
    ``w_j >= w_i + delta_i + t_ij - M (1 - x_ij)`` order the arrivals.
    Windows are variable bounds on ``w``.  ``big_m='edge'`` uses the
    smallest valid constant per edge, ``'dn'`` uses the end depot's deadline.
    """
    if big_m not in ("edge", "dn"):
        raise ValueError("big_m must be 'edge' or 'dn'")
    n = inst.n
    H = _horizon(inst)
    dmax = [min(v, H) for v in inst.d]
    dmax[0] = 0.0  # leaving the depot at time zero loses nothing
    model = LpModel("robust_tsp")
    edges = route_edges(inst)
    x = {e: model.add_var(f"x_{e[0]}_{e[1]}", binary=True) for e in edges}
    for i in range(n):
        model.add_constraint(f"out_{i}", {x[e]: 1.0 for e in edges if e[0] == i}, "=", 1.0)
    for j in range(1, n + 1):
        model.add_constraint(f"in_{j}", {x[e]: 1.0 for e in edges if e[1] == j}, "=", 1.0)
    arrival = inst.semantics == "arrival"
    for k, delta in enumerate(scenarios):
        delta = Scenario(delta)
        w = [model.add_var(f"w_{k}_{j}", inst.r[j],
                           dmax[j] - (0 if arrival else delta.service(j)))
             for j in range(n + 1)]
        for i, j in edges:
            step = delta.service(i) + inst.travel[i][j]
            if big_m == "dn":
                M = inst.d[n]
            else:
                M = max(0.0, model.ub[w[i]] + step - inst.r[j])
            model.add_constraint(f"time_{k}_{i}_{j}", {w[j]: 1.0, w[i]: -1.0, x[(i, j)]: -(step + M)},
                                 ">=", -M)
    model.set_objective({x[e]: inst.cost[e[0]][e[1]] for e in edges}, "min")
    return model


def _successor_cycles(inst: RtsptwInstance, succ: dict):
    """Route from 0 and the cycles left over in a degree-feasible edge choice."""
    route = [0]
    while route[-1] != inst.n:
        route.append(succ[route[-1]])
    seen = set(route)
    cycles = []
    for s in range(1, inst.n):
        if s in seen:
            continue
        cyc = [s]
        seen.add(s)
        while succ[cyc[-1]] != s:
            cyc.append(succ[cyc[-1]])
            seen.add(cyc[-1])
        cycles.append(cyc)
    return tuple(route), cycles


def solve_ip_augmenting(inst: RtsptwInstance, big_m: str = "edge",
                        time_limit: float | None = None) -> RobustSolution:
    """Scenario augmentation with the routing MILP in place of the diagram.

    Starts from the scenario ``l``; subtours that slip through zero-time
    cycles are cut off with ``sum x <= |C| - 1`` rows.
    """
    t0 = time.perf_counter()
    scenarios = [inst.lower]
    cuts = []
    log = []
    edges = route_edges(inst)
    nodes = 0
    while True:
        model = build_ip_baseline(inst, scenarios, big_m)
        for k, cyc in enumerate(cuts):
            terms = {model.var(f"x_{i}_{j}"): 1.0 for i in cyc for j in cyc
                     if i != j and inst.has_edge(i, j)}
            model.add_constraint(f"subtour_{k}", terms, "<=", len(cyc) - 1)
        left = None if time_limit is None else time_limit - (time.perf_counter() - t0)
        if left is not None and left <= 0:
            raise TimeLimitReached("the routing MILP loop hit its time limit")
        sol = solve_milp(model, time_limit=left)
        nodes += sol.nodes
        if sol.status == Status.INFEASIBLE:
            raise NoFeasiblePath("no route is feasible for every scenario")
        if sol.status != Status.OPTIMAL:
            raise SolverError(sol.status.value)
        succ = {i: j for (i, j) in edges if sol.x[model.var(f"x_{i}_{j}")] > 0.5}
        route, cycles = _successor_cycles(inst, succ)
        if cycles:
            cuts.extend(cycles)
            continue
        objective = inst.route_cost(route)
        log.append(IterationRecord(len(log) + 1, objective, len(scenarios), sol.nodes,
                                   time.perf_counter() - t0))
        found = separate(inst, route)
        if found is None:
            return RobustSolution(route, objective, scenarios, log,
                                  {"iterations": len(log), "nodes": nodes,
                                   "time": time.perf_counter() - t0})
        if found[1] in scenarios:
            raise SolverError("separation", f"{found[1]!r} was already collected")
        scenarios.append(found[1])


def build_sep_milp(inst: RtsptwInstance, route: Sequence[int], eps: float = SEP_EPS) -> LpModel:
    """Scenario that misses the most deadlines along a fixed route.

    Service times are written in binary (``z_j_k``), arrivals ``w_j`` equal
    ``max(r_j, w_i + delta_i + t_ij)`` through a selector binary ``s_j``, and
    ``v_j = 1`` forces ``w_j >= d_j + eps``.  The objective counts the ``v``.
    """
    inst.validate_route(route)
    worst, worst_comp = worst_case_profile(inst, route)
    model = LpModel("separation")
    delta = {}
    bits = {}
    budget = {}
    for j in range(1, inst.n):
        lo, hi = inst.l[j - 1], inst.u[j - 1]
        delta[j] = model.add_var(f"delta_{j}", lo, hi)
        width = max(hi - lo, 0).bit_length()
        bits[j] = [model.add_var(f"z_{j}_{k}", binary=True) for k in range(width)]
        terms = {delta[j]: 1.0}
        for k, z in enumerate(bits[j]):
            terms[z] = -float(2 ** k)
        model.add_constraint(f"bits_{j}", terms, "=", lo)
        budget[delta[j]] = 1.0
    model.add_constraint("budget", budget, "<=", inst.b)
    w = {0: model.add_var("w_0", 0.0, 0.0)}
    count = {}
    completion = inst.semantics == "completion"
    for k in range(1, len(route)):
        i, j = route[k - 1], route[k]
        rj = inst.r[j]
        w[j] = model.add_var(f"w_{j}", rj, max(worst[k], rj))
        s = model.add_var(f"s_{j}", binary=True)
        M = max(rj, worst[k] - rj, 0.0)
        step = {w[j]: 1.0, w[i]: -1.0}
        if i in delta:
            step[delta[i]] = -1.0
        t = inst.travel[i][j]
        model.add_constraint(f"after_{j}", step, ">=", t)
        model.add_constraint(f"pick_r_{j}", {w[j]: 1.0, s: -M}, "<=", rj)
        model.add_constraint(f"pick_prev_{j}", {**step, s: M}, "<=", t + M)
        if inst.d[j] < math.inf:
            v = model.add_var(f"v_{j}", binary=True)
            terms = {w[j]: 1.0, v: -(inst.d[j] + eps)}
            if completion and j in delta:
                terms[delta[j]] = 1.0
            model.add_constraint(f"late_{j}", terms, ">=", 0.0)
            count[v] = 1.0
    model.set_objective(count, "max")
    return model


def solve_separation_milp(inst: RtsptwInstance, route: Sequence[int], eps: float = SEP_EPS):
    """``(number of missed deadlines, Scenario or None)`` from the separation MILP."""
    model = build_sep_milp(inst, route, eps)
    sol = solve_milp(model)
    sol.raise_for_status()
    count = int(round(sol.objective))
    if count == 0:
        return 0, None
    delta = Scenario(int(round(sol.x[model.var(f"delta_{j}")])) for j in range(1, inst.n))
    return count, delta


# -- instance generation -----------------------------------------------------

def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def generate_rtsptw(n: int, w: int, b: int, seed: int = 0) -> RtsptwInstance:
    """Random instance with windows of width about ``w`` around a seed tour.

    Customers are integer points of a ``[0, 50]^2`` grid; both depots share one
    point.  Travel times and costs are rounded Euclidean distances.  A random
    customer order gives reference arrivals ``A_j``; the windows are
    ``[max(0, A_j - w//2), A_j + w//2 + b]`` and service times lie in
    ``[0, 2]``.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if w < 0 or b < 0:
        raise ValueError("w and b must be non-negative")
    rng = np.random.default_rng(seed)
    pts = rng.integers(0, GRID + 1, size=(n, 2))
    pts = np.vstack([pts, pts[:1]])  # end depot at the start depot
    n1 = n + 1
    travel = [[None] * n1 for _ in range(n1)]
    for i in range(n):
        for j in range(1, n1):
            if i != j:
                travel[i][j] = _round_half_up(float(np.hypot(*(pts[i] - pts[j]))))
    order = [0] + [int(v) + 1 for v in rng.permutation(n - 1)] + [n]
    ref = [0] * n1
    for i, j in zip(order, order[1:]):
        ref[j] = ref[i] + travel[i][j]
    half = w // 2
    r = [0] + [max(0, ref[j] - half) for j in range(1, n1)]
    d = [math.inf] + [ref[j] + half + b for j in range(1, n1)]
    meta = {"n": n, "w": w, "b": b, "seed": seed, "seed_tour": order}
    return RtsptwInstance(cost=[row[:] for row in travel], travel=travel, r=r, d=d,
                          l=[0] * (n - 1), u=[2] * (n - 1), b=b, meta=meta)
