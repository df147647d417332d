"""Constrained shortest/longest paths over a decision diagram.

A path must respect side rows ``G y <= d`` where ``y`` is the arc-incidence
vector of the path and ``G >= 0``.  Four exact methods are provided (label
setting, pulse search, an arc-flow MILP and brute force) plus the expanded
state network used as an independent check.
"""
from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .dd import DEFAULT_PATH_CAP, DecisionDiagram, PathSolution, enumerate_paths, extreme_path
from .errors import NoFeasiblePath, SolverError, StateCapExceeded
from .milp.model import LpModel
from .pulse import PulseConfig, cost_to_go, pulse_search

TOL = 1e-9
DEFAULT_STATE_CAP = 10**6

Label = namedtuple("Label", "node state cost parent arc")


class SideConstraints:
    """Sparse non-negative rows over DD arcs with a budget per row."""

    def __init__(self, m: int, entries: Iterable[tuple[int, int, float]], d: Sequence[float]):
        self.m = int(m)
        self.d = tuple(float(v) for v in d)
        if len(self.d) != self.m:
            raise ValueError("budget vector length differs from the row count")
        if any(v < 0 for v in self.d):
            raise ValueError("budgets must be non-negative")
        cols: dict[int, dict[int, float]] = {}
        for i, a, g in entries:
            if not 0 <= i < self.m:
                raise ValueError(f"row {i} out of range")
            if g < 0:
                raise ValueError("side-constraint coefficients must be non-negative")
            if g:
                col = cols.setdefault(int(a), {})
                col[int(i)] = col.get(int(i), 0.0) + float(g)
        self._cols = {a: tuple(sorted(c.items())) for a, c in cols.items()}

    @classmethod
    def empty(cls) -> "SideConstraints":
        return cls(0, (), ())

    @classmethod
    def from_variable_rows(cls, dd: DecisionDiagram, A: Sequence[Sequence[float]],
                           d: Sequence[float]) -> "SideConstraints":
        """Rows ``A x <= d`` on the DD variables, i.e. ``g_ia = v_a * A[i][layer(a)]``."""
        entries = []
        for i, row in enumerate(A):
            for a in range(dd.num_arcs):
                g = dd.values[a] * row[dd.arc_layer(a)]
                if g:
                    entries.append((i, a, g))
        return cls(len(A), entries, d)

    def column(self, a: int) -> tuple:
        return self._cols.get(a, ())

    def entries(self):
        for a in sorted(self._cols):
            for i, g in self._cols[a]:
                yield i, a, g

    def usage(self, arcs: Iterable[int]) -> list[float]:
        used = [0.0] * self.m
        for a in arcs:
            for i, g in self.column(a):
                used[i] += g
        return used

    def satisfied(self, arcs: Iterable[int]) -> bool:
        return all(u <= d + TOL for u, d in zip(self.usage(arcs), self.d))

    def max_arc(self) -> int:
        return max(self._cols, default=-1)


@dataclass(frozen=True)
class CspInstance:
    dd: DecisionDiagram
    side: SideConstraints = field(default_factory=SideConstraints.empty)
    sense: str = "min"

    def __post_init__(self):
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        if self.side.max_arc() >= self.dd.num_arcs:
            raise ValueError("side constraints reference a missing arc")

    @property
    def sign(self) -> float:
        return 1.0 if self.sense == "min" else -1.0

    def min_cost(self) -> list[float]:
        """Arc costs in minimisation form."""
        s = self.sign
        return [s * l for l in self.dd.lengths]


def _add(state, col):
    if not col:
        return state
    s = list(state)
    for i, g in col:
        s[i] += g
    return tuple(s)


def _fits(state, d):
    return all(v <= b + TOL for v, b in zip(state, d))


def _weakly_below(s1, s2):
    return all(a <= b + TOL for a, b in zip(s1, s2))


def min_resource_to_go(csp: CspInstance) -> list[list[float]]:
    """Per row, the least resource any completion from each node consumes."""
    dd, side = csp.dd, csp.side
    out = []
    for i in range(side.m):
        need = [0.0] * dd.num_nodes
        for layer in reversed(dd.layers[:-1]):
            for u in layer:
                need[u] = min(dict(side.column(a)).get(i, 0.0) + need[dd.heads[a]]
                              for a in dd.out_arcs[u])
        out.append(need)
    return out


def solve_labeling(csp: CspInstance) -> PathSolution:
    """Forward label setting with componentwise dominance, layer by layer."""
    dd, side = csp.dd, csp.side
    cost = csp.min_cost()
    zero = tuple(0.0 for _ in range(side.m))
    labels: list[list[Label]] = [[] for _ in range(dd.num_nodes)]
    labels[dd.root].append(Label(dd.root, zero, 0.0, None, None))
    created = 1
    peak = list(zero)
    for layer in dd.layers[:-1]:
        for u in layer:
            for lab in labels[u]:
                for a in dd.out_arcs[u]:
                    s = _add(lab.state, side.column(a))
                    if not _fits(s, side.d):
                        continue
                    c = lab.cost + cost[a]
                    h = dd.heads[a]
                    bucket = labels[h]
                    if any(o.cost <= c + TOL and _weakly_below(o.state, s) for o in bucket):
                        continue
                    bucket[:] = [o for o in bucket
                                 if not (c <= o.cost + TOL and _weakly_below(s, o.state))]
                    bucket.append(Label(h, s, c, lab, a))
                    created += 1
                    peak = [max(p, v) for p, v in zip(peak, s)]
            labels[u] = []
    final = labels[dd.terminal]
    if not final:
        raise NoFeasiblePath("no path satisfies the side constraints")
    best = min(final, key=lambda l: l.cost)
    arcs = []
    lab = best
    while lab.arc is not None:
        arcs.append(lab.arc)
        lab = lab.parent
    arcs.reverse()
    return dd.path_solution(arcs, {"labels": created, "peak_resource": tuple(peak)})


def solve_pulse(csp: CspInstance, config: PulseConfig = PulseConfig()) -> PathSolution:
    """Pulse search with infeasibility, bound and dominance pruning."""
    dd, side = csp.dd, csp.side
    cost = csp.min_cost()
    need = min_resource_to_go(csp)
    d = side.d
    heads = dd.heads
    rows = range(side.m)

    def extend(state, a):
        s = _add(state, side.column(a))
        h = heads[a]
        for i in rows:
            if s[i] + need[i][h] > d[i] + TOL:
                return None
        return s

    zero = tuple(0.0 for _ in rows)
    if any(need[i][dd.root] > d[i] + TOL for i in rows):
        raise NoFeasiblePath("no path satisfies the side constraints")
    arcs, _, stats = pulse_search(dd, cost, zero, extend, _weakly_below, config,
                                  bound=cost_to_go(dd, cost))
    if arcs is None:
        raise NoFeasiblePath("no path satisfies the side constraints")
    return dd.path_solution(arcs, vars(stats))


def build_flow_milp(csp: CspInstance) -> LpModel:
    """Arc-flow model: unit flow out of the root, balance, side rows."""
    dd, side = csp.dd, csp.side
    model = LpModel("csp_flow")
    y = [model.add_var(f"y_{a}", 0.0, 1.0, binary=True) for a in range(dd.num_arcs)]
    model.add_constraint("src", {y[a]: 1.0 for a in dd.out_arcs[dd.root]}, "=", 1.0)
    for u in range(dd.num_nodes):
        if u in (dd.root, dd.terminal):
            continue
        terms = {y[a]: 1.0 for a in dd.in_arcs[u]}
        for a in dd.out_arcs[u]:
            terms[y[a]] = -1.0
        model.add_constraint(f"flow_{u}", terms, "=", 0.0)
    rows: list[dict[int, float]] = [{} for _ in range(side.m)]
    for i, a, g in side.entries():
        rows[i][y[a]] = g
    for i in range(side.m):
        model.add_constraint(f"side_{i}", rows[i], "<=", side.d[i])
    model.set_objective({y[a]: dd.lengths[a] for a in range(dd.num_arcs)}, csp.sense)
    return model


def path_from_flow(dd: DecisionDiagram, x, offset: int = 0) -> list[int]:
    """Follow arcs with flow above one half from the root to the terminal."""
    arcs = []
    u = dd.root
    while u != dd.terminal:
        nxt = [a for a in dd.out_arcs[u] if x[offset + a] > 0.5]
        if len(nxt) != 1:
            raise SolverError("flow", "flow solution is not a single path")
        arcs.append(nxt[0])
        u = dd.heads[nxt[0]]
    return arcs


def solve_flow_milp(csp: CspInstance, **kwargs) -> PathSolution:
    from .milp.bnb import solve_milp

    sol = solve_milp(build_flow_milp(csp), **kwargs)
    if sol.status.value == "infeasible":
        raise NoFeasiblePath("flow model is infeasible")
    sol.raise_for_status()
    return csp.dd.path_solution(path_from_flow(csp.dd, sol.x),
                                {"nodes": sol.nodes, "iterations": sol.iterations})


class StateGraph:
    """Reachable (node, resource-state) pairs with arcs copied from the DD."""

    def __init__(self, csp: CspInstance, nodes, index, arcs):
        self.csp = csp
        self.nodes = nodes          # list of (dd node, state)
        self.index = index          # (dd node, state) -> position
        self.arcs = arcs            # list of (tail pos, head pos, dd arc)
        self.out = [[] for _ in nodes]
        for k, (t, _, _) in enumerate(arcs):
            self.out[t].append(k)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_arcs(self) -> int:
        return len(self.arcs)

    def states_at(self, u: int) -> list:
        return sorted(s for v, s in self.nodes if v == u)

    def extreme_path(self) -> PathSolution:
        """Best path from ``(root, 0)`` to any terminal state."""
        dd = self.csp.dd
        cost = self.csp.min_cost()
        best = [math.inf] * self.num_nodes
        choice = [-1] * self.num_nodes
        for p in reversed(range(self.num_nodes)):
            if self.nodes[p][0] == dd.terminal:
                best[p] = 0.0
                continue
            for k in self.out[p]:
                _, h, a = self.arcs[k]
                v = cost[a] + best[h]
                if v < best[p]:
                    best[p], choice[p] = v, k
        if best[0] == math.inf:
            raise NoFeasiblePath("no path satisfies the side constraints")
        arcs = []
        p = 0
        while self.nodes[p][0] != dd.terminal:
            _, p_next, a = self.arcs[choice[p]]
            arcs.append(a)
            p = p_next
        return dd.path_solution(arcs)


def expand_state_graph(csp: CspInstance, cap: int = DEFAULT_STATE_CAP) -> StateGraph:
    """Exact state expansion forward from ``(root, 0)``; nodes in layer order."""
    dd, side = csp.dd, csp.side
    zero = tuple(0.0 for _ in range(side.m))
    nodes = [(dd.root, zero)]
    index = {(dd.root, zero): 0}
    arcs = []
    frontier = [0]
    for _ in range(dd.num_vars):
        nxt = []
        for p in frontier:
            u, s = nodes[p]
            for a in dd.out_arcs[u]:
                s2 = _add(s, side.column(a))
                if not _fits(s2, side.d):
                    continue
                key = (dd.heads[a], s2)
                q = index.get(key)
                if q is None:
                    q = len(nodes)
                    if q >= cap:
                        raise StateCapExceeded(f"state network exceeds {cap} nodes")
                    nodes.append(key)
                    index[key] = q
                    nxt.append(q)
                arcs.append((p, q, a))
        frontier = sorted(nxt, key=lambda q: (nodes[q][0], nodes[q][1]))
    # drop states that cannot reach the terminal
    live = [False] * len(nodes)
    out = [[] for _ in nodes]
    for k, (t, h, _) in enumerate(arcs):
        out[t].append(h)
    for p in reversed(range(len(nodes))):
        live[p] = nodes[p][0] == dd.terminal or any(live[h] for h in out[p])
    if not live[0]:
        raise NoFeasiblePath("no path satisfies the side constraints")
    order = sorted((p for p in range(len(nodes)) if live[p]),
                   key=lambda p: (dd.node_layer[nodes[p][0]], nodes[p][0], nodes[p][1]))
    pos = {p: k for k, p in enumerate(order)}
    new_nodes = [nodes[p] for p in order]
    new_arcs = sorted((pos[t], pos[h], a) for t, h, a in arcs if live[t] and live[h])
    return StateGraph(csp, new_nodes, {n: k for k, n in enumerate(new_nodes)}, new_arcs)


def brute_force_csp(csp: CspInstance, cap: int = DEFAULT_PATH_CAP) -> PathSolution:
    """Filter every path through the side rows; first best path wins ties."""
    best = None
    sign = csp.sign
    for path in enumerate_paths(csp.dd, cap):
        if not csp.side.satisfied(path.arcs):
            continue
        if best is None or sign * path.objective < sign * best.objective - TOL:
            best = path
    if best is None:
        raise NoFeasiblePath("no path satisfies the side constraints")
    return best


def solve_unconstrained(csp: CspInstance) -> PathSolution:
    return extreme_path(csp.dd, csp.sense)
