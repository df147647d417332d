"""Layered decision diagrams: compilation from DP models, reduction, traversal.

A diagram over ``n`` variables has ``n + 1`` layers.  Layer 0 holds the root
and layer ``n`` holds the terminal; every arc goes from layer ``j`` to layer
``j + 1`` and assigns ``x_j = value`` at cost ``length``.  Diagrams are treated
as immutable once built.
"""
from __future__ import annotations

import abc
import math
from collections import namedtuple
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Iterator, Sequence

from .errors import LayerExplosion, NoFeasiblePath, PathCapExceeded

DEFAULT_NODE_CAP = 10**7
DEFAULT_PATH_CAP = 10**6

Arc = namedtuple("Arc", "id tail head value length layer")


class DpSpec(abc.ABC):
    """Recursive model ``s_{j+1} = T_j(s_j, x_j)`` with stage costs.

    Subclasses describe a discrete problem stage by stage.  States must be
    hashable; two states with equal :meth:`key` at the same layer are merged
    into one node, so equal keys must imply equal sets of feasible
    completions.
    """

    @abc.abstractmethod
    def initial_state(self) -> Hashable:
        ...

    @abc.abstractmethod
    def domain(self, state, layer: int) -> Iterable[int]:
        """Values admissible for variable ``layer`` (0-based) in ``state``."""

    @abc.abstractmethod
    def transition(self, state, layer: int, value: int):
        """Next state, or ``None`` when the assignment is infeasible."""

    @abc.abstractmethod
    def cost(self, state, layer: int, value: int) -> float:
        ...

    def key(self, state) -> Hashable:
        return state


class LinearBinarySpec(DpSpec):
    """Binary program ``opt c.x  s.t.  A x <= b`` as a running-sum DP.

    The state is the vector of row sums accumulated so far.  With negative
    entries in ``A`` an assignment is kept while some completion can still
    satisfy every row.
    """

    def __init__(self, c: Sequence[float], A: Sequence[Sequence[float]], b: Sequence[float],
                 fixed_zero: Iterable[int] = ()):
        self.c = [float(v) for v in c]
        self.n = len(self.c)
        self.A = [[float(v) for v in row] for row in A]
        self.b = [float(v) for v in b]
        if len(self.A) != len(self.b):
            raise ValueError("A and b have different row counts")
        for row in self.A:
            if len(row) != self.n:
                raise ValueError("A has the wrong number of columns")
        self.fixed_zero = frozenset(fixed_zero)
        # smallest achievable contribution of variables j..n-1, per row
        self._min_rest = [[0.0] * (self.n + 1) for _ in self.A]
        for i, row in enumerate(self.A):
            for j in range(self.n - 1, -1, -1):
                self._min_rest[i][j] = self._min_rest[i][j + 1] + min(row[j], 0.0)

    def initial_state(self):
        return tuple(0.0 for _ in self.A)

    def domain(self, state, layer):
        if layer in self.fixed_zero:
            return (0,)
        return (0, 1)

    def transition(self, state, layer, value):
        nxt = tuple(s + row[layer] * value for s, row in zip(state, self.A))
        for i, s in enumerate(nxt):
            if s + self._min_rest[i][layer + 1] > self.b[i] + 1e-9:
                return None
        return nxt

    def cost(self, state, layer, value):
        return self.c[layer] * value


@dataclass(frozen=True)
class PathSolution:
    arcs: tuple
    values: tuple
    objective: float
    stats: dict = field(default_factory=dict, compare=False, repr=False)


class DecisionDiagram:
    """Immutable layered digraph with valued, weighted arcs.

    Nodes are renumbered by layer and arcs are sorted by
    ``(layer, tail, value)``, so ids are deterministic for a given input.
    """

    def __init__(self, num_vars: int, node_layer: Sequence[int], tails: Sequence[int],
                 heads: Sequence[int], values: Sequence[int], lengths: Sequence[float],
                 node_states: Sequence | None = None, var_order: Sequence[int] | None = None):
        if num_vars < 1:
            raise ValueError("a diagram needs at least one variable")
        n_nodes = len(node_layer)
        order = sorted(range(n_nodes), key=lambda u: (node_layer[u], u))
        new_id = [0] * n_nodes
        for pos, u in enumerate(order):
            new_id[u] = pos
        self.num_vars = num_vars
        # variable decided at each layer; the identity unless a caller reorders
        self.var_order = tuple(range(num_vars)) if var_order is None else tuple(var_order)
        if sorted(self.var_order) != list(range(num_vars)):
            raise ValueError("var_order must be a permutation of the variables")
        self.node_layer = tuple(node_layer[u] for u in order)
        self.node_states = None if node_states is None else tuple(node_states[u] for u in order)

        raw = [(self.node_layer[new_id[t]], new_id[t], int(v), new_id[h], float(l))
               for t, h, v, l in zip(tails, heads, values, lengths)]
        raw.sort(key=lambda r: (r[0], r[1], r[2], r[3]))
        self.tails = tuple(r[1] for r in raw)
        self.heads = tuple(r[3] for r in raw)
        self.values = tuple(r[2] for r in raw)
        self.lengths = tuple(r[4] for r in raw)

        layers = [[] for _ in range(num_vars + 1)]
        for u, j in enumerate(self.node_layer):
            layers[j].append(u)
        self.layers = tuple(tuple(l) for l in layers)
        out_arcs = [[] for _ in range(n_nodes)]
        in_arcs = [[] for _ in range(n_nodes)]
        for a, (t, h) in enumerate(zip(self.tails, self.heads)):
            out_arcs[t].append(a)
            in_arcs[h].append(a)
        self.out_arcs = tuple(tuple(x) for x in out_arcs)
        self.in_arcs = tuple(tuple(x) for x in in_arcs)
        self.validate()

    # -- basic accessors -------------------------------------------------
    @property
    def num_nodes(self) -> int:
        return len(self.node_layer)

    @property
    def num_arcs(self) -> int:
        return len(self.tails)

    @property
    def root(self) -> int:
        return self.layers[0][0]

    @property
    def terminal(self) -> int:
        return self.layers[-1][0]

    def arc(self, a: int) -> Arc:
        return Arc(a, self.tails[a], self.heads[a], self.values[a], self.lengths[a],
                   self.node_layer[self.tails[a]])

    def arc_layer(self, a: int) -> int:
        return self.node_layer[self.tails[a]]

    def layer_sizes(self) -> list[int]:
        return [len(l) for l in self.layers]

    def is_binary(self) -> bool:
        return all(v in (0, 1) for v in self.values)

    def validate(self) -> None:
        n = self.num_vars
        if len(self.layers[0]) != 1 or len(self.layers[n]) != 1:
            raise ValueError("root and terminal layers must hold exactly one node")
        for a in range(self.num_arcs):
            if self.node_layer[self.heads[a]] != self.node_layer[self.tails[a]] + 1:
                raise ValueError(f"arc {a} skips a layer")
        for u in range(self.num_nodes):
            if u != self.terminal and not self.out_arcs[u]:
                raise ValueError(f"node {u} is a dead end")
            if u != self.root and not self.in_arcs[u]:
                raise ValueError(f"node {u} is unreachable")

    def __repr__(self):
        return (f"DecisionDiagram(num_vars={self.num_vars}, nodes={self.num_nodes}, "
                f"arcs={self.num_arcs})")

    # -- derived diagrams ------------------------------------------------
    def with_lengths(self, lengths: Sequence[float]) -> "DecisionDiagram":
        return DecisionDiagram(self.num_vars, self.node_layer, self.tails, self.heads,
                               self.values, lengths, self.node_states, self.var_order)

    def restrict(self, keep: Sequence[bool]) -> "DecisionDiagram":
        """Sub-diagram made of the kept arcs, with dead ends pruned.

        Raises NoFeasiblePath when no root-terminal path survives.
        """
        alive = [bool(k) for k in keep]
        reach = [False] * self.num_nodes
        reach[self.root] = True
        for layer in self.layers[:-1]:
            for u in layer:
                if reach[u]:
                    for a in self.out_arcs[u]:
                        if alive[a]:
                            reach[self.heads[a]] = True
        coreach = [False] * self.num_nodes
        coreach[self.terminal] = True
        for layer in reversed(self.layers[:-1]):
            for u in layer:
                coreach[u] = any(alive[a] and coreach[self.heads[a]] for a in self.out_arcs[u])
        if not coreach[self.root]:
            raise NoFeasiblePath("no root-terminal path survives the restriction")
        keep_node = [r and c for r, c in zip(reach, coreach)]
        nodes = [u for u in range(self.num_nodes) if keep_node[u]]
        idx = {u: i for i, u in enumerate(nodes)}
        arcs = [a for a in range(self.num_arcs)
                if alive[a] and keep_node[self.tails[a]] and keep_node[self.heads[a]]]
        states = None if self.node_states is None else [self.node_states[u] for u in nodes]
        return DecisionDiagram(
            self.num_vars, [self.node_layer[u] for u in nodes],
            [idx[self.tails[a]] for a in arcs], [idx[self.heads[a]] for a in arcs],
            [self.values[a] for a in arcs], [self.lengths[a] for a in arcs], states,
            self.var_order)

    # -- counting --------------------------------------------------------
    def path_count(self) -> int:
        count = [0] * self.num_nodes
        count[self.terminal] = 1
        for layer in reversed(self.layers[:-1]):
            for u in layer:
                count[u] = sum(count[self.heads[a]] for a in self.out_arcs[u])
        return count[self.root]

    def completion_bounds(self, lengths: Sequence[float] | None = None):
        """Shortest and longest completion length from every node to the terminal."""
        lengths = self.lengths if lengths is None else lengths
        lo = [0.0] * self.num_nodes
        hi = [0.0] * self.num_nodes
        for layer in reversed(self.layers[:-1]):
            for u in layer:
                lo[u] = min(lengths[a] + lo[self.heads[a]] for a in self.out_arcs[u])
                hi[u] = max(lengths[a] + hi[self.heads[a]] for a in self.out_arcs[u])
        return lo, hi

    def assignment(self, arcs: Sequence[int]) -> tuple:
        """Values of a path indexed by variable rather than by layer."""
        x = [0] * self.num_vars
        for a in arcs:
            x[self.var_order[self.arc_layer(a)]] = self.values[a]
        return tuple(x)

    def path_solution(self, arcs: Sequence[int], stats: dict | None = None) -> PathSolution:
        arcs = tuple(arcs)
        return PathSolution(arcs, tuple(self.values[a] for a in arcs),
                            math.fsum(self.lengths[a] for a in arcs), stats or {})


def compile_dd(spec: DpSpec, n: int, node_cap: int = DEFAULT_NODE_CAP,
               var_order: Sequence[int] | None = None) -> DecisionDiagram:
    """State-transition graph of ``spec`` with all final states merged.

    Nodes that cannot reach the terminal are removed, so every node lies on
    some root-terminal path.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    init = spec.initial_state()
    node_layer = [0]
    node_states = [init]
    current = {spec.key(init): 0}
    tails, heads, values, lengths = [], [], [], []
    terminal = None
    for j in range(n):
        last = j == n - 1
        nxt = {}
        for u in current.values():
            state = node_states[u]
            for v in sorted(spec.domain(state, j)):
                new_state = spec.transition(state, j, v)
                if new_state is None:
                    continue
                if last:
                    if terminal is None:
                        terminal = len(node_layer)
                        node_layer.append(n)
                        node_states.append(new_state)
                    elif node_states[terminal] != new_state:
                        node_states[terminal] = None
                    head = terminal
                else:
                    k = spec.key(new_state)
                    head = nxt.get(k)
                    if head is None:
                        head = len(node_layer)
                        node_layer.append(j + 1)
                        node_states.append(new_state)
                        nxt[k] = head
                        if len(nxt) > node_cap:
                            raise LayerExplosion(f"layer {j + 1} exceeds {node_cap} nodes")
                tails.append(u)
                heads.append(head)
                values.append(v)
                lengths.append(float(spec.cost(state, j, v)))
        if not last and not nxt:
            raise NoFeasiblePath(f"every trajectory is infeasible at layer {j + 1}")
        current = nxt
    if terminal is None:
        raise NoFeasiblePath("no trajectory reaches the last layer")

    # backward pass: drop nodes without a completion
    n_nodes = len(node_layer)
    out = [[] for _ in range(n_nodes)]
    for a, t in enumerate(tails):
        out[t].append(a)
    alive = [False] * n_nodes
    alive[terminal] = True
    for u in sorted(range(n_nodes), key=lambda x: -node_layer[x]):
        if u != terminal:
            alive[u] = any(alive[heads[a]] for a in out[u])
    if not alive[0]:
        raise NoFeasiblePath("no trajectory reaches the terminal")
    keep = [u for u in range(n_nodes) if alive[u]]
    idx = {u: i for i, u in enumerate(keep)}
    arcs = [a for a in range(len(tails)) if alive[tails[a]] and alive[heads[a]]]
    return DecisionDiagram(
        n, [node_layer[u] for u in keep],
        [idx[tails[a]] for a in arcs], [idx[heads[a]] for a in arcs],
        [values[a] for a in arcs], [lengths[a] for a in arcs],
        [node_states[u] for u in keep], var_order)


def reduce_dd(dd: DecisionDiagram) -> DecisionDiagram:
    """Merge nodes with identical outgoing arcs, bottom-up."""
    rep = list(range(dd.num_nodes))
    merged_states = None if dd.node_states is None else [[s] for s in dd.node_states]
    for j in range(dd.num_vars - 1, 0, -1):
        seen = {}
        for u in dd.layers[j]:
            sig = tuple(sorted((rep[dd.heads[a]], dd.values[a], dd.lengths[a])
                               for a in dd.out_arcs[u]))
            first = seen.setdefault(sig, u)
            if first != u:
                rep[u] = first
                if merged_states is not None:
                    merged_states[first].extend(merged_states[u])
    nodes = [u for u in range(dd.num_nodes) if rep[u] == u]
    if len(nodes) == dd.num_nodes:
        return dd
    idx = {u: i for i, u in enumerate(nodes)}
    arcs = [a for a in range(dd.num_arcs) if rep[dd.tails[a]] == dd.tails[a]]
    states = None
    if merged_states is not None:
        states = [merged_states[u][0] if len(merged_states[u]) == 1 else tuple(merged_states[u])
                  for u in nodes]
    return DecisionDiagram(
        dd.num_vars, [dd.node_layer[u] for u in nodes],
        [idx[dd.tails[a]] for a in arcs], [idx[rep[dd.heads[a]]] for a in arcs],
        [dd.values[a] for a in arcs], [dd.lengths[a] for a in arcs], states, dd.var_order)


def extreme_path(dd: DecisionDiagram, sense: str = "min") -> PathSolution:
    """Shortest (``min``) or longest (``max``) root-terminal path.

    Ties go to the smallest arc id at each node.
    """
    if sense not in ("min", "max"):
        raise ValueError("sense must be 'min' or 'max'")
    sign = 1.0 if sense == "min" else -1.0
    best = [0.0] * dd.num_nodes
    choice = [-1] * dd.num_nodes
    for layer in reversed(dd.layers[:-1]):
        for u in layer:
            b = math.inf
            for a in dd.out_arcs[u]:
                val = sign * dd.lengths[a] + best[dd.heads[a]]
                if val < b:
                    b, choice[u] = val, a
            best[u] = b
    arcs = []
    u = dd.root
    while u != dd.terminal:
        arcs.append(choice[u])
        u = dd.heads[choice[u]]
    return dd.path_solution(arcs)


def enumerate_paths(dd: DecisionDiagram, cap: int = DEFAULT_PATH_CAP) -> Iterator[PathSolution]:
    """Every root-terminal path once, in lexicographic arc-id order."""
    total = dd.path_count()
    if total > cap:
        raise PathCapExceeded(f"{total} paths exceed the cap of {cap}")
    return _walk_paths(dd)


def _walk_paths(dd):
    stack = [(dd.root, iter(dd.out_arcs[dd.root]))]
    arcs = []
    while stack:
        u, it = stack[-1]
        a = next(it, None)
        if a is None:
            stack.pop()
            if arcs:
                arcs.pop()
            continue
        arcs.append(a)
        h = dd.heads[a]
        if h == dd.terminal:
            yield dd.path_solution(arcs)
            arcs.pop()
        else:
            stack.append((h, iter(dd.out_arcs[h])))


def export_dot(dd: DecisionDiagram, name: str = "dd") -> str:
    """Graphviz text; value-0 arcs dashed, all others solid."""
    binary = dd.is_binary()
    lines = [f"digraph {name} {{", "  rankdir=TB;"]
    for u in range(dd.num_nodes):
        if u == dd.root:
            label = "r"
        elif u == dd.terminal:
            label = "t"
        elif dd.node_states is not None:
            label = _state_label(dd.node_states[u])
        else:
            label = f"u{u}"
        lines.append(f'  n{u} [label="{label}"];')
    for a in range(dd.num_arcs):
        length = f"{dd.lengths[a]:g}"
        text = length if binary else f"{dd.values[a]}:{length}"
        style = "dashed" if dd.values[a] == 0 else "solid"
        lines.append(f'  n{dd.tails[a]} -> n{dd.heads[a]} [label="{text}", style={style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _state_label(state) -> str:
    text = str(state).replace('"', "'")
    return text if len(text) <= 40 else text[:37] + "..."
