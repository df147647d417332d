"""Depth-first pulse search over a decision diagram with resource labels.

The search is generic in the resource: callers provide how a resource
extends along an arc (returning ``None`` when the extension can no longer
reach the terminal feasibly) and when one resource dominates another.
Costs are always minimised; callers negate lengths to maximise.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Sequence

from .dd import DecisionDiagram
from .errors import TimeLimitReached


@dataclass(frozen=True)
class PulseConfig:
    store_size: int = 4
    time_limit: float | None = None
    greedy_order: bool = True


@dataclass
class PulseStats:
    pulses: int = 0
    pruned_bound: int = 0
    pruned_infeasible: int = 0
    pruned_dominance: int = 0
    improvements: int = 0


def cost_to_go(dd: DecisionDiagram, cost: Sequence[float]) -> list[float]:
    """Cheapest completion from every node, ignoring resources."""
    best = [0.0] * dd.num_nodes
    for layer in reversed(dd.layers[:-1]):
        for u in layer:
            best[u] = min(cost[a] + best[dd.heads[a]] for a in dd.out_arcs[u])
    return best


def pulse_search(dd: DecisionDiagram, cost: Sequence[float], root_resource,
                 extend: Callable, dominates: Callable, config: PulseConfig = PulseConfig(),
                 upper_bound: float = math.inf, bound: Sequence[float] | None = None):
    """Return ``(arcs, value, stats)`` for the cheapest feasible path.

    ``arcs`` is ``None`` when no path beats ``upper_bound``.
    """
    bound = cost_to_go(dd, cost) if bound is None else bound
    deadline = None if config.time_limit is None else time.monotonic() + config.time_limit
    size = max(int(config.store_size), 0)
    stores = [[] for _ in range(dd.num_nodes)]
    slots = [0] * dd.num_nodes
    stats = PulseStats()
    terminal = dd.terminal
    heads = dd.heads
    children = []
    for u in range(dd.num_nodes):
        arcs = list(dd.out_arcs[u])
        if config.greedy_order:
            arcs.sort(key=lambda a: (cost[a] + bound[heads[a]], a))
        children.append(arcs)

    best = [upper_bound, None]
    path = []

    def pulse(u, resource, acc):
        stats.pulses += 1
        if deadline is not None and stats.pulses % 1024 == 0 and time.monotonic() > deadline:
            raise TimeLimitReached("pulse search hit its time limit")
        if u == terminal:
            if acc < best[0] - 1e-9:
                best[0] = acc
                best[1] = list(path)
                stats.improvements += 1
            return
        if size:
            store = stores[u]
            for r, c in store:
                if c <= acc + 1e-9 and dominates(r, resource):
                    stats.pruned_dominance += 1
                    return
            if len(store) < size:
                store.append((resource, acc))
            else:
                store[slots[u]] = (resource, acc)
                slots[u] = (slots[u] + 1) % size
        for a in children[u]:
            h = heads[a]
            new_acc = acc + cost[a]
            if new_acc + bound[h] >= best[0] - 1e-9:
                stats.pruned_bound += 1
                continue
            nxt = extend(resource, a)
            if nxt is None:
                stats.pruned_infeasible += 1
                continue
            path.append(a)
            pulse(h, nxt, new_acc)
            path.pop()

    pulse(dd.root, root_resource, 0.0)
    return best[1], best[0], stats
