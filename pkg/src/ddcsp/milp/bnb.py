"""Best-bound branch-and-bound over binary variables.

One simplex engine is shared by every node.  Moving to a node only changes
variable bounds, so the previous optimal basis stays dual feasible (after
flipping boxed nonbasics) and the dual simplex usually needs a handful of
pivots.
"""
from __future__ import annotations

import heapq
from collections import deque
import math
import time

import numpy as np

from .model import LpModel, LpSolution, Status
from .simplex import FEAS_TOL, Deadline, IterationCap, _engine_for, too_large

INT_TOL = 1e-6
ROUNDING_TOL = 1e-6
INVERSE_CACHE_BYTES = 256 * 2**20


def _integral_objective(model: LpModel) -> bool:
    """True when every feasible objective value is an integer (plus constant)."""
    for j, v in model.objective.items():
        if not model.binary[j] or v != round(v):
            return False
    return True


def solve_milp(model: LpModel, int_tol: float = INT_TOL, feas_tol: float = FEAS_TOL,
               node_cap: int = 10**6, max_iter: int = 10**7,
               time_limit: float | None = None, priority=None) -> LpSolution:
    """Exact optimum of ``model`` with its binaries enforced.

    Nodes are explored by best bound; among equal bounds the most recently
    created node goes first, which makes the search dive.  Branching picks the
    most fractional binary, ties broken by variable index; with ``priority``
    (one integer per variable) only the fractional binaries of the highest
    priority present are considered.
    """
    if too_large(model):
        return LpSolution(Status.CAP_EXCEEDED, var_names=model.var_names)
    deadline = None if time_limit is None else time.monotonic() + time_limit
    eng, sign = _engine_for(model, feas_tol, max_iter, deadline)
    n = model.num_vars
    base_lo = np.array(model.lb, dtype=float)
    base_hi = np.array(model.ub, dtype=float)
    binaries = np.flatnonzero(model.binary)
    integral = _integral_objective(model)
    const = sign * model.obj_constant

    best_x = None
    best_val = math.inf  # minimisation form, without constant
    nodes = 0
    counter = 0
    prio = None if priority is None else np.asarray(priority, dtype=float)[binaries]
    heap = [(-math.inf, 0, (), 0, None)]  # (bound, -order, fixings, parent, basis)
    last_solved = None
    # open snapshots that still carry a basis inverse, oldest first
    cached = deque()
    cache_slots = max(INVERSE_CACHE_BYTES // max(8 * eng.m * eng.m, 1), 1)

    def prunable(bound):
        if best_x is None:
            return False
        if integral:
            return math.ceil(bound + const - 1e-6) - const >= best_val - 1e-9
        return bound >= best_val - 1e-9 * (1.0 + abs(best_val))

    status = Status.OPTIMAL
    try:
        while heap:
            bound, _, fixings, parent, snap = heapq.heappop(heap)
            if prunable(bound):
                continue
            if nodes >= node_cap:
                status = Status.CAP_EXCEEDED
                break
            if deadline is not None and time.monotonic() > deadline:
                status = Status.TIME_LIMIT
                break
            nodes += 1
            lo = base_lo.copy()
            hi = base_hi.copy()
            for j, v in fixings:
                lo[j] = hi[j] = v
            if nodes == 1:
                eng.set_bounds(lo, hi)
                res = eng.finish(eng.solve_primal())
            else:
                if parent != last_solved:
                    eng.restore(snap)
                eng.set_bounds(lo, hi)
                res = eng.solve_warm()
            last_solved = nodes
            if res == Status.UNBOUNDED:
                if nodes == 1:
                    return LpSolution(Status.UNBOUNDED, iterations=eng.iterations, nodes=nodes,
                                      var_names=model.var_names)
                continue
            if res != Status.OPTIMAL:
                continue
            val = eng.objective()
            if prunable(val):
                continue
            x = eng.x[:n]
            xb = x[binaries]
            frac = np.minimum(xb - np.floor(xb), np.ceil(xb) - xb)
            if prio is not None and len(frac) and frac.max() > int_tol:
                top = prio[frac > int_tol].max()
                frac = np.where(prio == top, frac, 0.0)
            k = int(np.argmax(frac)) if len(frac) else 0
            if not len(frac) or frac[k] <= int_tol:
                cand = x.copy()
                cand[binaries] = np.round(xb)
                cval = float(eng.cost[:n] @ cand)
                if cval >= best_val:
                    continue
                # rounding a nearly integral binary with a large coefficient can
                # break a row; such a point is branched on like a fractional one
                raw = np.minimum(xb - np.floor(xb), np.ceil(xb) - xb)
                if model.max_violation(cand) <= ROUNDING_TOL or raw.max() == 0.0:
                    best_val, best_x = cval, cand
                    continue
                k = int(np.argmax(raw))
            j = int(binaries[k])
            first, second = (0.0, 1.0) if x[j] >= 0.5 else (1.0, 0.0)
            # the child pushed last is explored first among equal bounds
            snap = eng.snapshot(keep_inverse=True)
            cached.append(snap)
            while len(cached) > cache_slots:
                cached.popleft()[2] = None
            for v in (first, second):
                counter += 1
                heapq.heappush(heap, (val, -counter, fixings + ((j, v),), nodes, snap))
    except IterationCap:
        status = Status.CAP_EXCEEDED
    except Deadline:
        status = Status.TIME_LIMIT

    if best_x is None:
        if status == Status.OPTIMAL:
            status = Status.INFEASIBLE
        return LpSolution(status, iterations=eng.iterations, nodes=nodes, var_names=model.var_names)
    return LpSolution(status, x=best_x, objective=model.evaluate(best_x),
                      iterations=eng.iterations, nodes=nodes, var_names=model.var_names)
