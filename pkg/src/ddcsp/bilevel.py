"""Bilevel programs with a blocking leader, solved through the follower's DD.

The leader picks ``x^L``; the follower then maximises over the paths of its
decision diagram that avoid yes-arcs of blocked variables.  The follower's
optimality is written with LP duality over the arc-flow model of the DD,
which gives a single-level MILP once the products ``gamma_a * x^L`` are
replaced by big-M terms.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import numpy as np

from .dd import DecisionDiagram, DpSpec, LinearBinarySpec, compile_dd, extreme_path, reduce_dd
from .errors import CapExceeded, InfeasibleInstance, SolverError, TimeLimitReached
from .milp.bnb import solve_milp
from .milp.model import LpModel, Status

BRUTE_FORCE_CAP = 20
CERT_TOL = 1e-6
DIST_BOUNDS = {"u25": 25, "u50": 50, "u100": 100}


@dataclass
class BilevelInstance:
    """``max c1L.xL + c2L.xF`` s.t. ``AL xL + BL xF <= bL`` and follower optimality.

    The follower maximises ``cF.xF`` subject to ``AF xF <= bF`` and
    ``xF <= 1 - xL``.  A generic follower can be given as a DP model instead
    of ``AF, bF``; its stage costs then define the follower objective.
    """

    c1L: Sequence[float]
    c2L: Sequence[float]
    AL: Sequence[Sequence[float]]
    BL: Sequence[Sequence[float]]
    bL: Sequence[float]
    cF: Sequence[float] | None = None
    AF: Sequence[Sequence[float]] | None = None
    bF: Sequence[float] | None = None
    follower_spec: DpSpec | None = None
    order: str = "given"

    def __post_init__(self):
        self.n = len(self.c1L)
        if len(self.c2L) != self.n:
            raise ValueError("c1L and c2L differ in length")
        if len(self.AL) != len(self.bL) or len(self.BL) != len(self.bL):
            raise ValueError("leader rows are inconsistent")
        if self.follower_spec is None:
            if self.cF is None or self.AF is None or self.bF is None:
                raise ValueError("follower needs either (cF, AF, bF) or a DP model")
            if len(self.cF) != self.n:
                raise ValueError("cF has the wrong length")
        if self.order not in ("given", "weight-asc"):
            raise ValueError("order must be 'given' or 'weight-asc'")

    @property
    def follower_nonnegative(self) -> bool:
        return self.AF is not None and all(v >= 0 for row in self.AF for v in row)

    @property
    def leader_coupled(self) -> bool:
        return any(v != 0 for row in self.BL for v in row)


@dataclass
class CpspInstance:
    """Competitive project selection data (all entries non-negative integers)."""

    cL: list
    dL: list
    cF: list
    aL: list
    aF: list
    bL: int
    bF: int
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.cL)

    def to_bilevel(self, order: str = "weight-asc") -> BilevelInstance:
        n = self.n
        return BilevelInstance(
            c1L=list(self.cL), c2L=[-v for v in self.dL],
            AL=[list(self.aL)], BL=[[0] * n], bL=[self.bL],
            cF=list(self.cF), AF=[list(self.aF)], bF=[self.bF], order=order)


@dataclass
class BilevelSolution:
    x_leader: tuple
    x_follower: tuple
    leader_objective: float
    follower_objective: float
    pi: dict = field(default_factory=dict, repr=False)
    gamma: dict = field(default_factory=dict, repr=False)
    residuals: dict = field(default_factory=dict, repr=False)
    stats: dict = field(default_factory=dict, repr=False)


# -- follower diagram --------------------------------------------------------

def _layer_order(inst: BilevelInstance) -> list[int]:
    if inst.order == "weight-asc" and inst.AF is not None:
        weight = [sum(row[j] for row in inst.AF) for j in range(inst.n)]
        return sorted(range(inst.n), key=lambda j: (weight[j], j))
    return list(range(inst.n))


def build_follower_dd(inst: BilevelInstance, drop_negative: bool | None = None,
                      reduce: bool = True) -> DecisionDiagram:
    """Reduced DD of the follower's feasible set, yes-arc length ``cF_j``.

    With non-negative ``AF`` a variable with ``cF_j < 0`` is never chosen by
    an optimal follower, so its yes-arcs are dropped (``drop_negative``
    defaults to exactly that case).
    """
    order = _layer_order(inst)
    if inst.follower_spec is not None:
        dd = compile_dd(inst.follower_spec, inst.n, var_order=order)
    else:
        if drop_negative is None:
            drop_negative = inst.follower_nonnegative
        fixed = [k for k, j in enumerate(order) if drop_negative and inst.cF[j] < 0]
        spec = LinearBinarySpec([inst.cF[j] for j in order],
                                [[row[j] for j in order] for row in inst.AF],
                                inst.bF, fixed_zero=fixed)
        dd = compile_dd(spec, inst.n, var_order=order)
    return reduce_dd(dd) if reduce else dd


def yes_arcs(dd: DecisionDiagram) -> list[int]:
    return [a for a in range(dd.num_arcs) if dd.values[a] == 1]


def compute_big_m(inst: BilevelInstance, dd: DecisionDiagram, rule: str = "auto") -> dict:
    """Big-M constant for every yes-arc.

    ``ell``: ``M_a = l_a``, valid for non-negative ``AF`` once no yes-arc has a
    negative length.  ``range``: ``M_a = l_a + sum max(cF, 0) - sum min(cF, 0)``,
    valid in general; for a DP-model follower the spread of completion
    lengths in the DD replaces the coefficient sums.  ``auto`` picks ``ell``
    when it applies.
    """
    arcs = yes_arcs(dd)
    if rule not in ("auto", "ell", "range"):
        raise ValueError("rule must be 'auto', 'ell' or 'range'")
    ell_ok = inst.follower_nonnegative and all(dd.lengths[a] >= 0 for a in arcs)
    if rule == "ell" and not ell_ok:
        raise ValueError("M_a = l_a needs non-negative AF and non-negative yes-arc lengths")
    if rule == "ell" or (rule == "auto" and ell_ok):
        return {a: dd.lengths[a] for a in arcs}
    if inst.cF is not None and inst.follower_spec is None:
        spread = sum(max(c, 0) for c in inst.cF) - sum(min(c, 0) for c in inst.cF)
    else:
        lo, hi = dd.completion_bounds()
        spread = max(hi) - min(lo)
    return {a: max(dd.lengths[a] + spread, 0.0) for a in arcs}


def build_single_level_milp(inst: BilevelInstance, dd: DecisionDiagram, M: dict) -> LpModel:
    """Leader rows plus the follower's primal, dual and linearised duality rows."""
    n = inst.n
    model = LpModel("bilevel")
    xl = [model.add_var(f"xL_{j}", binary=True) for j in range(n)]
    xf = [model.add_var(f"xF_{j}", binary=True) for j in range(n)]
    y = [model.add_var(f"y_{a}", 0.0, 1.0) for a in range(dd.num_arcs)]
    pi = {u: model.add_var(f"pi_{u}", -math.inf, math.inf)
          for u in range(dd.num_nodes) if u != dd.terminal}
    ya = yes_arcs(dd)
    gamma = {a: model.add_var(f"gamma_{a}", 0.0, math.inf) for a in ya}
    var_of = [dd.var_order[dd.arc_layer(a)] for a in range(dd.num_arcs)]

    for i, (arow, brow, rhs) in enumerate(zip(inst.AL, inst.BL, inst.bL)):
        terms = {}
        for j in range(n):
            if arow[j]:
                terms[xl[j]] = arow[j]
            if brow[j]:
                terms[xf[j]] = brow[j]
        model.add_constraint(f"leader_{i}", terms, "<=", rhs)
    model.add_constraint("src", {y[a]: 1.0 for a in dd.out_arcs[dd.root]}, "=", 1.0)
    for u in range(dd.num_nodes):
        if u in (dd.root, dd.terminal):
            continue
        terms = {y[a]: 1.0 for a in dd.out_arcs[u]}
        for a in dd.in_arcs[u]:
            terms[y[a]] = -1.0
        model.add_constraint(f"flow_{u}", terms, "=", 0.0)
    for a in ya:
        model.add_constraint(f"block_{a}", {y[a]: 1.0, xl[var_of[a]]: 1.0}, "<=", 1.0)
    for a in range(dd.num_arcs):
        terms = {pi[dd.tails[a]]: 1.0}
        if dd.heads[a] != dd.terminal:
            terms[pi[dd.heads[a]]] = -1.0
        if a in gamma:
            terms[gamma[a]] = 1.0
        model.add_constraint(f"dual_{a}", terms, ">=", dd.lengths[a])
    for j in range(n):
        terms = {xf[j]: 1.0}
        for a in ya:
            if var_of[a] == j:
                terms[y[a]] = -1.0
        model.add_constraint(f"link_{j}", terms, "=", 0.0)
    sd = {y[a]: dd.lengths[a] for a in range(dd.num_arcs) if dd.lengths[a]}
    sd[pi[dd.root]] = -1.0
    for a in ya:
        sd[gamma[a]] = -1.0
        sd[xl[var_of[a]]] = sd.get(xl[var_of[a]], 0.0) + M[a]
    model.add_constraint("duality", sd, "=", 0.0)
    for a in ya:
        model.add_constraint(f"consistency_{a}", {gamma[a]: 1.0, xl[var_of[a]]: -M[a]}, ">=", 0.0)
    obj = {}
    for j in range(n):
        if inst.c1L[j]:
            obj[xl[j]] = inst.c1L[j]
        if inst.c2L[j]:
            obj[xf[j]] = inst.c2L[j]
    model.set_objective(obj, "max")
    return model


# -- verification helpers ----------------------------------------------------

def follower_best(dd: DecisionDiagram, x_leader: Sequence[int]):
    """Follower optimum over the DD with blocked yes-arcs removed."""
    keep = [not (dd.values[a] == 1 and x_leader[dd.var_order[dd.arc_layer(a)]])
            for a in range(dd.num_arcs)]
    return extreme_path(dd.restrict(keep), "max")


def certificate_residuals(inst: BilevelInstance, dd: DecisionDiagram, x_leader, y, pi, gamma):
    """Worst violation of dual feasibility and of the duality equation."""
    def p(u):
        return 0.0 if u == dd.terminal else pi[u]

    dual = 0.0
    for a in range(dd.num_arcs):
        lhs = p(dd.tails[a]) - p(dd.heads[a]) + gamma.get(a, 0.0)
        dual = max(dual, dd.lengths[a] - lhs)
    for a, g in gamma.items():
        dual = max(dual, -g)
    primal = math.fsum(dd.lengths[a] * y[a] for a in range(dd.num_arcs))
    blocked = math.fsum(g * (1 - x_leader[dd.var_order[dd.arc_layer(a)]]) for a, g in gamma.items())
    gap = abs(primal - pi[dd.root] - blocked)
    return {"dual_feasibility": dual, "strong_duality": gap}


def leader_value(inst: BilevelInstance, xl, xf) -> float:
    return math.fsum(inst.c1L[j] * xl[j] + inst.c2L[j] * xf[j] for j in range(inst.n))


def follower_value(inst: BilevelInstance, dd: DecisionDiagram, xf) -> float:
    if inst.cF is not None and inst.follower_spec is None:
        return math.fsum(inst.cF[j] * xf[j] for j in range(inst.n))
    # generic follower: the length of the DD path that spells xf
    u = dd.root
    total = 0.0
    for layer in range(dd.num_vars):
        v = xf[dd.var_order[layer]]
        a = next(a for a in dd.out_arcs[u] if dd.values[a] == v)
        total += dd.lengths[a]
        u = dd.heads[a]
    return total


# -- solvers -----------------------------------------------------------------

def solve_ddr(inst: BilevelInstance, rule: str = "auto", time_limit: float | None = None,
              node_cap: int = 10**6) -> BilevelSolution:
    """Compile, reduce, assign big-M values, build and solve the single-level MILP."""
    t0 = time.perf_counter()
    if rule == "range":
        dd = build_follower_dd(inst, drop_negative=False)
    else:
        dd = build_follower_dd(inst)
    M = compute_big_m(inst, dd, rule)
    model = build_single_level_milp(inst, dd, M)
    t_build = time.perf_counter() - t0
    remaining = None if time_limit is None else time_limit - t_build
    if remaining is not None and remaining <= 0:
        raise TimeLimitReached("building the single-level model used up the time limit")
    # branching on leader variables first: once x^L is integral the follower
    # side of the model is an LP over the DD polytope with integral vertices
    priority = [1 if name.startswith("xL_") else 0 for name in model.var_names]
    sol = solve_milp(model, time_limit=remaining, node_cap=node_cap, priority=priority)
    if sol.status == Status.INFEASIBLE:
        raise InfeasibleInstance("the single-level model is infeasible")
    if sol.status != Status.OPTIMAL:
        raise SolverError(sol.status.value)
    x = sol.x
    n = inst.n
    xl = tuple(int(round(x[model.var(f"xL_{j}")])) for j in range(n))
    xf = tuple(int(round(x[model.var(f"xF_{j}")])) for j in range(n))
    y = [float(x[model.var(f"y_{a}")]) for a in range(dd.num_arcs)]
    pi = {u: float(x[model.var(f"pi_{u}")]) for u in range(dd.num_nodes) if u != dd.terminal}
    gamma = {a: float(x[model.var(f"gamma_{a}")]) for a in yes_arcs(dd)}
    fval = follower_value(inst, dd, xf)
    best = follower_best(dd, xl)
    if abs(best.objective - fval) > 1e-6:
        raise SolverError("verification", "returned follower response is not optimal")
    if any(xl[j] and xf[j] for j in range(n)):
        raise SolverError("verification", "follower uses a blocked variable")
    res = certificate_residuals(inst, dd, xl, y, pi, gamma)
    stats = {"nodes": sol.nodes, "iterations": sol.iterations, "dd_nodes": dd.num_nodes,
             "dd_arcs": dd.num_arcs, "rows": model.num_constraints, "vars": model.num_vars,
             "time": time.perf_counter() - t0}
    return BilevelSolution(xl, xf, leader_value(inst, xl, xf), fval, pi, gamma, res, stats)


def _leader_vectors(n: int):
    """All of {0,1}^n in counting order (first variable is the slowest bit)."""
    idx = np.arange(2 ** n, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts) & 1).astype(np.int8)


def brute_force_bilevel(inst: BilevelInstance, cap: int = BRUTE_FORCE_CAP) -> BilevelSolution:
    """Enumerate leader vectors; follower best response by blocked-DD longest path.

    Among follower optima the one best for the leader is used.  Ties between
    leader vectors go to the first in counting order.
    """
    n = inst.n
    if n > cap:
        raise CapExceeded(f"n = {n} exceeds the brute-force cap of {cap}")
    if any(b < 0 for b in inst.bL):
        raise InfeasibleInstance("a leader budget is negative")
    dd = build_follower_dd(inst, drop_negative=False)
    AL = np.array(inst.AL, dtype=float).reshape(len(inst.bL), n)
    bL = np.array(inst.bL, dtype=float)
    c1 = np.array(inst.c1L, dtype=float)
    c2 = np.array(inst.c2L, dtype=float)
    best = None
    chunk = 1 << 16
    X = _leader_vectors(n)
    for start in range(0, len(X), chunk):
        XL = X[start:start + chunk]
        if not inst.leader_coupled:
            XL = XL[np.all(XL @ AL.T <= bL + 1e-9, axis=1)]
        if not len(XL):
            continue
        if inst.leader_coupled:
            vals = np.array([_coupled_value(inst, dd, xl) for xl in XL])
        else:
            fv, lv = _follower_tables(dd, XL, c2)
            vals = XL @ c1 + lv
        k = int(np.argmax(vals))
        if vals[k] > -math.inf and (best is None or vals[k] > best[0] + 1e-9):
            best = (float(vals[k]), tuple(int(v) for v in XL[k]))
    if best is None:
        raise InfeasibleInstance("no leader decision admits a feasible follower response")
    xl = best[1]
    xf = _optimistic_response(inst, dd, xl)
    return BilevelSolution(xl, xf, leader_value(inst, xl, xf), follower_value(inst, dd, xf))


def _follower_tables(dd: DecisionDiagram, XL, c2):
    """Per leader vector: follower optimum and best leader term among optima."""
    k = len(XL)
    fval = [None] * dd.num_nodes
    lval = [None] * dd.num_nodes
    fval[dd.terminal] = np.zeros(k)
    lval[dd.terminal] = np.zeros(k)
    var_of = [dd.var_order[dd.arc_layer(a)] for a in range(dd.num_arcs)]
    for layer in reversed(dd.layers[:-1]):
        for u in layer:
            bf = np.full(k, -math.inf)
            bl = np.full(k, -math.inf)
            for a in dd.out_arcs[u]:
                h = dd.heads[a]
                f = fval[h] + dd.lengths[a]
                l = lval[h] + (c2[var_of[a]] if dd.values[a] == 1 else 0.0)
                if dd.values[a] == 1:
                    blocked = XL[:, var_of[a]] == 1
                    f = np.where(blocked, -math.inf, f)
                better = f > bf + 1e-9
                tie = np.abs(f - bf) <= 1e-9
                bl = np.where(better, l, np.where(tie, np.maximum(bl, l), bl))
                bf = np.where(better, f, bf)
            fval[u], lval[u] = bf, bl
    return fval[dd.root], lval[dd.root]


def _follower_optima(inst, dd, xl):
    """Every follower-optimal response for one leader vector."""
    best = follower_best(dd, xl).objective
    keep = [not (dd.values[a] == 1 and xl[dd.var_order[dd.arc_layer(a)]])
            for a in range(dd.num_arcs)]
    sub = dd.restrict(keep)
    _, hi = sub.completion_bounds()
    out = []
    stack = [(sub.root, 0.0, [])]
    while stack:
        u, acc, arcs = stack.pop()
        if u == sub.terminal:
            out.append(sub.assignment(arcs))
            continue
        for a in sub.out_arcs[u]:
            h = sub.heads[a]
            if acc + sub.lengths[a] + hi[h] >= best - 1e-9:
                stack.append((h, acc + sub.lengths[a], arcs + [a]))
    return out


def _coupled_value(inst, dd, xl):
    val = -math.inf
    for xf in _follower_optima(inst, dd, xl):
        lhs = [sum(a[j] * xl[j] + b[j] * xf[j] for j in range(inst.n))
               for a, b in zip(inst.AL, inst.BL)]
        if all(v <= r + 1e-9 for v, r in zip(lhs, inst.bL)):
            val = max(val, leader_value(inst, xl, xf))
    return val


def _optimistic_response(inst, dd, xl):
    best = None
    for xf in sorted(_follower_optima(inst, dd, xl)):
        if inst.leader_coupled:
            lhs = [sum(a[j] * xl[j] + b[j] * xf[j] for j in range(inst.n))
                   for a, b in zip(inst.AL, inst.BL)]
            if not all(v <= r + 1e-9 for v, r in zip(lhs, inst.bL)):
                continue
        v = leader_value(inst, xl, xf)
        if best is None or v > best[0] + 1e-9:
            best = (v, xf)
    return best[1]


# -- instance generation -----------------------------------------------------

def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def generate_cpsp(n: int, t: float, dist: str = "u25", seed: int = 0, d_mode: str = "cF",
                  follower_profit: str = "default") -> CpspInstance:
    """Random competitive project selection instance.

    ``a^L = a^F ~ U(1, K)``, budgets ``round(t * sum a)``, profits
    ``5 a + U(1, 10)``.  ``d_mode`` picks the leader's penalty for follower
    projects: ``cF`` (copy the follower profit), ``cL`` or ``zero``.
    ``follower_profit='signed'`` draws ``c^F ~ U(-10, 10)`` instead.
    """
    if not 0 < t <= 1:
        raise ValueError("tightness must lie in (0, 1]")
    if dist not in DIST_BOUNDS:
        raise ValueError(f"dist must be one of {sorted(DIST_BOUNDS)}")
    if d_mode not in ("cF", "cL", "zero"):
        raise ValueError("d_mode must be 'cF', 'cL' or 'zero'")
    if follower_profit not in ("default", "signed"):
        raise ValueError("follower_profit must be 'default' or 'signed'")
    rng = np.random.default_rng(seed)
    a = rng.integers(1, DIST_BOUNDS[dist] + 1, size=n)
    budget = _round_half_up(t * int(a.sum()))
    cL = 5 * a + rng.integers(1, 11, size=n)
    if follower_profit == "signed":
        cF = rng.integers(-10, 11, size=n)
    else:
        cF = 5 * a + rng.integers(1, 11, size=n)
    dL = {"cF": cF, "cL": cL, "zero": np.zeros(n, dtype=np.int64)}[d_mode]
    meta = {"n": n, "t": t, "dist": dist, "seed": seed, "d_mode": d_mode,
            "follower_profit": follower_profit}
    return CpspInstance(cL=[int(v) for v in cL], dL=[int(v) for v in dL],
                        cF=[int(v) for v in cF], aL=[int(v) for v in a],
                        aF=[int(v) for v in a], bL=budget, bF=budget, meta=meta)

