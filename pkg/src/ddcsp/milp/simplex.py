"""Bounded-variable revised simplex with a dense explicit basis inverse.

Every row gets a slack so that ``A x + s = b`` with slack bounds encoding the
row sense.  The engine keeps ``B^-1``, the values of all variables and the
phase-2 reduced costs, which lets branch-and-bound reuse one basis across
nodes: bound changes only move nonbasic values, and the dual simplex
restores primal feasibility.  The dual simplex prices rows by steepest edge
and uses a bound-flipping ratio test, which matters for the many boxed
variables of arc-flow models.
"""
from __future__ import annotations

import math
import time

import numpy as np
from scipy.linalg.blas import dger

from ..errors import SolverError
from .model import LpModel, LpSolution, Status

FEAS_TOL = 1e-7
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
DEGENERATE_LIMIT = 50
CHECK_EVERY = 100      # pivots between accuracy checks of B^-1
REFACTOR_MAX = 1000    # pivots after which B^-1 is rebuilt regardless
INVERSE_TOL = 1e-9
PERTURB = 1e-6         # relative size of the dual-phase cost perturbation
MAX_DENSE_BYTES = 2 * 2**30  # the engine keeps A and B^-1 as dense arrays


class IterationCap(Exception):
    pass


class Deadline(Exception):
    pass


class _BasisReset(Exception):
    """Raised inside the simplex loops after a singular basis forced a restart."""


class SimplexEngine:
    """Simplex state for ``min c.x  s.t.  A x (<=,>=,=) b,  lo <= x <= hi``."""

    def __init__(self, A, b, c, lo, hi, senses, feas_tol=FEAS_TOL, max_iter=10**6,
                 deadline=None):
        A = np.asarray(A, dtype=float)
        m, n = A.shape
        self.m, self.n = m, n
        self.ntot = n + m
        self.A = A
        # column-major coordinate copy of A for sparse products
        cols, rows = np.nonzero(A.T)
        self._a_rows, self._a_cols, self._a_vals = rows, cols, A[rows, cols]
        self._a_ptr = np.searchsorted(cols, np.arange(n + 1))
        self.b = np.asarray(b, dtype=float).copy()
        self.cost = np.concatenate([np.asarray(c, dtype=float), np.zeros(m)])
        self._work_cost = self.cost
        self._rng = np.random.default_rng(12345)
        slo = np.array([0.0 if s in ("<=", "=") else -math.inf for s in senses])
        shi = np.array([0.0 if s in (">=", "=") else math.inf for s in senses])
        self.lo = np.concatenate([np.asarray(lo, dtype=float), slo])
        self.hi = np.concatenate([np.asarray(hi, dtype=float), shi])
        self.feas_tol = feas_tol
        self.max_iter = max_iter
        self.deadline = deadline
        self.iterations = 0
        self._since_refactor = 0
        self._reset = False

        self.x = np.zeros(self.ntot)
        for j in range(n):
            self.x[j] = self._rest_value(j)
        self._slack_basis()

    # -- bookkeeping -----------------------------------------------------
    def _rest_value(self, j, prefer_upper=False):
        lo, hi = self.lo[j], self.hi[j]
        if prefer_upper and hi < math.inf:
            return hi
        if lo > -math.inf:
            return lo
        if hi < math.inf:
            return hi
        return 0.0

    def _slack_basis(self):
        m, n = self.m, self.n
        self.basis = np.arange(n, n + m)
        self.is_basic = np.zeros(self.ntot, dtype=bool)
        self.is_basic[self.basis] = True
        self.Binv = np.eye(m, order="F")
        for j in range(n):
            if not self.lo[j] <= self.x[j] <= self.hi[j] or abs(self.x[j]) == math.inf:
                self.x[j] = self._rest_value(j)
        self._recompute_basics()
        self._recompute_duals()
        self._since_refactor = 0

    def _times_A(self, v):
        """``A @ v`` using the sparse copy."""
        return np.bincount(self._a_rows, weights=self._a_vals * v[self._a_cols], minlength=self.m)

    def _A_times(self, y):
        """``y @ A`` using the sparse copy."""
        return np.bincount(self._a_cols, weights=y[self._a_rows] * self._a_vals, minlength=self.n)

    def _recompute_basics(self):
        xn = np.where(self.is_basic, 0.0, self.x)
        rhs = self.b - self._times_A(xn[:self.n]) - xn[self.n:]
        self.x[self.basis] = self.Binv @ rhs

    def _recompute_duals(self):
        cost = self._work_cost
        y = cost[self.basis] @ self.Binv
        self.d = cost - np.concatenate([self._A_times(y), y])
        self.d[self.basis] = 0.0

    def _column(self, q):
        """Column ``q`` of the tableau ``B^-1 [A I]``."""
        if q < self.n:
            k = slice(self._a_ptr[q], self._a_ptr[q + 1])
            return self.Binv[:, self._a_rows[k]] @ self._a_vals[k]
        return self.Binv[:, q - self.n].copy()

    def _row(self, r):
        """Row ``r`` of the tableau, with basic entries cleared."""
        br = self.Binv[r]
        row = np.concatenate([self._A_times(br), br])
        row[self.basis] = 0.0
        return row

    def refactor(self):
        """Rebuild ``B^-1`` from scratch.

        Basic slacks make the basis block triangular, so only the square
        block of structural columns on the rows without a basic slack needs
        a dense inverse.  A singular basis falls back to the slack basis.
        """
        m, n = self.m, self.n
        spos = np.flatnonzero(self.basis < n)
        lpos = np.flatnonzero(self.basis >= n)
        S = self.basis[spos]
        L = self.basis[lpos] - n
        covered = np.zeros(m, dtype=bool)
        covered[L] = True
        R = np.flatnonzero(~covered)
        Binv = np.zeros((m, m), order="F")
        if len(S):
            block = self.A[np.ix_(R, S)]
            try:
                C = np.linalg.inv(block)
                probe = np.linspace(1.0, 2.0, len(S))
                ok = bool(np.abs(block @ (C @ probe) - probe).max() < 1e-7)
            except np.linalg.LinAlgError:
                ok = False
            if not ok:
                self._slack_basis()
                self._reset = True
                return
            Binv[np.ix_(spos, R)] = C
            # rows of basic slacks: -A[L, S] @ C, with A[L, S] taken sparse
            li, si = np.nonzero(self.A[np.ix_(L, S)])
            if len(li):
                terms = self.A[L[li], S[si]][:, None] * C[si]
                starts = np.flatnonzero(np.r_[True, li[1:] != li[:-1]])
                Binv[np.ix_(lpos[li[starts]], R)] = -np.add.reduceat(terms, starts, axis=0)
        Binv[lpos, L] = 1.0
        self.Binv = Binv
        self._recompute_basics()
        self._recompute_duals()
        self._since_refactor = 0

    def _inverse_error(self):
        """Residual of ``B (B^-1 v) = v`` for a fixed probe vector."""
        v = np.linspace(1.0, 2.0, self.m)
        z = np.zeros(self.ntot)
        z[self.basis] = self.Binv @ v
        return float(np.abs(self._times_A(z[:self.n]) + z[self.n:] - v).max())

    def _tick(self):
        self.iterations += 1
        self._since_refactor += 1
        if self.iterations > self.max_iter:
            raise IterationCap()
        if self.deadline is not None and self.iterations % 64 == 0 and time.monotonic() > self.deadline:
            raise Deadline()
        if self._since_refactor % CHECK_EVERY == 0:
            if self._since_refactor >= REFACTOR_MAX or self._inverse_error() > INVERSE_TOL:
                self.refactor()
            else:
                self._recompute_basics()
                self._recompute_duals()
        if self._reset:
            raise _BasisReset()

    def _pivot(self, r, q, alpha):
        """Make column ``q`` (tableau column ``alpha``) basic in row ``r``."""
        Binv = self.Binv
        prow = Binv[r].copy()
        ratio = alpha / alpha[r]
        ratio[r] = 0.0
        # in-place rank-one update (B^-1 is kept in Fortran order for this)
        Binv = self.Binv = dger(-1.0, ratio, prow, a=Binv, overwrite_a=1)
        Binv[r] = prow / alpha[r]
        leaving = self.basis[r]
        self.is_basic[leaving] = False
        self.is_basic[q] = True
        self.basis[r] = q

    def snapshot(self, keep_inverse=False):
        """Basis and variable values, enough to rebuild the state later.

        With ``keep_inverse`` the basis inverse is stored as well, which makes
        :meth:`restore` cheap at the price of ``m * m`` floats.
        """
        return [self.basis.copy(), self.x.copy(), self.Binv.copy(order="F") if keep_inverse else None]

    def restore(self, snap):
        basis, x, Binv = snap
        self.basis = basis.copy()
        self.is_basic[:] = False
        self.is_basic[self.basis] = True
        self.x = x.copy()
        if Binv is None:
            self.refactor()
        else:
            self.Binv = Binv.copy(order="F")
            self._recompute_basics()
            self._recompute_duals()
            self._since_refactor = 0

    def set_bounds(self, lo, hi):
        """Replace structural bounds; nonbasic values move to a valid bound."""
        n = self.n
        self.lo[:n] = lo
        self.hi[:n] = hi
        x, lo, hi = self.x[:n], self.lo[:n], self.hi[:n]
        off = ~self.is_basic[:n] & (x != lo) & (x != hi)
        if off.any():
            free = (lo == -math.inf) & (hi == math.inf)
            nearer_lo = (lo > -math.inf) & ((x <= lo) | (hi == math.inf) | (x - lo <= hi - x))
            x[off] = np.where(free, 0.0, np.where(nearer_lo, lo, hi))[off]
        self._recompute_basics()

    # -- status helpers --------------------------------------------------
    def primal_infeasibility(self):
        xb = self.x[self.basis]
        lo = self.lo[self.basis]
        hi = self.hi[self.basis]
        return np.maximum(lo - xb, 0.0) + np.maximum(xb - hi, 0.0)

    def _make_dual_feasible(self):
        """Flip boxed nonbasics to the bound their reduced cost favours.

        Returns False when some unboxed nonbasic has the wrong sign.
        """
        movable = ~self.is_basic & (self.lo < self.hi)
        want_up = movable & (self.d < -OPT_TOL) & (self.x != self.hi)
        want_down = movable & (self.d > OPT_TOL) & (self.x != self.lo)
        ok = not ((want_up & (self.hi == math.inf)).any() or (want_down & (self.lo == -math.inf)).any())
        up = want_up & (self.hi < math.inf)
        down = want_down & (self.lo > -math.inf)
        if up.any() or down.any():
            self.x[up] = self.hi[up]
            self.x[down] = self.lo[down]
            self._recompute_basics()
        return ok

    # -- primal simplex --------------------------------------------------
    def _primal(self, phase1):
        tol = self.feas_tol
        degenerate = 0
        while True:
            if phase1:
                xb = self.x[self.basis]
                cb = np.where(xb < self.lo[self.basis] - tol, -1.0,
                              np.where(xb > self.hi[self.basis] + tol, 1.0, 0.0))
                if not cb.any():
                    self._recompute_duals()
                    return Status.OPTIMAL
                w = cb @ self.Binv
                d = -np.concatenate([self._A_times(w), w])
                d[self.basis] = 0.0
            else:
                d = self.d
            nonbasic = ~self.is_basic
            movable = nonbasic & (self.lo < self.hi)
            up = movable & (self.x < self.hi) & (d < -OPT_TOL)
            down = movable & (self.x > self.lo) & (d > OPT_TOL)
            cand = np.flatnonzero(up | down)
            if not len(cand):
                return Status.INFEASIBLE if phase1 else Status.OPTIMAL
            bland = degenerate >= DEGENERATE_LIMIT
            if bland:
                q = int(cand[0])
            else:
                q = int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if up[q] else -1.0
            alpha = self._column(q)
            rate = -direction * alpha  # change of basic values per unit step
            xb = self.x[self.basis]
            lo_b = self.lo[self.basis]
            hi_b = self.hi[self.basis]
            limit = np.full(self.m, math.inf)
            target = np.where(rate < 0, lo_b, hi_b)
            dec = rate < -PIVOT_TOL
            inc = rate > PIVOT_TOL
            if phase1:
                # infeasible basics become feasible at their violated bound
                above = xb > hi_b + tol
                below = xb < lo_b - tol
                target = np.where(dec & above, hi_b, target)
                target = np.where(inc & below, lo_b, target)
                dec &= ~below
                inc &= ~above
            limit[dec] = (xb[dec] - target[dec]) / -rate[dec]
            limit[inc] = (target[inc] - xb[inc]) / rate[inc]
            limit = np.maximum(limit, 0.0)
            flip = self.hi[q] - self.lo[q]
            theta = limit.min() if self.m else math.inf
            if flip == math.inf and theta == math.inf:
                return Status.UNBOUNDED
            if flip <= theta:
                theta = flip
                r = -1
            else:
                close = np.flatnonzero(limit <= theta + 1e-12)
                if bland:
                    r = int(close[np.argmin(self.basis[close])])
                else:
                    r = int(close[np.argmax(np.abs(alpha[close]))])
                theta = limit[r]
            degenerate = degenerate + 1 if theta <= 1e-12 else 0
            self.x[q] += direction * theta
            self.x[self.basis] += rate * theta
            if r >= 0:
                self.x[self.basis[r]] = target[r]
                self._pivot(r, q, alpha)
                if not phase1:
                    self._recompute_duals()
            self._tick()

    # -- dual simplex ----------------------------------------------------
    def _dual(self):
        """Dual simplex on slightly perturbed costs; true duals on return.

        Models whose objective touches few variables are almost completely
        dual degenerate, and the dual simplex then stalls on zero steps.
        Nonbasic costs are nudged away from zero in the direction that keeps
        the basis dual feasible; the caller's primal pass removes any
        leftover effect of the perturbation.
        """
        nonbasic = ~self.is_basic & (self.lo < self.hi)
        at_lo = nonbasic & (self.x <= self.lo)
        at_hi = nonbasic & (self.x >= self.hi) & ~at_lo
        size = PERTURB * (1.0 + np.abs(self.cost)) * self._rng.uniform(0.5, 1.0, self.ntot)
        delta = np.where(at_lo, size, np.where(at_hi, -size, 0.0))
        self._work_cost = self.cost + delta
        self.d = self.d + delta
        try:
            return self._dual_loop()
        finally:
            self._work_cost = self.cost
            self._recompute_duals()

    def _dual_loop(self):
        tol = self.feas_tol
        span = self.hi - self.lo
        while True:
            if not self.m:
                return Status.OPTIMAL
            xb = self.x[self.basis]
            lo_b = self.lo[self.basis]
            hi_b = self.hi[self.basis]
            viol = np.maximum(lo_b - xb, 0.0) + np.maximum(xb - hi_b, 0.0)
            if viol.max() <= tol:
                return Status.OPTIMAL
            # steepest edge: scale by the norm of the row of B^-1, computed
            # exactly but only for the infeasible rows
            rows = np.flatnonzero(viol > tol)
            sub = self.Binv[rows]
            score = viol[rows] ** 2 / np.einsum("ij,ij->i", sub, sub)
            r = int(rows[np.argmax(score)])
            increase = xb[r] < lo_b[r]
            row = self._row(r)
            nonbasic = ~self.is_basic & (self.lo < self.hi)
            at_lo = self.x <= self.lo
            at_hi = self.x >= self.hi
            free = nonbasic & ~at_lo & ~at_hi
            # basic value changes by -row[j] * step_j; step_j > 0 when x_j increases
            if increase:
                elig_up = nonbasic & ~at_hi & (row < -PIVOT_TOL)
                elig_down = nonbasic & ~at_lo & (row > PIVOT_TOL)
            else:
                elig_up = nonbasic & ~at_hi & (row > PIVOT_TOL)
                elig_down = nonbasic & ~at_lo & (row < -PIVOT_TOL)
            # free variables may move either way; at-bound ones only inward
            elig_up &= at_lo | free
            elig_down &= at_hi | free
            cand = np.flatnonzero(elig_up | elig_down)
            if not len(cand):
                return Status.INFEASIBLE
            ratios = np.abs(self.d[cand]) / np.abs(row[cand])
            order = np.argsort(ratios, kind="stable")
            # bound flipping: pass breakpoints while the row stays infeasible
            drops = np.abs(row[cand[order]]) * span[cand[order]]
            slope = viol[r] - np.cumsum(drops)
            stop = np.flatnonzero(slope <= 0.0)
            if len(stop):
                k = int(stop[0])
            elif slope[-1] <= tol:
                k = len(order) - 1  # exactly enough room, up to rounding
            else:
                return Status.INFEASIBLE
            ties = order[k:][ratios[order[k:]] <= ratios[order[k]] + 1e-12]
            q = int(cand[ties[np.argmax(np.abs(row[cand[ties]]))]])
            flips = cand[order[:k]]
            if len(flips):
                delta = np.where(elig_up[flips], span[flips], -span[flips])
                self.x[flips] += delta
                s = flips < self.n
                shift = self.A[:, flips[s]] @ delta[s]
                shift[flips[~s] - self.n] += delta[~s]
                self.x[self.basis] -= self.Binv @ shift
            direction = 1.0 if elig_up[q] else -1.0
            target = lo_b[r] if increase else hi_b[r]
            alpha = self._column(q)
            step = (target - self.x[self.basis[r]]) / (-alpha[r] * direction)
            self.x[q] += direction * step
            self.x[self.basis] -= alpha * direction * step
            leaving = self.basis[r]
            self.x[leaving] = target
            ratio = self.d[q] / alpha[r]
            self.d -= ratio * row
            self.d[q] = 0.0
            self.d[leaving] = -ratio
            self._pivot(r, q, alpha)
            self._tick()

    # -- drivers ---------------------------------------------------------
    def solve_primal(self):
        for _ in range(3):
            try:
                status = self._primal(phase1=True)
                if status != Status.OPTIMAL:
                    return Status.INFEASIBLE
                return self._primal(phase1=False)
            except _BasisReset:
                self._reset = False
        raise SolverError("numerical", "repeated singular bases")

    def solve_warm(self):
        """Re-optimise after bound changes, preferring the dual simplex."""
        if self._reset:
            self._reset = False
            return self.finish(self.solve_primal())
        try:
            if self._make_dual_feasible():
                status = self._dual()
                if status == Status.INFEASIBLE:
                    return status
                status = self._primal(phase1=False)
            else:
                status = self.solve_primal()
        except _BasisReset:
            self._reset = False
            status = self.solve_primal()
        return self.finish(status)

    def finish(self, status):
        """Recompute values from scratch and repair drift if anything is off."""
        if status != Status.OPTIMAL:
            return status
        self._recompute_basics()
        for _ in range(3):
            if (self.primal_infeasibility().max(initial=0.0) <= self.feas_tol
                    and not (~self.is_basic & self._dual_wrong()).any()):
                return Status.OPTIMAL
            self.refactor()
            self._reset = False
            try:
                if self._make_dual_feasible():
                    status = self._dual()
                    if status == Status.OPTIMAL:
                        status = self._primal(phase1=False)
                else:
                    status = self.solve_primal()
            except _BasisReset:
                self._reset = False
                status = self.solve_primal()
            if status != Status.OPTIMAL:
                return status
            self._recompute_basics()
        return status

    def _dual_wrong(self):
        """Nonbasic variables whose reduced cost says they should move."""
        movable = self.lo < self.hi
        return movable & (((self.d < -1e-7) & (self.x < self.hi)) | ((self.d > 1e-7) & (self.x > self.lo)))

    def objective(self):
        return float(self.cost @ self.x)

    def duals(self):
        """Row multipliers ``y`` with ``d = c - y A`` (minimisation form)."""
        return -self.d[self.n:].copy()


def too_large(model: LpModel) -> bool:
    """True when the dense matrices of the engine would not fit the memory cap."""
    m, n = model.num_constraints, model.num_vars
    return 8 * (m * (m + n) + m * m) > MAX_DENSE_BYTES


def _engine_for(model: LpModel, feas_tol, max_iter, deadline):
    A, b, c = model.dense()
    sign = -1.0 if model.obj_sense == "max" else 1.0
    return SimplexEngine(A, b, sign * c, model.lb, model.ub, model.senses,
                         feas_tol=feas_tol, max_iter=max_iter, deadline=deadline), sign


def solve_lp(model: LpModel, feas_tol: float = FEAS_TOL, max_iter: int = 10**6,
             time_limit: float | None = None) -> LpSolution:
    """Continuous relaxation of ``model`` (integrality flags ignored)."""
    if too_large(model):
        return LpSolution(Status.CAP_EXCEEDED, var_names=model.var_names)
    deadline = None if time_limit is None else time.monotonic() + time_limit
    eng, sign = _engine_for(model, feas_tol, max_iter, deadline)
    try:
        status = eng.finish(eng.solve_primal())
    except IterationCap:
        return LpSolution(Status.CAP_EXCEEDED, iterations=eng.iterations, var_names=model.var_names)
    except Deadline:
        return LpSolution(Status.TIME_LIMIT, iterations=eng.iterations, var_names=model.var_names)
    if status != Status.OPTIMAL:
        return LpSolution(status, iterations=eng.iterations, var_names=model.var_names)
    x = eng.x[:eng.n].copy()
    return LpSolution(Status.OPTIMAL, x=x, objective=model.evaluate(x),
                      duals=sign * eng.duals(), reduced_costs=sign * eng.d[:eng.n].copy(),
                      iterations=eng.iterations, var_names=model.var_names)


def dual_objective(model: LpModel, sol: LpSolution) -> float:
    """``b.y`` plus the bound terms of the reduced costs, in the model's sense."""
    x = sol.x
    total = math.fsum(y * r for y, r in zip(sol.duals, model.rhs))
    total += math.fsum(float(dj) * float(xj) for dj, xj in zip(sol.reduced_costs, x))
    return total + model.obj_constant
