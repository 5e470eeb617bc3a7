"""Bounded-variable revised primal simplex.

Every row ``i`` gets a logical column ``e_i`` with value ``r_i = b_i - a_i x``;
its bounds encode the row sense (``<=``: r >= 0, ``>=``: r <= 0, ``=``: r = 0).
The all-logical basis is the starting point, so no artificial variables are
needed. Phase 1 minimises the sum of bound infeasibilities of basic variables
(composite cost, re-evaluated every iteration); phase 2 minimises the true
objective. The basis inverse is a fresh LU factor times a product-form eta file,
rebuilt every ``refactor_every`` pivots.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .model import INFEASIBLE, LE, GE, OPTIMAL, UNBOUNDED

log = logging.getLogger(__name__)

AT_LOWER, AT_UPPER, BASIC = 0, 1, 3
DENSE_LIMIT = 300


class LpStallError(RuntimeError):
    """The iteration cap was reached without proving optimality."""


class _Factor:
    def __init__(self, B: sp.csc_matrix):
        m = B.shape[0]
        self.m = m
        self.etas: list[tuple[int, np.ndarray]] = []
        if m <= DENSE_LIMIT:
            dense = B.toarray()
            with warnings.catch_warnings():
                warnings.simplefilter("error", sla.LinAlgWarning)
                try:
                    self.lu = sla.lu_factor(dense, check_finite=False)
                except sla.LinAlgWarning as exc:
                    raise np.linalg.LinAlgError("singular basis") from exc
            if np.any(np.abs(np.diag(self.lu[0])) < 1e-13):
                raise np.linalg.LinAlgError("singular basis")
            self.dense = True
        else:
            self.lu = splu(B.tocsc(), permc_spec="COLAMD")
            self.dense = False

    def _solve(self, v: np.ndarray, trans: bool) -> np.ndarray:
        if self.dense:
            return sla.lu_solve(self.lu, v, trans=1 if trans else 0, check_finite=False)
        return self.lu.solve(v, trans="T" if trans else "N")

    def ftran(self, a: np.ndarray) -> np.ndarray:
        v = self._solve(a, False)
        for r, alpha in self.etas:
            vr = v[r] / alpha[r]
            if vr != 0.0:
                v -= alpha * vr
            v[r] = vr
        return v

    def btran(self, c: np.ndarray) -> np.ndarray:
        w = np.array(c, dtype=float)
        for r, alpha in reversed(self.etas):
            wr = w[r]
            w[r] = (wr - (w @ alpha - wr * alpha[r])) / alpha[r]
        return self._solve(w, True)

    def update(self, r: int, alpha: np.ndarray) -> None:
        self.etas.append((r, alpha.copy()))


@dataclass
class LpOutcome:
    status: str
    x: np.ndarray | None
    objective: float
    iterations: int


class BoundedSimplex:
    """Reusable LP solver; bounds on structural columns may be changed between
    solves while keeping the current basis (warm start)."""

    def __init__(self, A: sp.spmatrix, sense, rhs, c, lb, ub, *,
                 feas_tol: float = 1e-7, opt_tol: float = 1e-9,
                 pivot_tol: float = 1e-9, refactor_every: int = 50,
                 bland_after: int = 50, max_iter: int | None = None):
        A = sp.csc_matrix(A, dtype=float)
        m, n = A.shape
        self.m, self.n = m, n
        self.A = A
        self.AT = A.T.tocsr()
        self.b = np.asarray(rhs, dtype=float)
        self.c = np.concatenate([np.asarray(c, dtype=float), np.zeros(m)])
        l_log = np.zeros(m)
        u_log = np.zeros(m)
        for i, s in enumerate(sense):
            if s == LE:
                u_log[i] = math.inf
            elif s == GE:
                l_log[i] = -math.inf
        self.l = np.concatenate([np.asarray(lb, dtype=float), l_log])
        self.u = np.concatenate([np.asarray(ub, dtype=float), u_log])
        if np.any(np.isinf(self.l[:n]) & (self.l[:n] < 0)):
            raise ValueError("structural lower bounds must be finite")
        self.feas_tol = feas_tol
        self.opt_tol = opt_tol
        self.pivot_tol = pivot_tol
        self.refactor_every = refactor_every
        self.bland_after = bland_after
        self.max_iter = max_iter if max_iter is not None else max(20000, 60 * (m + n))
        self.head = np.arange(n, n + m)
        self.status = np.full(n + m, AT_LOWER, dtype=np.int8)
        self.status[self.head] = BASIC
        self.x = np.zeros(n + m)
        self._factor: _Factor | None = None
        self._since_refactor = 0
        self.total_iterations = 0
        self._place_nonbasic()

    # -- basis bookkeeping -----------------------------------------------------
    def _place_nonbasic(self) -> None:
        nb = self.status != BASIC
        at_up = nb & (self.status == AT_UPPER)
        bad_up = at_up & np.isinf(self.u)
        self.status[bad_up] = AT_LOWER
        bad_low = nb & (self.status == AT_LOWER) & np.isinf(self.l)
        self.status[bad_low] = AT_UPPER
        lo = nb & (self.status == AT_LOWER)
        up = nb & (self.status == AT_UPPER)
        self.x[lo] = self.l[lo]
        self.x[up] = self.u[up]

    def _basis_matrix(self) -> sp.csc_matrix:
        n, m = self.n, self.m
        indptr = [0]
        indices = []
        data = []
        Aptr, Aind, Adat = self.A.indptr, self.A.indices, self.A.data
        for j in self.head:
            if j < n:
                s, e = Aptr[j], Aptr[j + 1]
                indices.extend(Aind[s:e])
                data.extend(Adat[s:e])
            else:
                indices.append(j - n)
                data.append(1.0)
            indptr.append(len(indices))
        return sp.csc_matrix((data, indices, indptr), shape=(m, m))

    def _refactor(self) -> None:
        self._factor = _Factor(self._basis_matrix())
        self._since_refactor = 0
        xn = np.where(self.status == BASIC, 0.0, self.x)
        resid = self.b - self.A @ xn[: self.n] - xn[self.n:]
        self.x[self.head] = self._factor.ftran(resid)

    def _column(self, j: int) -> np.ndarray:
        col = np.zeros(self.m)
        if j < self.n:
            s, e = self.A.indptr[j], self.A.indptr[j + 1]
            col[self.A.indices[s:e]] = self.A.data[s:e]
        else:
            col[j - self.n] = 1.0
        return col

    def set_bounds(self, lb: np.ndarray, ub: np.ndarray) -> None:
        self.l[: self.n] = lb
        self.u[: self.n] = ub
        self._place_nonbasic()
        self._factor = None

    def get_basis(self) -> tuple[np.ndarray, np.ndarray]:
        return self.head.astype(np.int32), self.status.copy()

    def set_basis(self, basis: tuple[np.ndarray, np.ndarray]) -> None:
        head, status = basis
        self.head = np.asarray(head, dtype=np.int64).copy()
        self.status = np.asarray(status, dtype=np.int8).copy()
        self._place_nonbasic()
        self._factor = None

    def reset_basis(self) -> None:
        self.head = np.arange(self.n, self.n + self.m)
        self.status[:] = AT_LOWER
        self.status[self.head] = BASIC
        self._place_nonbasic()
        self._factor = None

    # -- main loop -----------------------------------------------------------------
    def solve(self) -> LpOutcome:
        n, m = self.n, self.m
        if m == 0:
            return self._solve_unconstrained()
        try:
            self._refactor()
        except (np.linalg.LinAlgError, RuntimeError):
            log.debug("warm basis singular, restarting from slack basis")
            self.reset_basis()
            self._refactor()
        ftol, dtol = self.feas_tol, self.opt_tol
        degenerate_streak = 0
        iters = 0
        while True:
            if self._since_refactor >= self.refactor_every:
                self._refactor()
            head = self.head
            xB = self.x[head]
            lB = self.l[head]
            uB = self.u[head]
            below = xB < lB - ftol
            above = xB > uB + ftol
            phase1 = bool(below.any() or above.any())
            if phase1:
                cB = np.where(below, -1.0, np.where(above, 1.0, 0.0))
                y = self._factor.btran(cB)
                d = np.concatenate([-(self.AT @ y), -y])
            else:
                y = self._factor.btran(self.c[head])
                d = self.c - np.concatenate([self.AT @ y, y])
            st = self.status
            movable = self.u > self.l
            elig = ((st == AT_LOWER) & (d < -dtol) & movable) | ((st == AT_UPPER) & (d > dtol) & movable)
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                if self._since_refactor > 0:
                    # confirm with a fresh factor before declaring termination
                    self._refactor()
                    continue
                if phase1:
                    return LpOutcome(INFEASIBLE, None, math.inf, iters)
                return LpOutcome(OPTIMAL, self.x[:n].copy(), float(self.c[:n] @ self.x[:n]), iters)

            iters += 1
            self.total_iterations += 1
            if iters > self.max_iter:
                raise LpStallError(
                    f"simplex stalled after {iters - 1} iterations "
                    f"(phase {1 if phase1 else 2}, m={m}, n={n}, "
                    f"degenerate streak {degenerate_streak})")
            bland = degenerate_streak >= self.bland_after
            if bland:
                q = int(cand[0])
            else:
                q = int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if d[q] < 0 else -1.0
            alpha = self._factor.ftran(self._column(q))
            delta = -direction * alpha
            r, theta, to_upper = self._ratio_test(xB, lB, uB, delta, below, above, bland)
            span = self.u[q] - self.l[q]
            if r < 0 and not math.isfinite(span):
                if phase1:
                    raise LpStallError("unbounded ray in phase 1 (numerical trouble)")
                return LpOutcome(UNBOUNDED, None, -math.inf, iters)
            if r < 0 or span <= theta:
                # bound flip of the entering variable
                theta = span
                self.x[head] = xB + theta * delta
                if direction > 0:
                    self.status[q] = AT_UPPER
                    self.x[q] = self.u[q]
                else:
                    self.status[q] = AT_LOWER
                    self.x[q] = self.l[q]
                degenerate_streak = 0 if theta > 1e-12 else degenerate_streak + 1
                continue
            self.x[head] = xB + theta * delta
            self.x[q] += direction * theta
            leaving = int(head[r])
            if to_upper:
                self.x[leaving] = self.u[leaving]
                self.status[leaving] = AT_UPPER
            else:
                self.x[leaving] = self.l[leaving]
                self.status[leaving] = AT_LOWER
            self.status[q] = BASIC
            self.head[r] = q
            self._factor.update(r, alpha)
            self._since_refactor += 1
            degenerate_streak = 0 if theta > 1e-12 else degenerate_streak + 1

    def _ratio_test(self, xB, lB, uB, delta, below, above, bland):
        """Two-pass Harris ratio test. Returns (row, step, leaves_at_upper);
        row is -1 when no basic variable blocks."""
        ftol, ptol = self.feas_tol, self.pivot_tol
        inc = delta > ptol
        dec = delta < -ptol
        # target bound per row (nan = no block)
        target = np.full(xB.shape, np.nan)
        upper_hit = np.zeros(xB.shape, dtype=bool)
        # increasing rows
        m1 = inc & below
        target[m1] = lB[m1]
        m2 = inc & ~below & ~above & np.isfinite(uB)
        target[m2] = uB[m2]
        upper_hit[m2] = True
        # decreasing rows
        m3 = dec & above
        target[m3] = uB[m3]
        upper_hit[m3] = True
        m4 = dec & ~below & ~above & np.isfinite(lB)
        target[m4] = lB[m4]
        blocking = ~np.isnan(target)
        if not blocking.any():
            return -1, math.inf, False
        idx = np.flatnonzero(blocking)
        dl = delta[idx]
        tgt = target[idx]
        exact = np.maximum((tgt - xB[idx]) / dl, 0.0)
        if bland:
            tmin = exact.min()
            ties = idx[exact <= tmin + 1e-12]
            r = int(ties[np.argmin(self.head[ties])])
            return r, float(max((target[r] - xB[r]) / delta[r], 0.0)), bool(upper_hit[r])
        # relaxed bounds only for rows that are currently feasible
        feasible_row = ~(below[idx] | above[idx])
        relax = np.where(feasible_row, ftol, 0.0) * np.sign(dl)
        relaxed = np.maximum((tgt + relax - xB[idx]) / dl, 0.0)
        theta_max = relaxed.min()
        ok = exact <= theta_max
        cands = idx[ok]
        pick = cands[np.argmax(np.abs(delta[cands]))]
        r = int(pick)
        theta = float(max((target[r] - xB[r]) / delta[r], 0.0))
        return r, theta, bool(upper_hit[r])

    def _solve_unconstrained(self) -> LpOutcome:
        n = self.n
        x = np.empty(n)
        for j in range(n):
            if self.c[j] < 0:
                if not math.isfinite(self.u[j]):
                    return LpOutcome(UNBOUNDED, None, -math.inf, 0)
                x[j] = self.u[j]
            else:
                x[j] = self.l[j]
        if np.any(self.l[:n] > self.u[:n]):
            return LpOutcome(INFEASIBLE, None, math.inf, 0)
        self.x[:n] = x
        return LpOutcome(OPTIMAL, x, float(self.c[:n] @ x), 0)


def simplex_for(model, **options) -> BoundedSimplex:
    A, sense, rhs, c, lb, ub = model.arrays()
    return BoundedSimplex(A, sense, rhs, c, lb, ub, **options)
