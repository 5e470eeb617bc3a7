"""LP and MILP entry points: relaxation solve and best-first branch-and-bound."""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import time

import numpy as np

from .model import GAP_LIMIT, INFEASIBLE, OPTIMAL, UNBOUNDED, MilpModel, MilpSolution
from .simplex import BoundedSimplex

log = logging.getLogger(__name__)


def _solver(model: MilpModel, lp_options: dict | None) -> BoundedSimplex:
    A, sense, rhs, c, lb, ub = model.arrays()
    return BoundedSimplex(A, sense, rhs, c, lb, ub, **(lp_options or {}))


def _values(model: MilpModel, x: np.ndarray) -> dict[str, float]:
    return {name: float(v) for name, v in zip(model.var_names, x)}


def solve_lp(model: MilpModel, **lp_options) -> MilpSolution:
    """Solve the LP relaxation of ``model`` (integrality ignored)."""
    lp = _solver(model, lp_options)
    out = lp.solve()
    if out.status != OPTIMAL:
        obj = math.inf if out.status == INFEASIBLE else -math.inf
        return MilpSolution(out.status, obj, None, obj, 0, out.iterations)
    obj = out.objective + model.constant
    return MilpSolution(OPTIMAL, obj, _values(model, out.x), obj, 0, out.iterations)


def solve_milp(model: MilpModel, gap_limit: float = 0.0, node_limit: int | None = None,
               time_limit: float | None = None, *, abs_tol: float = 1e-9,
               int_tol: float = 1e-6, lp_options: dict | None = None,
               incumbent=None, heuristic=None, heuristic_every: int = 100,
               priority=None) -> MilpSolution:
    """Best-bound branch-and-bound with depth-first plunging.

    Branches on the most fractional integer variable (lowest index on ties) and
    dives into the ``x <= floor`` child first. Terminates with ``optimal`` when
    the incumbent is within ``abs_tol`` of the global bound; with ``gap_limit``
    when the relative gap target, ``node_limit`` or ``time_limit`` stops it
    earlier.

    ``incumbent`` is an optional feasible starting point (array or name map).
    ``heuristic(x_lp)`` may return a candidate integer point built from an LP
    solution; it is tried at the root and every ``heuristic_every`` nodes.
    Candidates that violate the model are ignored.

    ``priority`` (one number per variable) restricts branching to the
    fractional variables of the highest priority present; the most-fractional
    rule applies within that class.
    """
    start = time.monotonic()
    lp = _solver(model, lp_options)
    n = model.num_vars
    int_idx = np.flatnonzero(model.integer_mask())
    prio = None if priority is None else np.asarray(priority, dtype=float)[int_idx]
    root_lb = np.array(model.lb, dtype=float)
    root_ub = np.array(model.ub, dtype=float)
    root_lb[int_idx] = np.ceil(root_lb[int_idx] - int_tol)
    root_ub[int_idx] = np.floor(root_ub[int_idx] + int_tol)
    if np.any(root_lb > root_ub):
        return MilpSolution(INFEASIBLE, math.inf, None, math.inf, 0, 0)

    inc_x: np.ndarray | None = None
    inc_obj = math.inf
    seq = itertools.count()
    heap: list = []
    # node: (parent bound, bound changes, basis or None for "keep current")
    current = (-math.inf, (), None)
    nodes = 0
    limited = False
    notes: list[str] = []

    def offer(cand, where):
        nonlocal inc_x, inc_obj
        if cand is None:
            return
        cand = np.asarray(model.as_array(cand), dtype=float)
        if model.max_violation(cand) > 1e-6:
            log.debug("%s candidate rejected (infeasible)", where)
            return
        obj = float(np.dot(model.obj, cand))
        if obj < inc_obj - abs_tol:
            inc_x, inc_obj = cand.copy(), obj
            log.debug("%s candidate accepted: %.10g", where, obj)

    if incumbent is not None:
        offer(incumbent, "start")

    def bounds_for(changes):
        lo, hi = root_lb.copy(), root_ub.copy()
        for j, a, b in changes:
            lo[j], hi[j] = a, b
        return lo, hi

    def global_bound():
        cands = [inc_obj]
        if heap:
            cands.append(heap[0][0])
        if current is not None:
            cands.append(current[0])
        return min(cands)

    while True:
        if current is None:
            while heap:
                bnd, _, changes, basis = heapq.heappop(heap)
                if bnd < inc_obj - abs_tol:
                    current = (bnd, changes, basis)
                    break
            if current is None:
                break
        if inc_x is not None:
            gb = global_bound()
            if inc_obj - gb <= max(abs_tol, gap_limit * abs(inc_obj)):
                if inc_obj - gb > abs_tol:
                    limited = True
                    notes.append("relative gap limit reached")
                break
        if node_limit is not None and nodes >= node_limit:
            limited = True
            notes.append(f"node limit {node_limit} reached")
            break
        if time_limit is not None and time.monotonic() - start > time_limit:
            limited = True
            notes.append(f"time limit {time_limit}s reached")
            break

        parent_bound, changes, basis = current
        lo, hi = bounds_for(changes)
        lp.set_bounds(lo, hi)
        if basis is not None:
            lp.set_basis(basis)
        out = lp.solve()
        nodes += 1
        if out.status == UNBOUNDED:
            if inc_x is None:
                return MilpSolution(UNBOUNDED, -math.inf, None, -math.inf, nodes,
                                    lp.total_iterations)
            current = None
            continue
        if out.status == INFEASIBLE or out.objective >= inc_obj - abs_tol:
            current = None
            continue
        x = out.x
        if heuristic is not None and (nodes == 1 or nodes % heuristic_every == 0):
            offer(heuristic(x), f"node {nodes} heuristic")
            if out.objective >= inc_obj - abs_tol:
                current = None
                continue
        xi = x[int_idx]
        frac = np.abs(xi - np.round(xi))
        if int_idx.size == 0 or frac.max() <= int_tol:
            x = x.copy()
            x[int_idx] = np.round(xi)
            inc_x = x
            inc_obj = float(np.dot(model.obj, x))
            log.debug("node %d: incumbent %.10g", nodes, inc_obj)
            current = None
            continue
        f = xi - np.floor(xi)
        score = np.minimum(f, 1.0 - f)
        if prio is not None:
            frac_mask = score > int_tol
            top = prio[frac_mask].max()
            score = np.where(frac_mask & (prio == top), score, -1.0)
        k = int(np.argmax(score))
        j = int(int_idx[k])
        v = x[j]
        down = changes + ((j, lo[j], math.floor(v)),)
        up = changes + ((j, math.ceil(v), hi[j]),)
        heapq.heappush(heap, (out.objective, next(seq), up, lp.get_basis()))
        current = (out.objective, down, None)
        if nodes % 500 == 0:
            log.info("B&B nodes=%d open=%d incumbent=%.6g bound=%.6g",
                     nodes, len(heap), inc_obj, global_bound())

    iters = lp.total_iterations
    if inc_x is None:
        if limited:
            return MilpSolution(GAP_LIMIT, math.inf, None, global_bound() + model.constant,
                                nodes, iters, tuple(notes))
        return MilpSolution(INFEASIBLE, math.inf, None, math.inf, nodes, iters)
    obj = inc_obj + model.constant
    if limited:
        bound = min(global_bound(), inc_obj) + model.constant
        return MilpSolution(GAP_LIMIT, obj, _values(model, inc_x), bound, nodes, iters,
                            tuple(notes))
    return MilpSolution(OPTIMAL, obj, _values(model, inc_x), obj, nodes, iters)
