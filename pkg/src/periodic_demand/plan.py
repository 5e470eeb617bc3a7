"""Tactical block-planning models and the sequential design/weekly-flow solve.

Platform counts are modelled with integer variables ``v40``/``v53`` and the
covering inequalities

    2*v53 >= sum of C53 flow - sum of C40 flow
    2*(v40 + v53) >= total flow

Because the capacity rows are the only other place these variables appear, a
solution may carry spare platforms when capacity is slack. A tiny tie-break
cost per platform foot makes the solver return the fewest feet, which is the
unique pair ``v53 = max(0, ceil((n53 - n40)/2))``, ``v40 = ceil(n/2) - v53``.
The tie-break is kept far below the smallest real cost coefficient and is
never part of reported costs.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import C53, DemandMatrix, Instance, ValidationError
from .milp import BINARY, CONTINUOUS, GE, EQ, INTEGER, LE, OPTIMAL, MilpModel, MilpSolution, solve_milp

log = logging.getLogger(__name__)

TIE_BREAK_SHARE = 1e-3  # of the smallest positive cost coefficient


class SolverLimitError(RuntimeError):
    """A component solve stopped without any feasible solution."""


def minimal_platforms(n40: int, n53: int) -> tuple[int, int]:
    """Fewest-feet platform pair ``(v40, v53)`` for a block's container counts."""
    v53 = max(0, -(-(n53 - n40) // 2))
    v40 = -(-(n40 + n53) // 2) - v53
    return v40, v53


def _demand_vector(y, K: int) -> np.ndarray:
    vals = getattr(y, "values", y)
    arr = np.asarray(vals)
    if arr.shape != (K,):
        raise ValidationError(f"demand vector has shape {arr.shape}, expected ({K},)")
    if np.any(arr < 0) or np.any(arr != np.round(arr)):
        raise ValidationError("demand must be nonnegative integers")
    return arr.astype(np.int64)


@dataclass
class _Layout:
    """Variable indices of a block-planning model."""

    model: MilpModel
    z: dict[int, int] = field(default_factory=dict)
    x: dict[tuple[int, int], int] = field(default_factory=dict)
    v40: dict[int, int] = field(default_factory=dict)
    v53: dict[int, int] = field(default_factory=dict)
    tie_break: float = 0.0


def _min_cost(inst: Instance) -> float:
    costs = [b.design_cost for b in inst.blocks if b.design_cost > 0]
    costs += [c for b in inst.blocks for c in b.flow_cost.values() if c > 0]
    return min(costs) if costs else 1.0


def _block_flows(inst: Instance, y: np.ndarray, lay: _Layout, blocks, linking: bool):
    """Flow, platform, demand and capacity rows shared by BP and wBP."""
    m = lay.model
    K = inst.K
    for b in blocks:
        blk = inst.blocks[b]
        for k in sorted(blk.admissible_commodities):
            if y[k] == 0:
                continue
            kind = INTEGER
            lay.x[(b, k)] = m.add_var(f"x[{b},{k}]", 0, float(y[k]), kind, blk.flow_cost[k])
            if linking and not blk.artificial:
                m.add_constr({lay.x[(b, k)]: 1.0, lay.z[b]: -float(y[k])}, LE, 0.0,
                             f"link[{b},{k}]")
    for k in range(K):
        if y[k] == 0:
            continue
        row = {lay.x[(b, k)]: 1.0 for b in inst.blocks_for[k] if (b, k) in lay.x}
        m.add_constr(row, EQ, float(y[k]), f"demand[{k}]")

    total = int(y.sum())
    vmax = 1.5 * total + 1
    lay.tie_break = TIE_BREAK_SHARE * _min_cost(inst) / (inst.L53 * vmax)
    for b in blocks:
        blk = inst.blocks[b]
        if blk.artificial:
            continue
        ks = [k for k in sorted(blk.admissible_commodities) if (b, k) in lay.x]
        if not ks:
            continue
        cap = sum(int(y[k]) for k in ks)
        ub = float(-(-cap // 2))
        lay.v40[b] = m.add_var(f"v40[{b}]", 0, ub, INTEGER, lay.tie_break * inst.L40)
        c53 = [k for k in ks if inst.is_c53(k)]
        if c53:
            lay.v53[b] = m.add_var(f"v53[{b}]", 0, ub, INTEGER, lay.tie_break * inst.L53)
            row = {lay.v53[b]: 2.0}
            for k in ks:
                row[lay.x[(b, k)]] = -1.0 if inst.is_c53(k) else 1.0
            m.add_constr(row, GE, 0.0, f"plat53[{b}]")
        row = {lay.v40[b]: 2.0}
        if b in lay.v53:
            row[lay.v53[b]] = 2.0
        for k in ks:
            row[lay.x[(b, k)]] = -1.0
        m.add_constr(row, GE, 0.0, f"plat[{b}]")
    for a, bs in inst.blocks_on_arc.items():
        row = {}
        for b in bs:
            if b in lay.v40:
                row[lay.v40[b]] = inst.L40
            if b in lay.v53:
                row[lay.v53[b]] = inst.L53
        if row:
            m.add_constr(row, LE, float(inst.graph.arcs[a].capacity_feet), f"cap[{a}]")


def build_bp_layout(inst: Instance, y_p) -> _Layout:
    y = _demand_vector(y_p, inst.K)
    lay = _Layout(MilpModel("BP"))
    real = [b.id for b in inst.blocks if not b.artificial]
    for b in real:
        lay.z[b] = lay.model.add_var(f"z[{b}]", 0, 1, BINARY, inst.blocks[b].design_cost)
    _block_flows(inst, y, lay, range(len(inst.blocks)), linking=True)
    return lay


def build_bp(inst: Instance, y_p) -> MilpModel:
    """Block-planning MILP for one periodic demand vector."""
    return build_bp_layout(inst, y_p).model


def build_wbp_layout(inst: Instance, z_fixed, y_week) -> _Layout:
    y = _demand_vector(y_week, inst.K)
    z = np.asarray(z_fixed)
    if z.shape != (len(inst.blocks),) or np.any((z != 0) & (z != 1)):
        raise ValidationError("design must be a 0/1 vector with one entry per block")
    lay = _Layout(MilpModel("wBP"))
    usable = [b.id for b in inst.blocks if b.artificial or z[b.id] == 1]
    _block_flows(inst, y, lay, usable, linking=False)
    return lay


def build_wbp(inst: Instance, z_fixed, y_week) -> MilpModel:
    """One week's flow model with the design held fixed."""
    return build_wbp_layout(inst, z_fixed, y_week).model


def build_mcnd(inst: Instance, y_p, integer_flows: bool = False) -> MilpModel:
    """Path-based fixed-charge network design with aggregate path capacities.

    Real blocks act as capacitated paths (``Block.capacity``; the admissible
    demand total when unset), artificial blocks as uncapacitated outsourcing.
    """
    y = _demand_vector(y_p, inst.K)
    m = MilpModel("MCND")
    kind = INTEGER if integer_flows else CONTINUOUS
    x = {}
    for blk in inst.blocks:
        z = None
        if not blk.artificial:
            z = m.add_var(f"z[{blk.id}]", 0, 1, BINARY, blk.design_cost)
        row = {}
        for k in sorted(blk.admissible_commodities):
            x[(blk.id, k)] = m.add_var(f"x[{blk.id},{k}]", 0, math.inf, kind, blk.flow_cost[k])
            row[x[(blk.id, k)]] = 1.0
        if z is not None:
            cap = blk.capacity if blk.capacity is not None else float(
                sum(y[k] for k in blk.admissible_commodities))
            row[z] = -float(cap)
            m.add_constr(row, LE, 0.0, f"cap[{blk.id}]")
    for k in range(inst.K):
        row = {x[(b, k)]: 1.0 for b in inst.blocks_for[k]}
        if not row:
            raise ValidationError(f"commodity {k} has no admissible path")
        m.add_constr(row, EQ, float(y[k]), f"demand[{k}]")
    return m


# ---------------------------------------------------------------------------
# solutions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolveStats:
    status: str
    objective: float
    bound: float
    nodes: int
    gap: float

    @property
    def proven(self) -> bool:
        return self.status == OPTIMAL

    @classmethod
    def of(cls, sol: MilpSolution) -> "SolveStats":
        return cls(sol.status, sol.objective, sol.bound, sol.nodes_explored, sol.gap)


@dataclass(frozen=True)
class CostBreakdown:
    design: float
    flow: float
    out: float

    @property
    def total(self) -> float:
        return self.design + self.flow + self.out

    def as_dict(self) -> dict:
        return {"design": self.design, "flow": self.flow, "out": self.out, "total": self.total}


@dataclass(frozen=True)
class WeekFlows:
    flows: dict[tuple[int, int], int]
    platforms: dict[int, tuple[int, int]]


@dataclass(frozen=True)
class BpResult:
    """Optimal design for one demand vector plus that vector's own flows."""

    design: tuple[int, ...]
    week: WeekFlows
    costs: CostBreakdown
    stats: SolveStats


@dataclass(frozen=True)
class TacticalPlan:
    design: tuple[int, ...]
    weekly: tuple[WeekFlows, ...]
    costs: CostBreakdown
    bp: SolveStats
    week_stats: tuple[SolveStats, ...]
    periodic_demand: tuple[int, ...]

    @property
    def T(self) -> int:
        return len(self.weekly)

    @property
    def proven(self) -> bool:
        return self.bp.proven and all(s.proven for s in self.week_stats)


def _extract(inst: Instance, lay: _Layout, sol: MilpSolution) -> WeekFlows:
    vals = sol.values
    flows = {}
    for (b, k), j in lay.x.items():
        v = int(round(vals[lay.model.var_names[j]]))
        if v:
            flows[(b, k)] = v
    platforms = {}
    for b, j in lay.v40.items():
        v40 = int(round(vals[lay.model.var_names[j]]))
        v53 = int(round(vals[lay.model.var_names[lay.v53[b]]])) if b in lay.v53 else 0
        if v40 or v53:
            platforms[b] = (v40, v53)
    return WeekFlows(flows, platforms)


def flow_costs(inst: Instance, week: WeekFlows) -> tuple[float, float]:
    """(flow cost, outsourcing cost) of one week's flows."""
    flow = out = 0.0
    for (b, k), v in week.flows.items():
        c = inst.blocks[b].flow_cost[k] * v
        if inst.blocks[b].artificial:
            out += c
        else:
            flow += c
    return flow, out


def design_cost(inst: Instance, design: Sequence[int]) -> float:
    return float(sum(inst.blocks[b].design_cost for b, z in enumerate(design) if z))


def _round_and_repair(inst: Instance, lay: _Layout, y: np.ndarray, x_lp) -> np.ndarray:
    """Feasible integer point from an LP solution.

    Floors the LP flows on blocks the LP opened, sheds units from blocks on
    over-full trains, closes blocks whose savings do not cover their design
    cost, refills spare platform space on open blocks and sends what is left
    to the artificial blocks.
    """
    names = lay.model.var_names
    x_lp = np.asarray(x_lp, dtype=float)
    blocks = inst.blocks
    if lay.z:
        open_ = {b for b, j in lay.z.items() if x_lp[j] > 1e-6}
    else:
        open_ = {b for b in lay.v40}
    flows: dict[tuple[int, int], int] = {}
    for (b, k), j in lay.x.items():
        if not blocks[b].artificial and b in open_:
            v = int(math.floor(x_lp[j] + 1e-6))
            if v > 0:
                flows[(b, k)] = v
    by_block: dict[int, dict[int, int]] = {}
    for (b, k), v in flows.items():
        by_block.setdefault(b, {})[k] = v

    def feet(b):
        n40 = n53 = 0
        for k, v in by_block.get(b, {}).items():
            if inst.is_c53(k):
                n53 += v
            else:
                n40 += v
        v40, v53 = minimal_platforms(n40, n53)
        return inst.L40 * v40 + inst.L53 * v53

    out_cost = {k: blocks[inst.artificial_blocks_for[k][0]].flow_cost[k] for k in range(inst.K)}
    caps = {a: inst.graph.arcs[a].capacity_feet for a in inst.blocks_on_arc}
    used = {a: 0.0 for a in caps}
    block_feet = {}
    for b in by_block:
        block_feet[b] = feet(b)
        for a in inst.train_arcs_of[b]:
            used[a] += block_feet[b]

    def change(b, k, delta):
        cur = by_block.setdefault(b, {})
        cur[k] = cur.get(k, 0) + delta
        if cur[k] == 0:
            del cur[k]
        new = feet(b)
        for a in inst.train_arcs_of[b]:
            used[a] += new - block_feet.get(b, 0.0)
        block_feet[b] = new

    # shed units from over-full trains, cheapest loss first
    for a in sorted(caps):
        while used[a] > caps[a] + 1e-9:
            best = None
            for b in inst.blocks_on_arc[a]:
                for k, v in by_block.get(b, {}).items():
                    loss = out_cost[k] - blocks[b].flow_cost[k]
                    if best is None or (loss, b, k) < best:
                        best = (loss, b, k)
            change(best[1], best[2], -1)

    def fits(b, k):
        before = block_feet.get(b, 0.0)
        cur = by_block.setdefault(b, {})
        cur[k] = cur.get(k, 0) + 1
        after = feet(b)
        cur[k] -= 1
        if cur[k] == 0:
            del cur[k]
        return all(used[a] + after - before <= caps[a] + 1e-9 for a in inst.train_arcs_of[b])

    def refill(candidates):
        served = {k: 0 for k in range(inst.K)}
        for cur in by_block.values():
            for k, v in cur.items():
                served[k] += v
        for k in range(inst.K):
            if served[k] >= y[k]:
                continue
            opts = sorted((blocks[b].flow_cost[k], b) for b in inst.blocks_for[k]
                          if b in candidates and (b, k) in lay.x)
            for cost, b in opts:
                if cost >= out_cost[k]:
                    break
                while served[k] < y[k] and fits(b, k):
                    change(b, k, 1)
                    served[k] += 1

    refill(open_)
    if lay.z:
        # close blocks that cost more than they save
        for b in sorted(by_block):
            saving = sum((out_cost[k] - blocks[b].flow_cost[k]) * v for k, v in by_block[b].items())
            if by_block[b] and saving < blocks[b].design_cost:
                for k, v in list(by_block[b].items()):
                    change(b, k, -v)
        open_ = {b for b, cur in by_block.items() if cur}
        refill(open_)

    x = np.zeros(lay.model.num_vars)
    served = np.zeros(inst.K, dtype=np.int64)
    for b, cur in by_block.items():
        if not cur:
            continue
        if b in lay.z:
            x[lay.z[b]] = 1.0
        n40 = n53 = 0
        for k, v in cur.items():
            x[lay.x[(b, k)]] = v
            served[k] += v
            if inst.is_c53(k):
                n53 += v
            else:
                n40 += v
        v40, v53 = minimal_platforms(n40, n53)
        x[lay.v40[b]] = v40
        if v53:
            x[lay.v53[b]] = v53
    for k in range(inst.K):
        rest = int(y[k] - served[k])
        if rest:
            x[lay.x[(inst.artificial_blocks_for[k][0], k)]] = rest
    return x


def _solve(inst: Instance, lay: _Layout, y: np.ndarray, milp_options: dict | None,
           what: str) -> MilpSolution:
    options = dict(milp_options or {})
    options.setdefault("heuristic", lambda x_lp: _round_and_repair(inst, lay, y, x_lp))
    model = lay.model
    if "priority" not in options:
        # design decisions first; flows and platforms follow from them
        prio = np.zeros(model.num_vars)
        prio[list(lay.z.values())] = 1.0
        options["priority"] = prio
    sol = solve_milp(model, **options)
    if not sol.has_solution:
        if sol.status == "infeasible":
            raise ValidationError(f"{what} is infeasible; does every commodity have an artificial block?")
        raise SolverLimitError(f"{what}: no feasible solution found ({sol.status}; {', '.join(sol.notes)})")
    if not sol.proven:
        log.warning("%s stopped with gap %.3g (%s)", what, sol.gap, "; ".join(sol.notes))
    return sol


def solve_bp(inst: Instance, y_p, milp_options: dict | None = None) -> BpResult:
    y = _demand_vector(y_p, inst.K)
    lay = build_bp_layout(inst, y)
    sol = _solve(inst, lay, y, milp_options, "BP")
    design = tuple(int(round(sol.values[lay.model.var_names[lay.z[b.id]]])) if b.id in lay.z else 0
                   for b in inst.blocks)
    week = _extract(inst, lay, sol)
    flow, out = flow_costs(inst, week)
    return BpResult(design, week, CostBreakdown(design_cost(inst, design), flow, out),
                    SolveStats.of(sol))


def solve_wbp(inst: Instance, design, y_week, milp_options: dict | None = None):
    y = _demand_vector(y_week, inst.K)
    lay = build_wbp_layout(inst, design, y)
    sol = _solve(inst, lay, y, milp_options, "wBP")
    return _extract(inst, lay, sol), SolveStats.of(sol)


def solve_bp_wbp(inst: Instance, y_p, Y_eval: DemandMatrix,
                 milp_options: dict | None = None, bp: BpResult | None = None) -> TacticalPlan:
    """Design from the periodic demand, then re-optimize flows week by week.

    The design cost is charged once per evaluated week.
    """
    if Y_eval.commodities != inst.K:
        raise ValidationError(f"evaluation demand has {Y_eval.commodities} commodities, instance {inst.K}")
    y = _demand_vector(y_p, inst.K)
    if bp is None:
        bp = solve_bp(inst, y, milp_options)
    weekly, stats = [], []
    flow = out = 0.0
    for t in range(Y_eval.periods):
        week, st = solve_wbp(inst, bp.design, Y_eval.values[t], milp_options)
        f, o = flow_costs(inst, week)
        flow += f
        out += o
        weekly.append(week)
        stats.append(st)
    costs = CostBreakdown(Y_eval.periods * design_cost(inst, bp.design), flow, out)
    return TacticalPlan(bp.design, tuple(weekly), costs, bp.stats, tuple(stats),
                        tuple(int(v) for v in y))


def cost_decomposition(plan: TacticalPlan) -> tuple[float, float, float, float]:
    c = plan.costs
    return c.design, c.flow, c.out, c.total


def platform_mismatches(inst: Instance, week: WeekFlows) -> list[int]:
    """Blocks with positive flow whose platforms differ from the fewest-feet pair."""
    n40: dict[int, int] = {}
    n53: dict[int, int] = {}
    for (b, k), v in week.flows.items():
        if inst.blocks[b].artificial:
            continue
        if inst.is_c53(k):
            n53[b] = n53.get(b, 0) + v
        else:
            n40[b] = n40.get(b, 0) + v
    bad = []
    for b in sorted(set(n40) | set(n53)):
        if week.platforms.get(b, (0, 0)) != minimal_platforms(n40.get(b, 0), n53.get(b, 0)):
            bad.append(b)
    return bad


def capacity_violations(inst: Instance, week: WeekFlows, tol: float = 1e-6) -> list[int]:
    bad = []
    for a, bs in inst.blocks_on_arc.items():
        feet = sum(inst.L40 * week.platforms.get(b, (0, 0))[0]
                   + inst.L53 * week.platforms.get(b, (0, 0))[1] for b in bs)
        if feet > inst.graph.arcs[a].capacity_feet + tol:
            bad.append(a)
    return bad


# ---------------------------------------------------------------------------
# plan file
# ---------------------------------------------------------------------------

def _stats_dict(s: SolveStats) -> dict:
    gap = s.gap if math.isfinite(s.gap) else None
    return {"status": s.status, "objective": s.objective, "bound": s.bound,
            "nodes": s.nodes, "gap": gap}


def plan_to_dict(plan: TacticalPlan) -> dict:
    return {
        "design": [b for b, z in enumerate(plan.design) if z],
        "num_blocks": len(plan.design),
        "periodic_demand": list(plan.periodic_demand),
        "weeks": [
            {"flows": [[b, k, v] for (b, k), v in sorted(w.flows.items())],
             "platforms": [[b, v40, v53] for b, (v40, v53) in sorted(w.platforms.items())]}
            for w in plan.weekly],
        "costs": plan.costs.as_dict(),
        "solver": {"bp": _stats_dict(plan.bp), "weeks": [_stats_dict(s) for s in plan.week_stats]},
    }


def save_plan(plan: TacticalPlan, path: str | Path) -> None:
    Path(path).write_text(json.dumps(plan_to_dict(plan), indent=1) + "\n", encoding="utf-8")
