"""Periodic demand estimation: evaluate each candidate periodic demand by
designing for it and re-optimizing flows week by week, then pick the cheapest.

Two evaluation protocols are provided. ``analysis1`` builds candidates from
actual demand and compares them with the reference cost obtained by
re-designing every week. ``analysis2`` builds candidates from forecasts,
selects one on forecast cost, then evaluates that choice on actual demand.
"""

from __future__ import annotations

import json
import logging
import math
from fractions import Fraction
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import forecast as fc
from .core import DemandMatrix, Instance, ValidationError
from .mappings import DEFAULT_TAGS, MEAN, build_candidate_set
from .plan import BpResult, CostBreakdown, TacticalPlan, solve_bp, solve_bp_wbp

log = logging.getLogger(__name__)

REPORT_FORMAT = "periodic-demand-report/1"
COMPONENTS = ("total", "design", "flow", "out")


def gap(value, base) -> float:
    """Percentage difference of ``value`` from ``base`` (NaN if base is 0).

    Exact for Fraction arguments up to the final conversion.
    """
    if base == 0:
        return 0.0 if value == 0 else math.nan
    if isinstance(value, Fraction) or isinstance(base, Fraction):
        return float(100 * (Fraction(value) - Fraction(base)) / Fraction(base))
    return 100.0 * (value - base) / base


class Evaluator:
    """Runs BP and wBP solves, memoizing identical demand vectors."""

    def __init__(self, inst: Instance, milp_options: dict | None = None):
        self.inst = inst
        self.milp_options = milp_options
        self._bp: dict[bytes, BpResult] = {}

    def bp(self, y) -> BpResult:
        key = np.asarray(y, dtype=np.int64).tobytes()
        if key not in self._bp:
            self._bp[key] = solve_bp(self.inst, y, self.milp_options)
        return self._bp[key]

    def plan(self, y_p, Y_eval: DemandMatrix) -> TacticalPlan:
        y = np.asarray(getattr(y_p, "values", y_p), dtype=np.int64)
        return solve_bp_wbp(self.inst, y, Y_eval, self.milp_options, bp=self.bp(y))

    def reference(self, Y: DemandMatrix) -> tuple[CostBreakdown, bool]:
        """Sum over weeks of each week's own optimal design cost."""
        d = f = o = 0.0
        proven = True
        for t in range(Y.periods):
            r = self.bp(Y.values[t])
            d += r.costs.design
            f += r.costs.flow
            o += r.costs.out
            proven &= r.stats.proven
        return CostBreakdown(d, f, o), proven


@dataclass(frozen=True)
class CandidateResult:
    mapping: str
    periodic_demand: tuple[int, ...]
    raw_total: Fraction
    costs: CostBreakdown
    built_blocks: int
    proven: bool
    plan: TacticalPlan | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class PdeResult:
    instance: str
    analysis: str
    candidates: tuple[CandidateResult, ...]
    selected: str
    baseline_name: str
    baseline: CostBreakdown | None
    demand_total: Fraction         # mean total demand per period of the source matrix
    periods: int
    proven: bool
    reference: CostBreakdown | None = None
    evaluation: CandidateResult | None = None   # analysis 2, step 2
    forecast: dict | None = None

    def candidate(self, tag: str) -> CandidateResult:
        for c in self.candidates:
            if c.mapping == tag:
                return c
        raise KeyError(tag)

    @property
    def selected_result(self) -> CandidateResult:
        return self.candidate(self.selected)

    def gaps(self, c: CandidateResult, base: CostBreakdown | None = None) -> dict[str, float]:
        base = base or self.baseline
        if base is None:
            raise ValidationError("result has no baseline")
        mine = c.costs.as_dict()
        ref = base.as_dict()
        return {k: gap(mine[k], ref[k]) for k in COMPONENTS}


def _candidate(ev: Evaluator, cand, Y_eval: DemandMatrix) -> CandidateResult:
    plan = ev.plan(cand, Y_eval)
    raw = cand.raw_total if cand.raw_total is not None else Fraction(cand.total)
    return CandidateResult(cand.mapping_tag, plan.periodic_demand, raw, plan.costs,
                           int(sum(plan.design)), plan.proven, plan)


def _select(cands) -> str:
    best = min(c.costs.total for c in cands)
    # first in candidate order among exact minimizers
    return next(c.mapping for c in cands if c.costs.total == best)


def solve_pde(inst: Instance, Y_source: DemandMatrix, milp_options: dict | None = None,
              tags=DEFAULT_TAGS, evaluator: Evaluator | None = None) -> PdeResult:
    """Evaluate every candidate built from ``Y_source`` on ``Y_source`` itself."""
    ev = evaluator or Evaluator(inst, milp_options)
    if Y_source.commodities != inst.K:
        raise ValidationError(f"demand has {Y_source.commodities} commodities, instance {inst.K}")
    cands = tuple(_candidate(ev, c, Y_source) for c in build_candidate_set(Y_source, tags))
    base = next((c.costs for c in cands if c.mapping == MEAN), None)
    return PdeResult(inst.name, "pde", cands, _select(cands), MEAN if base else "none", base,
                     Fraction(int(Y_source.values.sum()), Y_source.periods), Y_source.periods,
                     all(c.proven for c in cands))


def analysis1(inst: Instance, Y_actual: DemandMatrix, milp_options: dict | None = None,
              tags=DEFAULT_TAGS, evaluator: Evaluator | None = None) -> PdeResult:
    ev = evaluator or Evaluator(inst, milp_options)
    res = solve_pde(inst, Y_actual, milp_options, tags, ev)
    ref, ref_proven = ev.reference(Y_actual)
    return PdeResult(inst.name, "analysis1", res.candidates, res.selected, "reference", ref,
                     res.demand_total, res.periods, res.proven and ref_proven, reference=ref)


def analysis2(inst: Instance, history: DemandMatrix, Y_actual: DemandMatrix,
              model: str = fc.AR, order: int | str = "auto", milp_options: dict | None = None,
              tags=DEFAULT_TAGS, forecasts: DemandMatrix | None = None,
              evaluator: Evaluator | None = None) -> PdeResult:
    """Select on forecasts, evaluate on actuals.

    Step 1 costs (``candidates``) are on the forecasts, compared with the MEAN
    candidate; the step 2 cost (``evaluation``) uses the actual demand and is
    compared with the reference.
    """
    ev = evaluator or Evaluator(inst, milp_options)
    T = Y_actual.periods
    fmeta = {"model": model, "order": order}
    if forecasts is None:
        if history.periods == 0:
            log.warning("no history; forecasting zero demand with CONSTANT")
            history = DemandMatrix(np.zeros((1, inst.K), dtype=np.int64))
            model = fc.CONSTANT
        elif model == fc.AR and history.periods < 1 + fc.MIN_EXTRA_SAMPLES:
            log.warning("history too short for AR; using CONSTANT forecasts")
            model = fc.CONSTANT
        fmeta["model"] = model
        forecasts = fc.make_forecast(history, T, model, order).as_matrix()
    else:
        fmeta = {"model": "given", "order": None}
    if forecasts.periods != T:
        raise ValidationError("forecast horizon does not match the actual demand")
    fmeta["wape_mean"] = _nanmean(fc.wape(Y_actual.values, forecasts.values))
    fmeta["rmse_mean"] = float(np.mean(fc.rmse(Y_actual.values, forecasts.values)))
    step1 = solve_pde(inst, forecasts, milp_options, tags, ev)
    chosen = build_candidate_set(forecasts, tags).get(step1.selected)
    evaluation = _candidate(ev, chosen, Y_actual)
    ref, ref_proven = ev.reference(Y_actual)
    return PdeResult(inst.name, "analysis2", step1.candidates, step1.selected, MEAN,
                     step1.baseline, step1.demand_total, T,
                     step1.proven and evaluation.proven and ref_proven,
                     reference=ref, evaluation=evaluation, forecast=fmeta)


def _nanmean(v) -> float | None:
    v = np.asarray(v, dtype=float)
    v = v[~np.isnan(v)]
    return float(v.mean()) if v.size else None


# ---------------------------------------------------------------------------
# report documents
# ---------------------------------------------------------------------------

def _num(v):
    if v is None:
        return None
    v = float(v)
    return None if math.isnan(v) else v


def _costs(c: CostBreakdown | None):
    return None if c is None else {k: _num(v) for k, v in c.as_dict().items()}


def result_to_dict(res: PdeResult) -> dict:
    cands = []
    for c in res.candidates:
        entry = {
            "mapping": c.mapping,
            "costs": _costs(c.costs),
            "gaps": {k: _num(v) for k, v in res.gaps(c).items()} if res.baseline else None,
            "periodic_demand_total": _num(c.raw_total),
            "periodic_demand_total_gap": _num(gap(c.raw_total, res.demand_total)),
            "built_blocks": c.built_blocks,
            "proven": c.proven,
        }
        cands.append(entry)
    doc = {
        "format": REPORT_FORMAT,
        "analysis": res.analysis,
        "instance": res.instance,
        "periods": res.periods,
        "baseline": res.baseline_name,
        "baseline_costs": _costs(res.baseline),
        "demand_total": _num(res.demand_total),
        "candidates": cands,
        "selected": res.selected,
        "proven": res.proven,
    }
    if res.reference is not None:
        doc["reference_costs"] = _costs(res.reference)
    if res.evaluation is not None:
        e = res.evaluation
        doc["evaluation"] = {
            "mapping": e.mapping,
            "costs": _costs(e.costs),
            "gaps": {k: _num(v) for k, v in res.gaps(e, res.reference).items()},
            "built_blocks": e.built_blocks,
            "proven": e.proven,
        }
    if res.forecast is not None:
        doc["forecast"] = {k: (_num(v) if isinstance(v, float) else v)
                           for k, v in res.forecast.items()}
    return doc


def dump_report(results, path: str | Path | None = None) -> str:
    """Canonical JSON text (sorted keys, no timings) for one or more results."""
    docs = [r if isinstance(r, dict) else result_to_dict(r) for r in results]
    text = json.dumps({"format": REPORT_FORMAT, "results": docs}, indent=1, sort_keys=True) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def load_report(path: str | Path) -> list[dict]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    if (not isinstance(data, dict) or data.get("format") != REPORT_FORMAT
            or not isinstance(data.get("results"), list)):
        raise ValidationError(f"{path}: not a report document")
    return data["results"]
