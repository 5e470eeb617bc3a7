"""Render report documents (see :func:`periodic_demand.pde.result_to_dict`)
as text tables, canonical JSON or CSV."""

from __future__ import annotations

import csv
import io
import json

from .core import ValidationError
from .pde import COMPONENTS, REPORT_FORMAT

FORMATS = ("table", "json", "csv")
CSV_FIELDS = ["instance", "analysis", "section", "mapping", "baseline", "selected",
              "gap_total", "gap_design", "gap_flow", "gap_out",
              "cost_total", "cost_design", "cost_flow", "cost_out",
              "demand_total_gap", "proven"]


def report_rows(docs: list[dict]) -> list[dict]:
    rows = []
    for d in docs:
        for c in d["candidates"]:
            gaps = c.get("gaps") or {}
            rows.append({
                "instance": d["instance"], "analysis": d["analysis"],
                "section": "candidates", "mapping": c["mapping"], "baseline": d["baseline"],
                "selected": c["mapping"] == d["selected"],
                **{f"gap_{k}": gaps.get(k) for k in COMPONENTS},
                **{f"cost_{k}": c["costs"][k] for k in COMPONENTS},
                "demand_total_gap": c.get("periodic_demand_total_gap"),
                "proven": c["proven"],
            })
        e = d.get("evaluation")
        if e:
            rows.append({
                "instance": d["instance"], "analysis": d["analysis"], "section": "evaluation",
                "mapping": e["mapping"], "baseline": "reference", "selected": True,
                **{f"gap_{k}": e["gaps"].get(k) for k in COMPONENTS},
                **{f"cost_{k}": e["costs"][k] for k in COMPONENTS},
                "demand_total_gap": None, "proven": e["proven"],
            })
    return rows


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _render_csv(docs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in report_rows(docs):
        w.writerow([_cell(r[f]) for f in CSV_FIELDS])
    return buf.getvalue()


def _pct(v) -> str:
    return "n/a" if v is None else f"{v:+.2f}%"


_BASELINE_LABEL = {
    "reference": "per-week redesign reference",
    "MEAN": "MEAN candidate",
}


def _render_table(docs) -> str:
    out = []
    heads = ["mapping", "C_PDE", "C_design", "C_flow", "C_out", "demand", "proven"]
    for d in docs:
        title = f"{d['instance']} | {d['analysis']} | {d['periods']} periods"
        out.append(title)
        out.append("=" * len(title))
        base = _BASELINE_LABEL.get(d["baseline"], d["baseline"])
        what = "costs on forecast demand" if d["analysis"] == "analysis2" else "costs"
        out.append(f"{what}, gaps relative to the {base}")
        out.append("".join(f"{h:>11}" for h in heads))
        for c in d["candidates"]:
            g = c.get("gaps") or {}
            mark = "*" if c["mapping"] == d["selected"] else " "
            cells = [f"{c['mapping']}{mark}"] + [_pct(g.get(k)) for k in COMPONENTS] + [
                _pct(c.get("periodic_demand_total_gap")), "yes" if c["proven"] else "no"]
            out.append("".join(f"{x:>11}" for x in cells))
        out.append(f"selected: {d['selected']} (* above); demand = total periodic demand "
                   f"vs mean period total")
        e = d.get("evaluation")
        if e:
            out.append("selected design evaluated on actual demand, gaps relative to the "
                       "per-week redesign reference")
            cells = [e["mapping"]] + [_pct(e["gaps"].get(k)) for k in COMPONENTS] + [
                "", "yes" if e["proven"] else "no"]
            out.append("".join(f"{x:>11}" for x in cells))
        f = d.get("forecast")
        if f and f.get("wape_mean") is not None:
            out.append(f"forecast {f['model']}: mean WAPE {f['wape_mean']:.2f}%, "
                       f"mean RMSE {f['rmse_mean']:.3f}")
        if not d["proven"]:
            out.append("note: at least one solve stopped at a limit; figures are not proven optimal")
        out.append("")
    return "\n".join(out)


def render(docs: list[dict], fmt: str = "table") -> str:
    if not docs:
        raise ValidationError("nothing to report")
    if fmt == "json":
        return json.dumps({"format": REPORT_FORMAT, "results": docs}, indent=1, sort_keys=True) + "\n"
    if fmt == "csv":
        return _render_csv(docs)
    if fmt == "table":
        return _render_table(docs)
    raise ValidationError(f"unknown report format {fmt!r}; choose from {', '.join(FORMATS)}")


def parse_csv(text: str) -> list[dict]:
    """Read rows written by the CSV renderer back into typed values."""
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        row = {}
        for k, v in r.items():
            if k in ("selected", "proven"):
                row[k] = v == "true"
            elif k.startswith(("gap_", "cost_")) or k == "demand_total_gap":
                row[k] = float(v) if v else None
            else:
                row[k] = v
        rows.append(row)
    return rows
