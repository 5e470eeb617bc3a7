"""Figures for report documents, written to image files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .pde import COMPONENTS  # noqa: E402

_LABELS = {"total": "C_PDE", "design": "C_design", "flow": "C_flow", "out": "C_out"}


def _slug(text: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in text)


def plot_gaps(doc: dict, path: str | Path) -> Path:
    """Grouped bars: one group per candidate, one bar per cost component."""
    cands = doc["candidates"]
    tags = [c["mapping"] for c in cands]
    width = 0.8 / len(COMPONENTS)
    x = np.arange(len(tags))
    fig, ax = plt.subplots(figsize=(7, 4))
    for i, comp in enumerate(COMPONENTS):
        vals = [((c.get("gaps") or {}).get(comp)) for c in cands]
        vals = [np.nan if v is None else v for v in vals]
        ax.bar(x + (i - (len(COMPONENTS) - 1) / 2) * width, vals, width, label=_LABELS[comp])
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xticks(x, [t + (" (selected)" if t == doc["selected"] else "") for t in tags])
    ax.set_ylabel(f"gap to {doc['baseline']} (%)")
    ax.set_title(f"{doc['instance']} - {doc['analysis']}")
    ax.legend(fontsize="small")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_costs(doc: dict, path: str | Path) -> Path:
    """Stacked absolute costs per candidate (design, flow, outsourcing)."""
    cands = doc["candidates"]
    tags = [c["mapping"] for c in cands]
    bottom = np.zeros(len(tags))
    fig, ax = plt.subplots(figsize=(6, 4))
    for comp in ("design", "flow", "out"):
        vals = np.array([c["costs"][comp] for c in cands], dtype=float)
        ax.bar(tags, vals, bottom=bottom, label=_LABELS[comp])
        bottom += vals
    ref = doc.get("reference_costs")
    if ref:
        ax.axhline(ref["total"], color="black", linestyle="--", linewidth=1, label="reference")
    ax.set_ylabel("cost over the horizon")
    ax.set_title(f"{doc['instance']} - {doc['analysis']}")
    ax.legend(fontsize="small")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_figures(docs: list[dict], directory: str | Path) -> list[Path]:
    out_dir = Path(directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for i, d in enumerate(docs):
        stem = f"{i:02d}_{_slug(d['instance'])}_{d['analysis']}"
        if d.get("baseline_costs"):
            written.append(plot_gaps(d, out_dir / f"{stem}_gaps.png"))
        written.append(plot_costs(d, out_dir / f"{stem}_costs.png"))
    return written
