"""Instance data model, demand ingestion and the space-time graph.

Weekly periods start on Monday by default. Demand is stored as nonnegative
integer container counts; 20-ft boxes count as half a C40 (rounded up per
period) and 45/48-ft boxes count as C53.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

log = logging.getLogger(__name__)

C40, C53 = "C40", "C53"
CONTAINER_TYPES = (C40, C53)

# node kinds
DIN, WIN, TRAIN, SINK, OTHER = "DIN", "WIN", "train", "sink", "other"
NODE_KINDS = (DIN, WIN, TRAIN, SINK, OTHER)
# arc kinds
TRAIN_MOVING, WAITING, WIN_SPLIT, DEMAND_IN = "train-moving", "waiting", "win-split", "demand-in"
ARC_KINDS = (TRAIN_MOVING, WAITING, WIN_SPLIT, DEMAND_IN, OTHER)

MONDAY = 0
INSTANCE_FORMAT = "periodic-demand-instance/1"


class ValidationError(ValueError):
    """Input data violates a documented invariant."""


class DemandParseError(ValidationError):
    """A demand CSV row could not be parsed."""

    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


def round_half_up(x):
    """Round to the nearest integer, halves away from zero for x >= 0."""
    return np.floor(np.asarray(x, dtype=float) + 0.5).astype(np.int64)


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Commodity:
    id: int
    origin: int
    destination: int
    container_type: str

    def __post_init__(self):
        if self.origin == self.destination:
            raise ValidationError(f"commodity {self.id}: origin equals destination")
        if self.container_type not in CONTAINER_TYPES:
            raise ValidationError(f"commodity {self.id}: unknown container type {self.container_type!r}")


@dataclass(frozen=True)
class DailyDemandRecord:
    date: dt.date
    commodity: int
    count: int
    twenty_ft: int = 0  # 20-ft boxes, converted to C40 halves at aggregation

    def __post_init__(self):
        if self.count < 0 or self.twenty_ft < 0:
            raise ValidationError(
                f"negative demand for commodity {self.commodity} on {self.date}")


@dataclass(frozen=True, eq=False)
class DemandMatrix:
    """T x K integer demand; row t is a period, column k a commodity."""

    values: np.ndarray
    period_starts: tuple[dt.date, ...] | None = None

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.ndim != 2:
            raise ValidationError("demand matrix must be two-dimensional")
        if arr.size and not np.all(np.isfinite(arr)):
            raise ValidationError("demand matrix has non-finite entries")
        if np.any(arr < 0):
            raise ValidationError("demand matrix has negative entries")
        if arr.size and not np.issubdtype(arr.dtype, np.integer):
            if np.any(arr != np.round(arr)):
                raise ValidationError("demand matrix entries must be integers")
        arr = arr.astype(np.int64, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        if self.period_starts is not None:
            starts = tuple(self.period_starts)
            if len(starts) != arr.shape[0]:
                raise ValidationError("period_starts length does not match row count")
            object.__setattr__(self, "period_starts", starts)

    @property
    def periods(self) -> int:
        return self.values.shape[0]

    @property
    def commodities(self) -> int:
        return self.values.shape[1]

    def rows(self, start: int, stop: int | None = None) -> "DemandMatrix":
        starts = self.period_starts[start:stop] if self.period_starts else None
        return DemandMatrix(self.values[start:stop], starts)

    def __eq__(self, other):
        return (isinstance(other, DemandMatrix)
                and np.array_equal(self.values, other.values)
                and self.period_starts == other.period_starts)

    __hash__ = None


@dataclass(frozen=True)
class Node:
    id: int
    kind: str
    terminal: int | None = None
    time: int | None = None


@dataclass(frozen=True)
class Arc:
    id: int
    tail: int
    head: int
    kind: str
    capacity_feet: float | None = None


@dataclass(frozen=True)
class SpaceTimeGraph:
    nodes: tuple[Node, ...]
    arcs: tuple[Arc, ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "arcs", tuple(self.arcs))
        for i, n in enumerate(self.nodes):
            if n.id != i:
                raise ValidationError(f"node ids must be 0..N-1 in order (got {n.id} at {i})")
            if n.kind not in NODE_KINDS:
                raise ValidationError(f"node {n.id}: unknown kind {n.kind!r}")
        nn = len(self.nodes)
        for i, a in enumerate(self.arcs):
            if a.id != i:
                raise ValidationError(f"arc ids must be 0..A-1 in order (got {a.id} at {i})")
            if a.kind not in ARC_KINDS:
                raise ValidationError(f"arc {a.id}: unknown kind {a.kind!r}")
            if not (0 <= a.tail < nn and 0 <= a.head < nn):
                raise ValidationError(f"arc {a.id}: endpoint out of range")
            if a.kind == TRAIN_MOVING and not (a.capacity_feet is not None
                                               and math.isfinite(a.capacity_feet)
                                               and a.capacity_feet > 0):
                raise ValidationError(f"train-moving arc {a.id} needs a finite positive capacity")
            if a.kind == WIN_SPLIT and (self.nodes[a.tail].kind != WIN or self.nodes[a.head].kind != DIN):
                raise ValidationError(f"win-split arc {a.id} must go from a WIN to a DIN node")
            tt, ht = self.nodes[a.tail].time, self.nodes[a.head].time
            if tt is not None and ht is not None and ht < tt:
                raise ValidationError(f"arc {a.id} goes backwards in time")
        g = nx.DiGraph()
        g.add_nodes_from(range(nn))
        g.add_edges_from((a.tail, a.head) for a in self.arcs)
        if not nx.is_directed_acyclic_graph(g):
            raise ValidationError("space-time graph contains a cycle")

    def din_nodes(self, terminal: int) -> list[Node]:
        return sorted((n for n in self.nodes if n.kind == DIN and n.terminal == terminal),
                      key=lambda n: (n.time if n.time is not None else -1, n.id))

    def win_node(self, terminal: int) -> Node | None:
        for n in self.nodes:
            if n.kind == WIN and n.terminal == terminal:
                return n
        return None

    def demand_sources(self, terminal: int) -> list[Node]:
        """Nodes where a terminal's demand enters: its WIN node once the
        transform is applied, otherwise its DIN nodes."""
        win = self.win_node(terminal)
        return [win] if win is not None else self.din_nodes(terminal)

    @property
    def terminals(self) -> list[int]:
        return sorted({n.terminal for n in self.nodes if n.terminal is not None})


@dataclass(frozen=True, eq=False)
class Block:
    """A path through the space-time graph (or an outsourcing option)."""

    id: int
    arcs: tuple[int, ...]
    design_cost: float
    flow_cost: dict[int, float]
    artificial: bool
    admissible_commodities: frozenset[int]
    capacity: float | None = None  # path capacity, used only by the generic MCND model

    def __post_init__(self):
        object.__setattr__(self, "arcs", tuple(int(a) for a in self.arcs))
        object.__setattr__(self, "admissible_commodities", frozenset(self.admissible_commodities))
        object.__setattr__(self, "flow_cost", {int(k): float(v) for k, v in self.flow_cost.items()})
        if not self.admissible_commodities:
            raise ValidationError(f"block {self.id}: no admissible commodity")
        if self.design_cost < 0 or any(c < 0 for c in self.flow_cost.values()):
            raise ValidationError(f"block {self.id}: negative cost")
        if self.artificial and self.design_cost != 0:
            raise ValidationError(f"artificial block {self.id} must have zero design cost")
        missing = self.admissible_commodities - self.flow_cost.keys()
        if missing:
            raise ValidationError(f"block {self.id}: no flow cost for commodities {sorted(missing)}")
        if not self.arcs:
            raise ValidationError(f"block {self.id}: empty path")
        if self.capacity is not None and self.capacity < 0:
            raise ValidationError(f"block {self.id}: negative capacity")

    def __eq__(self, other):
        return isinstance(other, Block) and self._key() == other._key()

    def __hash__(self):
        return hash((self.id, self.arcs))

    def _key(self):
        return (self.id, self.arcs, self.design_cost, self.flow_cost, self.artificial,
                self.admissible_commodities, self.capacity)


@dataclass(frozen=True, eq=False)
class Instance:
    commodities: tuple[Commodity, ...]
    graph: SpaceTimeGraph
    blocks: tuple[Block, ...]
    L40: float
    L53: float
    T: int
    D: int = 7
    name: str = "instance"

    def __post_init__(self):
        object.__setattr__(self, "commodities", tuple(self.commodities))
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if not (self.L53 > self.L40 > 0):
            raise ValidationError("platform lengths must satisfy L53 > L40 > 0")
        if self.T < 1 or self.D < 1:
            raise ValidationError("horizon T and period length D must be >= 1")
        for i, c in enumerate(self.commodities):
            if c.id != i:
                raise ValidationError(f"commodity ids must be 0..K-1 in order (got {c.id} at {i})")
        K = len(self.commodities)
        arcs = self.graph.arcs
        for i, b in enumerate(self.blocks):
            if b.id != i:
                raise ValidationError(f"block ids must be 0..B-1 in order (got {b.id} at {i})")
            if any(not 0 <= k < K for k in b.admissible_commodities):
                raise ValidationError(f"block {b.id}: unknown commodity")
            for a in b.arcs:
                if not 0 <= a < len(arcs):
                    raise ValidationError(f"block {b.id}: unknown arc {a}")
            for a1, a2 in zip(b.arcs, b.arcs[1:]):
                if arcs[a1].head != arcs[a2].tail:
                    raise ValidationError(f"block {b.id}: arcs {a1},{a2} are not consecutive")
        for k in range(K):
            if not self.artificial_blocks_for[k]:
                raise ValidationError(f"commodity {k} has no artificial block")

    def __eq__(self, other):
        return isinstance(other, Instance) and instance_to_dict(self) == instance_to_dict(other)

    __hash__ = None

    @property
    def K(self) -> int:
        return len(self.commodities)

    @cached_property
    def blocks_for(self) -> tuple[tuple[int, ...], ...]:
        """Block ids admissible for each commodity."""
        out = [[] for _ in self.commodities]
        for b in self.blocks:
            for k in sorted(b.admissible_commodities):
                out[k].append(b.id)
        return tuple(tuple(x) for x in out)

    @cached_property
    def artificial_blocks_for(self) -> tuple[tuple[int, ...], ...]:
        out = [[] for _ in self.commodities]
        for b in self.blocks:
            if b.artificial:
                for k in b.admissible_commodities:
                    out[k].append(b.id)
        return tuple(tuple(sorted(x)) for x in out)

    @cached_property
    def blocks_on_arc(self) -> dict[int, tuple[int, ...]]:
        """Blocks using each train-moving arc (only arcs used by a block)."""
        out: dict[int, list[int]] = defaultdict(list)
        arcs = self.graph.arcs
        for b in self.blocks:
            if b.artificial:
                continue
            for a in dict.fromkeys(b.arcs):
                if arcs[a].kind == TRAIN_MOVING:
                    out[a].append(b.id)
        return {a: tuple(v) for a, v in sorted(out.items())}

    @cached_property
    def train_arcs_of(self) -> tuple[tuple[int, ...], ...]:
        """Train-moving arcs on each block's path."""
        out = [[] for _ in self.blocks]
        for a, bs in self.blocks_on_arc.items():
            for b in bs:
                out[b].append(a)
        return tuple(tuple(x) for x in out)

    def is_c53(self, k: int) -> bool:
        return self.commodities[k].container_type == C53


# ---------------------------------------------------------------------------
# demand ingestion
# ---------------------------------------------------------------------------

_FEET_TO_TYPE = {20: "20", 40: C40, 45: C53, 48: C53, 53: C53}


def load_demand_csv(path: str | Path) -> list[DailyDemandRecord]:
    """Read ``date,commodity_id,count[,container_type]`` rows.

    ``container_type`` (optional) is the raw box length in feet
    (20/40/45/48/53). Rows repeating a (date, commodity) are summed.
    """
    path = Path(path)
    merged: dict[tuple[dt.date, int], list[int]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DemandParseError(path, 1, "empty file") from None
        header = [h.strip() for h in header]
        if header[:3] != ["date", "commodity_id", "count"]:
            raise DemandParseError(path, 1, f"expected header date,commodity_id,count, got {header}")
        has_type = len(header) > 3 and header[3] == "container_type"
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 3 or (len(row) > 3 and not has_type) or len(row) > 4:
                raise DemandParseError(path, lineno, f"expected {len(header)} fields, got {len(row)}")
            try:
                day = dt.date.fromisoformat(row[0].strip())
                k = int(row[1])
                n = int(row[2])
            except ValueError as exc:
                raise DemandParseError(path, lineno, str(exc)) from None
            if n < 0:
                raise ValidationError(f"{path}:{lineno}: negative count {n}")
            if k < 0:
                raise DemandParseError(path, lineno, f"negative commodity id {k}")
            twenty = 0
            if has_type and len(row) == 4 and row[3].strip():
                try:
                    feet = int(row[3])
                    kind = _FEET_TO_TYPE[feet]
                except (ValueError, KeyError):
                    raise DemandParseError(path, lineno, f"unknown container type {row[3]!r}") from None
                if kind == "20":
                    twenty, n = n, 0
            slot = merged.setdefault((day, k), [0, 0])
            slot[0] += n
            slot[1] += twenty
    records = [DailyDemandRecord(d, k, c, t) for (d, k), (c, t) in merged.items()]
    records.sort(key=lambda r: (r.date, r.commodity))
    return records


def write_demand_csv(path: str | Path, records: Iterable[DailyDemandRecord]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "commodity_id", "count"])
        for r in records:
            if r.twenty_ft:
                raise ValidationError("records with raw 20-ft counts cannot be written in the normalized format")
            w.writerow([r.date.isoformat(), r.commodity, r.count])


def aggregate_to_periods(records: Sequence[DailyDemandRecord], period_start: int = MONDAY,
                         K: int | None = None, period_days: int = 7) -> DemandMatrix:
    """Sum daily counts into whole periods; partial leading/trailing periods are dropped."""
    if not records:
        raise ValidationError("no demand records to aggregate")
    first = min(r.date for r in records)
    last = max(r.date for r in records)
    offset = (period_start - first.weekday()) % 7 if period_days == 7 else 0
    start = first + dt.timedelta(days=offset)
    n_periods = ((last - start).days + 1) // period_days
    if n_periods <= 0:
        raise ValidationError("records do not span a complete period")
    ids = {r.commodity for r in records}
    if K is None:
        K = max(ids) + 1
    if max(ids) >= K:
        raise ValidationError(f"commodity id {max(ids)} outside 0..{K - 1}")
    end = start + dt.timedelta(days=n_periods * period_days)
    dropped = sum(1 for r in records if not start <= r.date < end)
    if dropped:
        log.info("dropped %d records outside complete periods", dropped)
    counts = np.zeros((n_periods, K), dtype=np.int64)
    halves = np.zeros((n_periods, K), dtype=np.int64)
    seen_days = set()
    for r in records:
        if not start <= r.date < end:
            continue
        t = (r.date - start).days // period_days
        counts[t, r.commodity] += r.count
        halves[t, r.commodity] += r.twenty_ft
        seen_days.add(r.date)
    counts += (halves + 1) // 2
    gaps = n_periods * period_days - len(seen_days)
    if gaps:
        log.warning("%d day(s) without any record treated as zero demand", gaps)
    silent = sorted(set(range(K)) - {r.commodity for r in records if start <= r.date < end})
    if silent:
        log.warning("commodities without records (zero demand): %s", silent)
    starts = tuple(start + dt.timedelta(days=period_days * t) for t in range(n_periods))
    return DemandMatrix(counts, starts)


def disaggregate_evenly(Y: DemandMatrix, period_days: int = 7) -> list[DailyDemandRecord]:
    """Spread each period count over its days (remainder on the first days).

    Used to write synthetic weekly demand in the daily CSV format; summing the
    result back per period reproduces ``Y`` exactly.
    """
    if Y.period_starts is None:
        raise ValidationError("demand matrix has no period dates")
    out = []
    for t, start in enumerate(Y.period_starts):
        for d in range(period_days):
            day = start + dt.timedelta(days=d)
            for k in range(Y.commodities):
                q, rem = divmod(int(Y.values[t, k]), period_days)
                out.append(DailyDemandRecord(day, k, q + (1 if d < rem else 0)))
    return out


# ---------------------------------------------------------------------------
# graph transform
# ---------------------------------------------------------------------------

def apply_win_transform(graph: SpaceTimeGraph, terminals: Iterable[int]) -> SpaceTimeGraph:
    """Add one weekly-demand (WIN) node per terminal with a split arc to each
    of the terminal's DIN nodes. Existing nodes and arcs are kept unchanged."""
    if any(n.kind == WIN for n in graph.nodes):
        raise ValidationError("graph already contains WIN nodes")
    nodes = list(graph.nodes)
    arcs = list(graph.arcs)
    for theta in sorted(set(terminals)):
        dins = graph.din_nodes(theta)
        if not dins:
            raise ValidationError(f"terminal {theta} has no DIN node")
        win = Node(len(nodes), WIN, theta, None)
        nodes.append(win)
        for din in dins:
            arcs.append(Arc(len(arcs), win.id, din.id, WIN_SPLIT, None))
    return SpaceTimeGraph(tuple(nodes), tuple(arcs))


def strip_win_nodes(graph: SpaceTimeGraph) -> SpaceTimeGraph:
    """Inverse of :func:`apply_win_transform` for graphs whose WIN nodes and
    split arcs were appended last."""
    nodes = tuple(n for n in graph.nodes if n.kind != WIN)
    arcs = tuple(a for a in graph.arcs if a.kind != WIN_SPLIT)
    if any(n.id != i for i, n in enumerate(nodes)) or any(a.id != i for i, a in enumerate(arcs)):
        raise ValidationError("WIN nodes/arcs are not a suffix of the graph")
    return SpaceTimeGraph(nodes, arcs)


# ---------------------------------------------------------------------------
# instance file
# ---------------------------------------------------------------------------

def _num_out(v: float | None):
    if v is None:
        return None
    return int(v) if float(v).is_integer() and abs(v) < 2**53 else float(v)


def instance_to_dict(inst: Instance) -> dict:
    return {
        "format": INSTANCE_FORMAT,
        "name": inst.name,
        "params": {"L40": inst.L40, "L53": inst.L53, "T": inst.T, "D": inst.D},
        "commodities": [
            {"id": c.id, "origin": c.origin, "destination": c.destination,
             "container_type": c.container_type}
            for c in inst.commodities],
        "nodes": [{"id": n.id, "kind": n.kind, "terminal": n.terminal, "time": n.time}
                  for n in inst.graph.nodes],
        "arcs": [{"id": a.id, "tail": a.tail, "head": a.head, "kind": a.kind,
                  "capacity_feet": a.capacity_feet}
                 for a in inst.graph.arcs],
        "blocks": [
            {"id": b.id, "arcs": list(b.arcs), "design_cost": b.design_cost,
             "flow_cost": {str(k): v for k, v in sorted(b.flow_cost.items())},
             "artificial": b.artificial,
             "admissible_commodities": sorted(b.admissible_commodities),
             "capacity": b.capacity}
            for b in inst.blocks],
    }


def instance_from_dict(data: dict) -> Instance:
    try:
        fmt = data.get("format", INSTANCE_FORMAT)
        if fmt != INSTANCE_FORMAT:
            raise ValidationError(f"unsupported instance format {fmt!r}")
        p = data["params"]
        commodities = [Commodity(int(c["id"]), int(c["origin"]), int(c["destination"]),
                                 c["container_type"]) for c in data["commodities"]]
        nodes = [Node(int(n["id"]), n["kind"], n.get("terminal"), n.get("time"))
                 for n in data["nodes"]]
        arcs = [Arc(int(a["id"]), int(a["tail"]), int(a["head"]), a["kind"],
                    None if a.get("capacity_feet") is None else float(a["capacity_feet"]))
                for a in data["arcs"]]
        blocks = [Block(int(b["id"]), tuple(b["arcs"]), float(b["design_cost"]),
                        {int(k): float(v) for k, v in b["flow_cost"].items()},
                        bool(b["artificial"]), frozenset(b["admissible_commodities"]),
                        None if b.get("capacity") is None else float(b["capacity"]))
                  for b in data["blocks"]]
        return Instance(tuple(commodities), SpaceTimeGraph(tuple(nodes), tuple(arcs)),
                        tuple(blocks), float(p["L40"]), float(p["L53"]), int(p["T"]),
                        int(p.get("D", 7)), data.get("name", "instance"))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed instance document: {exc!r}") from None


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=1) + "\n", encoding="utf-8")


def load_instance(path: str | Path) -> Instance:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    return instance_from_dict(data)
