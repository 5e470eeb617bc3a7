"""Free-format MPS writer/reader.

Numbers are written with ``repr`` so a dump re-reads bit-exactly. Columns appear
in model order; integer columns are wrapped in INTORG/INTEND markers.
"""

from __future__ import annotations

import math
from pathlib import Path

from .model import BINARY, CONTINUOUS, EQ, GE, INTEGER, LE, MilpModel

_SENSE_CODE = {LE: "L", GE: "G", EQ: "E"}
_CODE_SENSE = {v: k for k, v in _SENSE_CODE.items()}
OBJ_ROW = "COST"


def _num(v: float) -> str:
    return repr(float(v))


def write_mps(model: MilpModel, path: str | Path) -> None:
    lines = [f"NAME {model.name}", "ROWS", f" N {OBJ_ROW}"]
    for con in model.constraints:
        lines.append(f" {_SENSE_CODE[con.sense]} {con.name}")
    by_col: list[list[tuple[str, float]]] = [[] for _ in range(model.num_vars)]
    for con in model.constraints:
        for j, a in con.coeffs.items():
            by_col[j].append((con.name, a))
    lines.append("COLUMNS")
    in_int = False
    marker = 0
    for j, name in enumerate(model.var_names):
        is_int = model.kind[j] != CONTINUOUS
        if is_int and not in_int:
            lines.append(f" MARKER{marker} 'MARKER' 'INTORG'")
            marker += 1
            in_int = True
        elif not is_int and in_int:
            lines.append(f" MARKER{marker} 'MARKER' 'INTEND'")
            marker += 1
            in_int = False
        lines.append(f" {name} {OBJ_ROW} {_num(model.obj[j])}")
        for row, a in by_col[j]:
            lines.append(f" {name} {row} {_num(a)}")
    if in_int:
        lines.append(f" MARKER{marker} 'MARKER' 'INTEND'")
    lines.append("RHS")
    if model.constant:
        lines.append(f" RHS {OBJ_ROW} {_num(-model.constant)}")
    for con in model.constraints:
        lines.append(f" RHS {con.name} {_num(con.rhs)}")
    lines.append("BOUNDS")
    for j, name in enumerate(model.var_names):
        lb, ub, kind = model.lb[j], model.ub[j], model.kind[j]
        if kind == BINARY:
            lines.append(f" BV BND {name}")
        elif lb == ub:
            lines.append(f" FX BND {name} {_num(lb)}")
        else:
            lines.append(f" LO BND {name} {_num(lb)}")
            lines.append(f" UP BND {name} {_num(ub)}" if math.isfinite(ub) else f" PL BND {name}")
    lines.append("ENDATA")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_mps(path: str | Path) -> MilpModel:
    """Read a file produced by :func:`write_mps` (free MPS subset)."""
    section = None
    model = MilpModel()
    rows: list[tuple[str, str]] = []
    cols: dict[str, dict] = {}
    col_order: list[str] = []
    rhs: dict[str, float] = {}
    constant = 0.0
    in_int = False
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        if not raw.strip() or raw.startswith("*"):
            continue
        if not raw.startswith(" "):
            head = raw.split()
            section = head[0]
            if section == "NAME" and len(head) > 1:
                model.name = head[1]
            continue
        tok = raw.split()
        if section == "ROWS":
            if tok[0] != "N":
                rows.append((tok[1], _CODE_SENSE[tok[0]]))
        elif section == "COLUMNS":
            if len(tok) == 3 and tok[1] == "'MARKER'":
                in_int = tok[2] == "'INTORG'"
                continue
            name = tok[0]
            if name not in cols:
                cols[name] = {"obj": 0.0, "coef": {}, "int": in_int}
                col_order.append(name)
            for row, val in zip(tok[1::2], tok[2::2]):
                if row == OBJ_ROW:
                    cols[name]["obj"] = float(val)
                else:
                    cols[name]["coef"][row] = float(val)
        elif section == "RHS":
            for row, val in zip(tok[1::2], tok[2::2]):
                if row == OBJ_ROW:
                    constant = -float(val)
                else:
                    rhs[row] = float(val)
        elif section == "BOUNDS":
            kind, name = tok[0], tok[2]
            c = cols[name]
            if kind == "BV":
                c["bv"] = True
            elif kind == "FX":
                c["lb"] = c["ub"] = float(tok[3])
            elif kind == "LO":
                c["lb"] = float(tok[3])
            elif kind == "UP":
                c["ub"] = float(tok[3])
            elif kind == "PL":
                c["ub"] = math.inf
    index = {}
    for name in col_order:
        c = cols[name]
        if c.get("bv"):
            kind, lb, ub = BINARY, 0.0, 1.0
        else:
            kind = INTEGER if c["int"] else CONTINUOUS
            lb, ub = c.get("lb", 0.0), c.get("ub", math.inf)
        index[name] = model.add_var(name, lb, ub, kind, c["obj"])
    by_row: dict[str, dict[int, float]] = {r: {} for r, _ in rows}
    for name in col_order:
        for row, a in cols[name]["coef"].items():
            by_row[row][index[name]] = a
    for row, sense in rows:
        model.add_constr(by_row[row], sense, rhs.get(row, 0.0), row)
    model.constant = constant
    return model
