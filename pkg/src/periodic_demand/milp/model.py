"""Mixed-integer linear program container and solution record."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

CONTINUOUS = "continuous"
INTEGER = "integer"
BINARY = "binary"
KINDS = (CONTINUOUS, INTEGER, BINARY)

LE, EQ, GE = "<=", "=", ">="
SENSES = (LE, EQ, GE)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
GAP_LIMIT = "gap_limit"


class ModelError(ValueError):
    """Raised for malformed models (bad bounds, empty rows, unknown names)."""


@dataclass
class Constraint:
    coeffs: dict[int, float]
    sense: str
    rhs: float
    name: str


class MilpModel:
    """Minimisation MILP built incrementally with ``add_var``/``add_constr``.

    Variables are addressed by the integer index returned from ``add_var``.
    ``constant`` is added to every reported objective value.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self.var_names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.kind: list[str] = []
        self.obj: list[float] = []
        self.constraints: list[Constraint] = []
        self.constant = 0.0
        self._index: dict[str, int] = {}

    # -- construction -------------------------------------------------------
    def add_var(self, name: str, lb: float = 0.0, ub: float = math.inf,
                kind: str = CONTINUOUS, obj: float = 0.0) -> int:
        if kind not in KINDS:
            raise ModelError(f"unknown variable kind {kind!r}")
        if name in self._index:
            raise ModelError(f"duplicate variable name {name!r}")
        lb, ub = float(lb), float(ub)
        if kind == BINARY:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if not math.isfinite(lb):
            raise ModelError(f"variable {name!r}: lower bound must be finite")
        if math.isnan(ub) or ub == -math.inf or lb > ub:
            raise ModelError(f"variable {name!r}: invalid bounds [{lb}, {ub}]")
        idx = len(self.var_names)
        self._index[name] = idx
        self.var_names.append(name)
        self.lb.append(lb)
        self.ub.append(ub)
        self.kind.append(kind)
        self.obj.append(float(obj))
        return idx

    def add_constr(self, coeffs: Mapping[int, float] | Iterable[tuple[int, float]],
                   sense: str, rhs: float, name: str | None = None) -> int:
        if sense not in SENSES:
            raise ModelError(f"unknown constraint sense {sense!r}")
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        row: dict[int, float] = {}
        n = len(self.var_names)
        for j, a in items:
            if not 0 <= j < n:
                raise ModelError(f"constraint references unknown variable {j}")
            row[j] = row.get(j, 0.0) + float(a)
        row = {j: a for j, a in row.items() if a != 0.0}
        if not row:
            raise ModelError(f"constraint {name or len(self.constraints)} has no nonzero coefficient")
        idx = len(self.constraints)
        self.constraints.append(Constraint(row, sense, float(rhs), name or f"c{idx}"))
        return idx

    def var(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ModelError(f"unknown variable {name!r}") from None

    # -- views ----------------------------------------------------------------
    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    def integer_mask(self) -> np.ndarray:
        return np.array([k != CONTINUOUS for k in self.kind], dtype=bool)

    def arrays(self):
        """Return ``(A, sense, rhs, c, lb, ub)`` with ``A`` in CSC format."""
        rows, cols, vals = [], [], []
        for i, con in enumerate(self.constraints):
            for j, a in con.coeffs.items():
                rows.append(i)
                cols.append(j)
                vals.append(a)
        A = sp.csc_matrix((vals, (rows, cols)),
                          shape=(self.num_constraints, self.num_vars))
        sense = [con.sense for con in self.constraints]
        rhs = np.array([con.rhs for con in self.constraints], dtype=float)
        return (A, sense, rhs, np.array(self.obj, dtype=float),
                np.array(self.lb, dtype=float), np.array(self.ub, dtype=float))

    def relaxed(self) -> "MilpModel":
        """Copy with every integrality requirement dropped."""
        m = MilpModel(self.name + "-relaxed")
        for j, name in enumerate(self.var_names):
            m.add_var(name, self.lb[j], self.ub[j], CONTINUOUS, self.obj[j])
        for con in self.constraints:
            m.add_constr(con.coeffs, con.sense, con.rhs, con.name)
        m.constant = self.constant
        return m

    def evaluate(self, values: Mapping[str, float] | np.ndarray) -> float:
        x = self.as_array(values)
        return float(np.dot(self.obj, x)) + self.constant

    def max_violation(self, values: Mapping[str, float] | np.ndarray) -> float:
        """Largest absolute bound, row or integrality violation of ``values``."""
        x = self.as_array(values)
        worst = 0.0
        lb, ub = np.array(self.lb), np.array(self.ub)
        worst = max(worst, float(np.max(lb - x, initial=0.0)), float(np.max(x - ub, initial=0.0)))
        for con in self.constraints:
            act = sum(a * x[j] for j, a in con.coeffs.items())
            if con.sense == LE:
                worst = max(worst, act - con.rhs)
            elif con.sense == GE:
                worst = max(worst, con.rhs - act)
            else:
                worst = max(worst, abs(act - con.rhs))
        mask = self.integer_mask()
        if mask.any():
            worst = max(worst, float(np.max(np.abs(x[mask] - np.round(x[mask])))))
        return worst

    def as_array(self, values) -> np.ndarray:
        if isinstance(values, np.ndarray):
            return values.astype(float)
        return np.array([values[name] for name in self.var_names], dtype=float)


@dataclass(frozen=True)
class MilpSolution:
    status: str
    objective: float
    values: dict[str, float] | None
    bound: float
    nodes_explored: int = 0
    iterations: int = 0
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def has_solution(self) -> bool:
        return self.values is not None

    @property
    def proven(self) -> bool:
        return self.status == OPTIMAL

    @property
    def gap(self) -> float:
        """Relative gap between incumbent and bound (0 when proven optimal)."""
        if self.values is None or not math.isfinite(self.objective):
            return math.inf
        if self.status == OPTIMAL:
            return 0.0
        return abs(self.objective - self.bound) / max(abs(self.objective), 1e-10)

    def __getitem__(self, name: str) -> float:
        if self.values is None:
            raise KeyError(name)
        return self.values[name]
