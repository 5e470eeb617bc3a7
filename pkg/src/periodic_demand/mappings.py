"""Maps from a periods x commodities demand matrix to one periodic demand vector."""

from __future__ import annotations

import csv
from fractions import Fraction
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .core import ValidationError, round_half_up

MAX, MEAN, Q2, Q3 = "MAX", "MEAN", "Q2", "Q3"
DEFAULT_TAGS = (MAX, MEAN, Q2, Q3)

_STATISTICS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    MAX: lambda Y: Y.max(axis=0),
    MEAN: lambda Y: Y.mean(axis=0),
    # linear interpolation between order statistics at position (n-1)q
    Q2: lambda Y: np.quantile(Y, 0.5, axis=0, method="linear"),
    Q3: lambda Y: np.quantile(Y, 0.75, axis=0, method="linear"),
}


def register_mapping(tag: str, statistic: Callable[[np.ndarray], np.ndarray]) -> None:
    """Add a column-wise statistic under a new tag."""
    tag = tag.upper()
    if tag in _STATISTICS:
        raise ValueError(f"mapping {tag} already registered")
    _STATISTICS[tag] = statistic


def known_tags() -> tuple[str, ...]:
    return tuple(_STATISTICS)


@dataclass(frozen=True, eq=False)
class PeriodicDemand:
    values: np.ndarray     # rounded, what the models see
    mapping_tag: str
    raw: np.ndarray | None = None
    raw_total: Fraction | None = None   # exact sum of the unrounded statistic

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 1 or np.any(v < 0) or np.any(v != np.round(v)):
            raise ValidationError("periodic demand must be a vector of nonnegative integers")
        v = v.astype(np.int64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.raw is not None:
            r = np.asarray(self.raw, dtype=float).copy()
            r.setflags(write=False)
            object.__setattr__(self, "raw", r)

    def __eq__(self, other):
        return (isinstance(other, PeriodicDemand) and self.mapping_tag == other.mapping_tag
                and np.array_equal(self.values, other.values))

    __hash__ = None

    @property
    def total(self) -> int:
        return int(self.values.sum())


@dataclass(frozen=True)
class CandidateSet:
    candidates: tuple[PeriodicDemand, ...]

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if not self.candidates:
            raise ValidationError("candidate set is empty")
        tags = [c.mapping_tag for c in self.candidates]
        if len(set(tags)) != len(tags):
            raise ValidationError("duplicate mapping tags in candidate set")

    def __iter__(self):
        return iter(self.candidates)

    def __len__(self):
        return len(self.candidates)

    @property
    def tags(self) -> tuple[str, ...]:
        return tuple(c.mapping_tag for c in self.candidates)

    def get(self, tag: str) -> PeriodicDemand:
        for c in self.candidates:
            if c.mapping_tag == tag.upper():
                return c
        raise KeyError(tag)


def _matrix(Y) -> np.ndarray:
    arr = np.asarray(getattr(Y, "values", Y), dtype=float)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValidationError("mapping needs a demand matrix with at least one period")
    return arr


def raw_statistic(Y, tag: str) -> np.ndarray:
    """The unrounded column statistic."""
    try:
        stat = _STATISTICS[tag.upper()]
    except KeyError:
        raise ValidationError(f"unknown mapping {tag!r}") from None
    return np.asarray(stat(_matrix(Y)), dtype=float)


def exact_total(Y, tag: str) -> Fraction:
    """Sum over commodities of the unrounded statistic, without float error."""
    if tag.upper() == MEAN:
        arr = np.asarray(getattr(Y, "values", Y))
        return Fraction(int(arr.sum()), arr.shape[0])
    return sum((Fraction(float(v)) for v in raw_statistic(Y, tag)), Fraction(0))


def map_periodic(Y, tag: str) -> PeriodicDemand:
    raw = raw_statistic(Y, tag)
    return PeriodicDemand(round_half_up(raw), tag.upper(), raw, exact_total(Y, tag))


def build_candidate_set(Y, tags=DEFAULT_TAGS) -> CandidateSet:
    return CandidateSet(tuple(map_periodic(Y, t) for t in tags))


def save_candidates_csv(cands: CandidateSet, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mapping", "commodity_id", "value"])
        for c in cands:
            for k, v in enumerate(c.values):
                w.writerow([c.mapping_tag, k, int(v)])


def load_candidates_csv(path: str | Path, K: int | None = None) -> CandidateSet:
    rows: dict[str, dict[int, int]] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["mapping", "commodity_id", "value"]:
            raise ValidationError(f"{path}: expected header mapping,commodity_id,value")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                tag, k, v = row[0].strip().upper(), int(row[1]), int(row[2])
            except (ValueError, IndexError):
                raise ValidationError(f"{path}:{lineno}: malformed row {row}") from None
            rows.setdefault(tag, {})[k] = v
    cands = []
    for tag, vals in rows.items():
        n = K if K is not None else max(vals) + 1
        if sorted(vals) != list(range(n)):
            raise ValidationError(f"{path}: mapping {tag} does not cover commodities 0..{n - 1}")
        cands.append(PeriodicDemand(np.array([vals[k] for k in range(n)]), tag))
    return CandidateSet(tuple(cands))
