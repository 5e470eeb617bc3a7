"""Multistep demand forecasts (CONSTANT and AR), accuracy metrics and
lagged-correlation diagnostics.

Commodities are treated independently. AR models are fit by ordinary least
squares on the mean-centred series; forecasts are clamped at zero and rounded
half-up so they can be used directly as container demand.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .core import DemandMatrix, ValidationError, round_half_up

log = logging.getLogger(__name__)

CONSTANT, AR = "constant", "ar"
MAX_AUTO_ORDER = 10
MIN_EXTRA_SAMPLES = 10   # a fit of order p needs p + 10 observations
RIDGE = 1e-8


@dataclass(frozen=True, eq=False)
class ARModel:
    commodity: int
    order_p: int
    coefficients: np.ndarray
    mean_offset: float
    regularized: bool = False
    aic: float | None = None

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float).copy()
        if self.order_p < 1 or coef.shape != (self.order_p,):
            raise ValidationError("AR order must be >= 1 and match the coefficient count")
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)


@dataclass(frozen=True, eq=False)
class ForecastSet:
    """Forecasts for periods origin+1 .. origin+horizon."""

    origin_period: int
    horizon: int
    values: np.ndarray
    raw: np.ndarray | None = None   # before clamping and rounding

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2 or v.shape[0] != self.horizon:
            raise ValidationError("forecast values must have one row per horizon step")
        if np.any(v < 0) or np.any(v != np.round(v)):
            raise ValidationError("forecasts must be nonnegative integers")
        v = v.astype(np.int64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def as_matrix(self) -> DemandMatrix:
        return DemandMatrix(self.values)


def _history(history) -> np.ndarray:
    arr = np.asarray(getattr(history, "values", history), dtype=float)
    if arr.ndim != 2:
        raise ValidationError("history must be a periods x commodities matrix")
    if arr.shape[0] == 0:
        raise ValidationError("history is empty")
    return arr


def forecast_constant(history, T: int, origin_period: int | None = None) -> ForecastSet:
    """Repeat the last observed period T times."""
    h = _history(history)
    if T < 1:
        raise ValidationError("horizon must be >= 1")
    vals = np.repeat(h[-1:], T, axis=0)
    origin = h.shape[0] if origin_period is None else origin_period
    return ForecastSet(origin, T, vals, vals.astype(float))


def _lags(x: np.ndarray, p: int, start: int) -> tuple[np.ndarray, np.ndarray]:
    """Targets x[start:] and their p lags as columns (lag 1 first)."""
    n = len(x)
    X = np.column_stack([x[start - i:n - i] for i in range(1, p + 1)])
    return x[start:], X


def _ols(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, bool]:
    p = X.shape[1]
    if np.linalg.matrix_rank(X) < p:
        coef = np.linalg.solve(X.T @ X + RIDGE * np.eye(p), X.T @ y)
        return coef, True
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return coef, False


def fit_ar(series, p: int | str = "auto", *, mean: float | None = None,
           max_order: int = MAX_AUTO_ORDER, commodity: int = 0) -> ARModel:
    """Least-squares AR(p) fit on the centred series.

    ``p="auto"`` picks the order in 1..max_order with the lowest AIC, all
    orders being scored on the same effective sample. ``mean`` overrides the
    sample mean used for centring.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValidationError("series must be one-dimensional")
    n = len(x)
    mu = float(x.mean()) if mean is None else float(mean)
    if n == 0:
        raise ValidationError("series is empty")
    xc = x - mu
    aic = None
    if p == "auto":
        top = min(max_order, n - MIN_EXTRA_SAMPLES)
        if top < 1:
            raise ValidationError(f"series of length {n} is too short for any AR order")
        y, _ = _lags(xc, top, top)
        n_eff = len(y)
        floor = 1e-10 * float(np.mean(xc ** 2)) + 1e-300
        best = None
        for order in range(1, top + 1):
            _, X = _lags(xc, order, top)
            coef, _ = _ols(X, y)
            rss = float(np.sum((y - X @ coef) ** 2))
            score = n_eff * math.log(max(rss / n_eff, floor)) + 2 * order
            if best is None or score < best[0] - 1e-9:
                best = (score, order)
        aic, p = best
    p = int(p)
    if p < 1:
        raise ValidationError("AR order must be >= 1")
    if n < p + MIN_EXTRA_SAMPLES:
        raise ValidationError(f"AR({p}) needs at least {p + MIN_EXTRA_SAMPLES} observations, got {n}")
    y, X = _lags(xc, p, p)
    coef, ridge = _ols(X, y)
    if ridge:
        log.info("commodity %d: singular AR(%d) design, ridge fallback used", commodity, p)
    return ARModel(commodity, p, coef, mu, ridge, aic)


def ar_recursion(model: ARModel, recent, T: int) -> np.ndarray:
    """Unclamped, unrounded T-step forecasts; ``recent`` holds observed values
    with the newest last."""
    p = model.order_p
    recent = np.asarray(recent, dtype=float)
    if len(recent) < p:
        raise ValidationError(f"AR({p}) needs {p} past values, got {len(recent)}")
    buf = list(recent[-p:] - model.mean_offset)
    out = np.empty(T)
    for t in range(T):
        nxt = sum(model.coefficients[i] * buf[-1 - i] for i in range(p))
        buf.append(nxt)
        out[t] = nxt + model.mean_offset
    return out


def forecast_ar(models: Sequence[ARModel | None], history, T: int,
                origin_period: int | None = None) -> ForecastSet:
    """Per-commodity AR forecasts; a ``None`` model means repeat the last value."""
    h = _history(history)
    K = h.shape[1]
    if len(models) != K:
        raise ValidationError(f"need one model per commodity ({K}), got {len(models)}")
    raw = np.empty((T, K))
    for k, m in enumerate(models):
        if m is None:
            raw[:, k] = h[-1, k]
            continue
        if m.commodity != k:
            raise ValidationError(f"model for commodity {m.commodity} given at position {k}")
        raw[:, k] = ar_recursion(m, h[:, k], T)
    vals = round_half_up(np.maximum(raw, 0.0))
    origin = h.shape[0] if origin_period is None else origin_period
    return ForecastSet(origin, T, vals, raw)


def fit_ar_models(history, p: int | str = "auto") -> list[ARModel | None]:
    """One AR model per commodity; too-short series get ``None`` (CONSTANT)."""
    h = _history(history)
    out: list[ARModel | None] = []
    need = (1 if p == "auto" else int(p)) + MIN_EXTRA_SAMPLES
    for k in range(h.shape[1]):
        if h.shape[0] < need:
            log.warning("commodity %d: %d periods of history, below %d; using CONSTANT",
                        k, h.shape[0], need)
            out.append(None)
        else:
            out.append(fit_ar(h[:, k], p, commodity=k))
    return out


def make_forecast(history, T: int, model: str = AR, order: int | str = "auto") -> ForecastSet:
    """Fit on the whole history and forecast T periods ahead."""
    h = _history(history)
    if model == CONSTANT:
        return forecast_constant(h, T)
    if model != AR:
        raise ValidationError(f"unknown forecast model {model!r}")
    return forecast_ar(fit_ar_models(h, order), h, T)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _stack(items) -> np.ndarray:
    if isinstance(items, np.ndarray):
        arr = items.astype(float)
    elif hasattr(items, "values") and not isinstance(items, (list, tuple)):
        arr = np.asarray(items.values, dtype=float)
    else:
        arr = np.stack([np.asarray(getattr(i, "values", i), dtype=float) for i in items]) \
            if len(items) else np.empty((0, 0, 0))
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValidationError("expected origins x steps x commodities")
    return arr


def wape(actual, forecast) -> np.ndarray:
    """Per-commodity WAPE in percent over all origins and steps (NaN when the
    actual total is zero)."""
    a, f = _stack(actual), _stack(forecast)
    if a.shape != f.shape:
        raise ValidationError(f"shape mismatch {a.shape} vs {f.shape}")
    if a.shape[0] * a.shape[1] == 0:
        raise ValidationError("empty test set")
    num = np.abs(a - f).sum(axis=(0, 1))
    den = a.sum(axis=(0, 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, 100.0 * num / np.where(den > 0, den, 1.0), np.nan)


def rmse(actual, forecast) -> np.ndarray:
    a, f = _stack(actual), _stack(forecast)
    if a.shape != f.shape:
        raise ValidationError(f"shape mismatch {a.shape} vs {f.shape}")
    if a.shape[0] * a.shape[1] == 0:
        raise ValidationError("empty test set")
    return np.sqrt(((a - f) ** 2).mean(axis=(0, 1)))


@dataclass(frozen=True)
class MetricsReport:
    wape: tuple[float, ...]
    rmse: tuple[float, ...]
    origins: int
    horizon: int

    @property
    def undefined_wape(self) -> int:
        return sum(1 for w in self.wape if math.isnan(w))

    @property
    def mean_wape(self) -> float:
        vals = [w for w in self.wape if not math.isnan(w)]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def mean_rmse(self) -> float:
        return float(np.mean(self.rmse))

    def as_dict(self) -> dict:
        def clean(v):
            return None if math.isnan(v) else v
        return {
            "origins": self.origins, "horizon": self.horizon,
            "mean_wape": clean(self.mean_wape), "mean_rmse": self.mean_rmse,
            "undefined_wape": self.undefined_wape,
            "wape": [clean(w) for w in self.wape], "rmse": list(self.rmse),
        }


def split_periods(n: int, train: float = 0.80, validation: float = 0.05) -> tuple[int, int]:
    """End indices (exclusive) of the training and validation segments."""
    if not (0 < train and 0 <= validation and train + validation < 1):
        raise ValidationError("split fractions must satisfy 0 < train, train + validation < 1")
    train_end = int(round(n * train))
    val_end = int(round(n * (train + validation)))
    if train_end < 1 or val_end >= n:
        raise ValidationError(f"{n} periods are too few for the requested split")
    return train_end, val_end


def backtest(Y, T: int, model: str = AR, order: int | str = "auto",
             train: float = 0.80, validation: float = 0.05) -> MetricsReport:
    """Fit on the training segment, forecast from every test origin."""
    y = _history(Y)
    n = y.shape[0]
    train_end, val_end = split_periods(n, train, validation)
    origins = list(range(val_end, n - T + 1))
    if not origins:
        raise ValidationError("test segment shorter than the forecast horizon")
    models = fit_ar_models(y[:train_end], order) if model == AR else None
    actual, fc = [], []
    for t0 in origins:
        hist = y[:t0]
        if model == CONSTANT:
            f = forecast_constant(hist, T, t0)
        elif model == AR:
            f = forecast_ar(models, hist, T, t0)
        else:
            raise ValidationError(f"unknown forecast model {model!r}")
        fc.append(f.values)
        actual.append(y[t0:t0 + T])
    return MetricsReport(tuple(float(v) for v in wape(actual, fc)),
                         tuple(float(v) for v in rmse(actual, fc)), len(origins), T)


# ---------------------------------------------------------------------------
# correlation diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PearsonResult:
    r: float
    p_value: float
    significant: bool
    defined: bool = True
    n: int = 0


def lagged_pearson(series_a, series_b, lag: int = 0, level: float = 0.95) -> PearsonResult:
    """Correlation of a[t] with b[t + lag] and a two-sided t-test."""
    a = np.asarray(series_a, dtype=float)
    b = np.asarray(series_b, dtype=float)
    if lag < 0:
        raise ValidationError("lag must be >= 0")
    n = min(len(a), len(b) - lag)
    if n < 3:
        raise ValidationError("fewer than 3 overlapping observations")
    a, b = a[:n], b[lag:lag + n]
    da, db = a - a.mean(), b - b.mean()
    sa, sb = math.sqrt(float(da @ da)), math.sqrt(float(db @ db))
    if sa == 0 or sb == 0:
        return PearsonResult(math.nan, math.nan, False, False, n)
    r = max(-1.0, min(1.0, float(da @ db) / (sa * sb)))
    if abs(r) == 1.0 or n == 2:
        p = 0.0
    else:
        t = r * math.sqrt((n - 2) / (1 - r * r))
        p = float(2 * stats.t.sf(abs(t), n - 2))
    return PearsonResult(r, p, p < 1 - level, True, n)


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------

def save_forecast_csv(fs: ForecastSet, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["origin_period", "step", "commodity_id", "value"])
        for t in range(fs.horizon):
            for k in range(fs.values.shape[1]):
                w.writerow([fs.origin_period, t + 1, k, int(fs.values[t, k])])


def load_forecast_csv(path: str | Path) -> ForecastSet:
    cells: dict[tuple[int, int], int] = {}
    origins = set()
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["origin_period", "step", "commodity_id", "value"]:
            raise ValidationError(f"{path}: expected header origin_period,step,commodity_id,value")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                o, t, k, v = (int(c) for c in row)
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: malformed row {row}") from None
            origins.add(o)
            cells[(t, k)] = v
    if len(origins) != 1:
        raise ValidationError(f"{path}: expected a single forecast origin")
    T = max(t for t, _ in cells)
    K = max(k for _, k in cells) + 1
    vals = np.zeros((T, K), dtype=np.int64)
    for (t, k), v in cells.items():
        vals[t - 1, k] = v
    if len(cells) != T * K:
        raise ValidationError(f"{path}: incomplete forecast grid")
    return ForecastSet(origins.pop(), T, vals)
