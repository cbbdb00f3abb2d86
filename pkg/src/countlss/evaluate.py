"""
Quantile forecasts, pinball scoring and the comparison report.

Forecasts are integer quantiles of a single predicted distribution per
row, so they never cross. The benchmark uses empirical quantiles of the
trailing same-weekday history. Loss totals are accumulated with
:func:`math.fsum`, which makes the report independent of forecast order
and of how the work was partitioned.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .count_dist import FAMILY_ORDER, LOG_INV_BOUNDS
from .errors import RangeError
from .features import SalesPanel
from .iwls import FitResult, select_best

M5_PROBS = (0.005, 0.025, 0.165, 0.25, 0.5, 0.75, 0.835, 0.975, 0.995)
BENCHMARK = "benchmark"
COMPOSITE = "HQC-sel"
BENCHMARK_WEEKS = 8
SUMMARY_COLUMNS = ("avg", "improvement_pct", "mean_hqc", "best_hqc_pct", "weighted_best_hqc_pct")


@dataclass(frozen=True)
class QuantileGrid:
    probs: tuple[float, ...] = M5_PROBS

    def __post_init__(self):
        p = tuple(float(x) for x in self.probs)
        if not p:
            raise RangeError("quantile grid is empty")
        if any(not 0.0 < x < 1.0 for x in p):
            raise RangeError("quantile probabilities must lie in (0, 1)")
        if any(b <= a for a, b in zip(p, p[1:])):
            raise RangeError("quantile probabilities must be strictly increasing")
        object.__setattr__(self, "probs", p)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.probs)

    def __len__(self):
        return len(self.probs)


def pinball(y, q, p):
    """Quantile loss ``p (y - q)`` above the quantile and ``(1 - p)(q - y)`` below."""
    y = np.asarray(y, dtype=float)
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise RangeError("p must lie in (0, 1)")
    d = y - q
    out = np.where(d >= 0, p * d, (p - 1.0) * d)
    return float(out) if out.ndim == 0 else out


@dataclass
class QuantileForecast:
    """A batch of forecasts: one row per (day, item, store) key.

    ``q`` has one column per grid probability. ``clamped`` marks rows whose
    predicted parameters hit a link-inversion bound.
    """

    day: np.ndarray
    item: np.ndarray
    store: np.ndarray
    q: np.ndarray
    source: str
    clamped: np.ndarray | None = None

    def __post_init__(self):
        self.day = np.asarray(self.day, dtype=np.int64)
        self.item = np.asarray(self.item, dtype=np.int64)
        self.store = np.asarray(self.store, dtype=np.int64)
        self.q = np.asarray(self.q, dtype=np.int64)
        if self.q.ndim != 2 or self.q.shape[0] != self.day.size:
            raise ValueError("q must have one row per key")
        if self.clamped is None:
            self.clamped = np.zeros(self.day.size, dtype=bool)

    def __len__(self):
        return self.day.size


def _clamp_flags(fit: FitResult, theta) -> np.ndarray:
    flags = np.zeros(theta[0].shape, dtype=bool)
    for t in theta:
        flags |= (t <= LOG_INV_BOUNDS[0] * (1 + 1e-9)) | (t >= LOG_INV_BOUNDS[1] * (1 - 1e-9))
    return flags


def forecast_quantiles(fit: FitResult, rows, grid: QuantileGrid = QuantileGrid(),
                       source: str | None = None) -> QuantileForecast:
    """Quantiles of the predicted distribution for each design row.

    ``rows`` is a :class:`~countlss.features.DesignMatrix` (keys are taken
    from it) or a plain matrix (keys are row numbers).
    """
    X = np.asarray(getattr(rows, "X", rows), dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != len(fit.coefficients[0]):
        raise ValueError(f"rows have {X.shape[1]} columns, the fit has {len(fit.coefficients[0])}")
    names = getattr(rows, "column_names", None)
    if names is not None and fit.column_names and list(names) != list(fit.column_names):
        raise ValueError("design columns do not match the fitted coefficients")
    theta = fit.predict_theta(X)
    q = fit.family.quantile(grid.array, *theta)
    keys = getattr(rows, "keys", None) or {}
    n = X.shape[0]
    return QuantileForecast(keys.get("day", np.arange(n)), keys.get("item", np.zeros(n)),
                            keys.get("store", np.zeros(n)), q,
                            source or fit.family.name, _clamp_flags(fit, theta))


def empirical_quantiles(history, probs) -> np.ndarray:
    """Type-1 empirical quantiles: the smallest order statistic with ``F >= p``."""
    v = np.sort(np.asarray(history))
    if v.size == 0:
        return np.zeros(len(probs), dtype=np.int64)
    k = np.ceil(np.asarray(probs) * v.size - 1e-12).astype(np.int64) - 1
    return v[np.clip(k, 0, v.size - 1)].astype(np.int64)


def _benchmark_history(series, t):
    same = np.arange(t - 7 * BENCHMARK_WEEKS, t, 7)
    same = same[same >= 0]
    if same.size >= BENCHMARK_WEEKS:
        return series[same]
    return series[:t]


def benchmark_forecast(panel: SalesPanel, grid: QuantileGrid, t: int, item: int,
                       store: int) -> QuantileForecast:
    """Empirical quantiles of the last 8 same-weekday values before day ``t``.

    With fewer than 8 such days the whole history before ``t`` is used.
    """
    return benchmark_batch(panel, grid, [t], [item], [store])


def benchmark_batch(panel: SalesPanel, grid: QuantileGrid, days, items, stores) -> QuantileForecast:
    days, items, stores = (np.asarray(a, dtype=np.int64) for a in (days, items, stores))
    if days.size and (days.min() < 0 or days.max() > panel.n_days):
        raise RangeError("benchmark day outside the panel")
    probs = grid.array
    q = np.empty((days.size, probs.size), dtype=np.int64)
    for k, (t, i, j) in enumerate(zip(days, items, stores)):
        q[k] = empirical_quantiles(_benchmark_history(panel.counts[:, i, j], t), probs)
    return QuantileForecast(days, items, stores, q, BENCHMARK)


@dataclass(frozen=True)
class ClusterFits:
    """All family fits of one cluster, with its size for weighted shares."""

    cluster: int
    size: int
    fits: Mapping[str, FitResult]


@dataclass
class EvaluationReport:
    probs: tuple[float, ...]
    sources: list[str]
    per_quantile_loss: dict[str, list[float]]
    avg_loss: dict[str, float]
    improvement_pct: dict[str, float]
    n_forecasts: dict[str, int]
    mean_hqc: dict[str, float] = field(default_factory=dict)
    best_hqc_pct: dict[str, float] = field(default_factory=dict)
    weighted_best_hqc_pct: dict[str, float] = field(default_factory=dict)

    def rows(self) -> list[list]:
        out = []
        for s in self.sources:
            out.append([s] + list(self.per_quantile_loss[s]) + [
                self.avg_loss[s], self.improvement_pct.get(s, math.nan),
                self.mean_hqc.get(s, math.nan), self.best_hqc_pct.get(s, math.nan),
                self.weighted_best_hqc_pct.get(s, math.nan)])
        return out

    def header(self) -> list[str]:
        return ["source"] + [f"q{p:g}" for p in self.probs] + list(SUMMARY_COLUMNS)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            for row in self.rows():
                w.writerow([row[0]] + [_fmt(x) for x in row[1:]])

    def per_quantile_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["source", "prob", "loss"])
            for s in self.sources:
                for p, loss in zip(self.probs, self.per_quantile_loss[s]):
                    w.writerow([s, repr(p), _fmt(loss)])


def _fmt(x) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def _source_order(names):
    fams = [f.value for f in FAMILY_ORDER]
    rank = {name: k for k, name in enumerate(fams + [COMPOSITE, BENCHMARK])}
    return sorted(names, key=lambda s: (rank.get(s, len(rank)), s))


def hqc_summary(cluster_fits: Sequence[ClusterFits]):
    """Mean HQC per family and shares of clusters where a family has minimal HQC.

    The composite row uses the minimal HQC of each cluster.
    """
    mean_hqc, best, weighted = {}, {}, {}
    if not cluster_fits:
        return mean_hqc, best, weighted
    families = _source_order({f for cf in cluster_fits for f in cf.fits})
    total = sum(cf.size for cf in cluster_fits)
    winners = [(select_best(list(cf.fits.values())).family.name, cf.size) for cf in cluster_fits]
    for fam in families:
        vals = [cf.fits[fam].hqc for cf in cluster_fits if fam in cf.fits]
        mean_hqc[fam] = math.fsum(vals) / len(vals)
        best[fam] = 100.0 * sum(w == fam for w, _ in winners) / len(winners)
        weighted[fam] = 100.0 * sum(s for w, s in winners if w == fam) / total
    mean_hqc[COMPOSITE] = math.fsum(min(f.hqc for f in cf.fits.values())
                                    for cf in cluster_fits) / len(cluster_fits)
    return mean_hqc, best, weighted


def evaluate_report(forecasts: Sequence[QuantileForecast], actuals: SalesPanel,
                    grid: QuantileGrid = QuantileGrid(),
                    cluster_fits: Sequence[ClusterFits] = ()) -> EvaluationReport:
    """Mean pinball loss per source and probability, plus the HQC columns."""
    probs = grid.array
    parts: dict[str, list[np.ndarray]] = {}
    for fc in forecasts:
        if fc.q.shape[1] != probs.size:
            raise ValueError(f"{fc.source}: forecast has {fc.q.shape[1]} quantiles, grid has {probs.size}")
        bad = ((fc.day < 0) | (fc.day >= actuals.n_days) | (fc.item < 0)
               | (fc.item >= actuals.n_items) | (fc.store < 0) | (fc.store >= actuals.n_stores))
        if bad.any():
            missing = list(zip(fc.day[bad].tolist(), fc.item[bad].tolist(), fc.store[bad].tolist()))
            raise KeyError(f"{fc.source}: forecast keys missing from actuals: {missing[:10]}")
        y = actuals.counts[fc.day, fc.item, fc.store]
        parts.setdefault(fc.source, []).append(pinball(y[:, None], fc.q, probs[None, :]))
    sources = _source_order(parts)
    per_q, avg, n = {}, {}, {}
    for s in sources:
        L = np.concatenate(parts[s], axis=0)
        n[s] = L.shape[0]
        per_q[s] = [math.fsum(L[:, k]) / n[s] for k in range(probs.size)]
        avg[s] = math.fsum(per_q[s]) / probs.size
    improvement = {}
    if BENCHMARK in avg:
        base = avg[BENCHMARK]
        for s in sources:
            improvement[s] = 100.0 * (1.0 - avg[s] / base) if base > 0 else (
                100.0 if avg[s] == 0 else -math.inf)
    mean_hqc, best, weighted = hqc_summary(cluster_fits)
    return EvaluationReport(grid.probs, sources, per_q, avg, improvement, n, mean_hqc, best, weighted)


__all__ = ["M5_PROBS", "BENCHMARK", "COMPOSITE", "QuantileGrid", "pinball", "QuantileForecast",
           "forecast_quantiles", "empirical_quantiles", "benchmark_forecast", "benchmark_batch",
           "ClusterFits", "EvaluationReport", "hqc_summary", "evaluate_report"]
