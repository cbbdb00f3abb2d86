"""
Sales panels and the autoregressive design matrix.

A :class:`SalesPanel` holds unit sales ``counts[t, i, j]`` for day ``t``,
item ``i`` and store ``j``. :func:`build_training_set` turns the panel
restricted to one cluster of items into one-step-ahead regression rows:
the target is ``Y[t+h, i, j]`` and every regressor only uses days up to
``t``.

Column order (``j`` runs over the four demand series ``is`` = item in
store, ``store`` = cluster mean in the store, ``item`` = mean of the
item over stores, ``all`` = overall cluster mean)::

    intercept
    lag_<j>_<k>     k in 0, 1, 6, 363       value at day t-k
    rm_<j>_<k>      k in 6, 13, 27, 55      mean of days t-k .. t
    ly_<j>                                  mean of days t-370 .. t-364
    dow_Mon, dow_Fri, dow_Sat, dow_Sun      weekday of the target day
    item_<id> ...                           one per cluster item
    store_<id> ...                          one per store

All dummies are one-hot without a reference level. Only the intercept
is unpenalized.
"""
from __future__ import annotations

import datetime as dt
import os
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import EmptyClusterError, FormatError, RangeError

LAGS = (0, 1, 6, 7 * 52 - 1)
ROLLING = (6, 13, 27, 55)
LAST_YEAR = 7 * 52
LAST_YEAR_WINDOW = 6
# days t-k that a row at day t reaches back to
MAX_BACK = LAST_YEAR + LAST_YEAR_WINDOW
SERIES = ("is", "store", "item", "all")
WEEKDAYS = {0: "Mon", 4: "Fri", 5: "Sat", 6: "Sun"}


@dataclass
class SalesPanel:
    counts: np.ndarray
    dates: np.ndarray
    item_ids: list[str]
    store_ids: list[str]
    day_labels: list[str] = field(default_factory=list)
    # first day index usable as a training target
    window_start: int = 0

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.counts.ndim != 3:
            raise FormatError("counts must be a (days, items, stores) array")
        if not np.issubdtype(self.counts.dtype, np.integer):
            if not np.all(self.counts == np.round(self.counts)):
                raise FormatError("counts must be integers")
            self.counts = self.counts.astype(np.int64)
        if np.any(self.counts < 0):
            raise FormatError("counts must be nonnegative")
        self.dates = np.asarray(self.dates, dtype="datetime64[D]")
        if self.dates.shape != (self.counts.shape[0],):
            raise FormatError("one date per day is required")
        if self.dates.size > 1 and not np.all(np.diff(self.dates) == np.timedelta64(1, "D")):
            raise FormatError("dates must be consecutive days")
        self.item_ids = [str(x) for x in self.item_ids]
        self.store_ids = [str(x) for x in self.store_ids]
        if len(self.item_ids) != self.counts.shape[1] or len(self.store_ids) != self.counts.shape[2]:
            raise FormatError("item/store labels do not match the counts array")
        if not self.day_labels:
            self.day_labels = [f"d_{k + 1}" for k in range(self.n_days)]

    @property
    def n_days(self) -> int:
        return self.counts.shape[0]

    @property
    def n_items(self) -> int:
        return self.counts.shape[1]

    @property
    def n_stores(self) -> int:
        return self.counts.shape[2]

    def weekdays(self) -> np.ndarray:
        """Day of week per day, Monday = 0."""
        return ((self.dates.astype(np.int64) + 3) % 7).astype(np.int64)

    def item_index(self, items) -> np.ndarray:
        lookup = {name: k for k, name in enumerate(self.item_ids)}
        out = []
        for it in items:
            if isinstance(it, (int, np.integer)):
                if not 0 <= it < self.n_items:
                    raise RangeError(f"item index {it} out of range")
                out.append(int(it))
            else:
                if it not in lookup:
                    raise RangeError(f"unknown item {it!r}")
                out.append(lookup[it])
        return np.array(out, dtype=np.int64)

    def truncate(self, n_days: int) -> "SalesPanel":
        """The first ``n_days`` days (used to hold out the end of the data)."""
        return replace(self, counts=self.counts[:n_days], dates=self.dates[:n_days],
                       day_labels=self.day_labels[:n_days],
                       window_start=min(self.window_start, n_days))


def load_panel(sales_csv: str | os.PathLike, calendar_csv: str | os.PathLike) -> SalesPanel:
    """Read M5 wide-format sales and the matching calendar."""
    for path in (sales_csv, calendar_csv):
        if not os.path.exists(path):
            raise FileNotFoundError(f"no such file: {path}")
    cal = pd.read_csv(calendar_csv, dtype=str)
    missing = {"d", "date", "weekday"} - set(cal.columns)
    if missing:
        raise FormatError(f"{calendar_csv}: missing calendar columns {sorted(missing)}")
    sales = pd.read_csv(sales_csv)
    missing = {"item_id", "store_id"} - set(sales.columns)
    if missing:
        raise FormatError(f"{sales_csv}: missing columns {sorted(missing)}")
    day_cols = [c for c in sales.columns if isinstance(c, str) and c.startswith("d_")]
    if not day_cols:
        raise FormatError(f"{sales_csv}: no d_<k> sales columns")
    cal_index = {d: k for k, d in enumerate(cal["d"])}
    unknown = [c for c in day_cols if c not in cal_index]
    if unknown:
        raise FormatError(f"{sales_csv}: day columns not in calendar: {unknown[:5]}")
    day_cols = sorted(day_cols, key=cal_index.__getitem__)
    positions = [cal_index[c] for c in day_cols]
    if positions != list(range(positions[0], positions[0] + len(positions))):
        raise FormatError(f"{sales_csv}: day columns are not consecutive calendar days")
    values = sales[day_cols]
    for col in day_cols:
        s = values[col]
        if not pd.api.types.is_numeric_dtype(s):
            num = pd.to_numeric(s, errors="coerce")
            bad = num.isna() | (num != np.round(num))
        else:
            bad = s.isna() | (s != np.round(s))
        bad = bad | (pd.to_numeric(s, errors="coerce") < 0)
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise FormatError(
                f"{sales_csv}: invalid sales value {s.iloc[row]!r} at row {row + 2}, column {col}")
    data = values.to_numpy(dtype=np.int64)
    item_ids = list(dict.fromkeys(sales["item_id"].astype(str)))
    store_ids = list(dict.fromkeys(sales["store_id"].astype(str)))
    ii = pd.Index(item_ids).get_indexer(sales["item_id"].astype(str))
    jj = pd.Index(store_ids).get_indexer(sales["store_id"].astype(str))
    seen = np.zeros((len(item_ids), len(store_ids)), dtype=np.int64)
    np.add.at(seen, (ii, jj), 1)
    if seen.max() > 1:
        raise FormatError(f"{sales_csv}: duplicated item/store rows")
    if seen.min() == 0:
        i, j = np.argwhere(seen == 0)[0]
        raise FormatError(f"{sales_csv}: no row for item {item_ids[i]} in store {store_ids[j]}")
    counts = np.zeros((len(day_cols), len(item_ids), len(store_ids)), dtype=np.int64)
    counts[:, ii, jj] = data.T
    dates = pd.to_datetime(cal["date"].iloc[positions[0]:positions[0] + len(positions)])
    return SalesPanel(counts, dates.to_numpy().astype("datetime64[D]"), item_ids, store_ids,
                      day_labels=day_cols)


def restrict_window(panel: SalesPanel, days: int = 730, history: int = MAX_BACK + 1) -> SalesPanel:
    """Keep the trailing ``days`` target days plus up to ``history`` earlier days.

    The earlier days only feed lagged features; ``window_start`` marks the
    first target day of the returned panel.
    """
    if days > panel.n_days:
        raise RangeError(f"window of {days} days exceeds the {panel.n_days} available")
    if days <= 0:
        raise RangeError("window must be positive")
    first_target = panel.n_days - days
    start = max(0, first_target - history)
    return replace(panel, counts=panel.counts[start:], dates=panel.dates[start:],
                   day_labels=panel.day_labels[start:],
                   window_start=max(first_target, panel.window_start) - start)


def rolling_mean(series, k1: int, k2: int, t: int) -> float:
    """Mean of ``series[t-k2 .. t-k1]``."""
    series = np.asarray(series, dtype=float)
    if k1 < 0 or k2 < k1 or t - k2 < 0 or t >= series.size:
        raise RangeError(f"window {k1}:{k2} at t={t} does not fit a series of length {series.size}")
    return float(series[t - k2:t - k1 + 1].sum() / (k2 - k1 + 1))


@dataclass
class AggregateSeries:
    """Within-cluster demand series; ``*_total`` are integer sums."""

    item_store: np.ndarray     # (T, K, S)
    store_total: np.ndarray    # (T, S) summed over cluster items
    item_total: np.ndarray     # (T, K) summed over stores
    overall_total: np.ndarray  # (T,)

    @property
    def n_items(self):
        return self.item_store.shape[1]

    @property
    def n_stores(self):
        return self.item_store.shape[2]

    @property
    def store_avg(self):
        return self.store_total / self.n_items

    @property
    def item_avg(self):
        return self.item_total / self.n_stores

    @property
    def overall_avg(self):
        return self.overall_total / (self.n_items * self.n_stores)


def aggregate_series(panel: SalesPanel, items) -> AggregateSeries:
    idx = panel.item_index(items)
    if idx.size == 0:
        raise EmptyClusterError("cluster has no items")
    C = panel.counts[:, idx, :].astype(np.int64)
    return AggregateSeries(C, C.sum(axis=1), C.sum(axis=2), C.sum(axis=(1, 2)))


@dataclass
class DesignMatrix:
    X: np.ndarray
    target: np.ndarray
    column_names: list[str]
    penalty_mask: np.ndarray
    column_groups: dict[str, tuple[int, int]] = field(default_factory=dict)
    # per-row target day, panel item index and store index
    keys: dict[str, np.ndarray] = field(default_factory=dict)
    horizon: int = 1

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @classmethod
    def from_arrays(cls, X, target, column_names=None, penalty_mask=None):
        """Wrap a plain matrix whose first column is the intercept."""
        X = np.asarray(X, dtype=float)
        names = list(column_names) if column_names is not None else ["intercept"] + [
            f"x{j}" for j in range(1, X.shape[1])]
        if penalty_mask is None:
            penalty_mask = np.ones(X.shape[1], dtype=bool)
            penalty_mask[0] = False
        return cls(X, np.asarray(target), names, np.asarray(penalty_mask, dtype=bool))

    def subset(self, rows) -> "DesignMatrix":
        rows = np.asarray(rows)
        return replace(self, X=self.X[rows], target=self.target[rows],
                       keys={k: v[rows] for k, v in self.keys.items()})

    def to_csv(self, path):
        frame = pd.DataFrame(self.X, columns=self.column_names)
        frame.insert(0, "target", self.target)
        frame.to_csv(path, index=False)


def column_layout(item_ids: Sequence[str], store_ids: Sequence[str]):
    """Canonical column names and group ranges for a cluster."""
    names = ["intercept"]
    groups = {}

    def block(group, cols):
        groups[group] = (len(names), len(names) + len(cols))
        names.extend(cols)

    block("lagged_demand", [f"lag_{s}_{k}" for s in SERIES for k in LAGS])
    block("rolling_mean", [f"rm_{s}_{k}" for s in SERIES for k in ROLLING])
    block("last_year_level", [f"ly_{s}" for s in SERIES])
    block("weekday", [f"dow_{WEEKDAYS[k]}" for k in sorted(WEEKDAYS)])
    block("item", [f"item_{i}" for i in item_ids])
    block("store", [f"store_{j}" for j in store_ids])
    return names, groups


def design_rows(panel: SalesPanel, cluster_items, target_days, h: int = 1) -> DesignMatrix:
    """Regressor rows for the given target days (targets may lie past the data).

    Unknown targets (day beyond the panel) are set to -1.
    """
    if h < 1:
        raise RangeError("horizon must be at least 1")
    agg = aggregate_series(panel, cluster_items)
    idx = panel.item_index(cluster_items)
    target_days = np.asarray(target_days, dtype=np.int64)
    t = target_days - h
    if t.size and (t.min() < MAX_BACK or t.max() >= panel.n_days):
        raise RangeError(
            f"target days need {MAX_BACK + h} days of history and features inside the panel")
    K, S = agg.n_items, agg.n_stores
    names, groups = column_layout([panel.item_ids[i] for i in idx], panel.store_ids)
    n_t = t.size
    nrow = n_t * K * S
    X = np.empty((nrow, len(names)))
    X[:, 0] = 1.0

    # integer totals per series and their divisors, broadcast to (n_t, K, S)
    totals = {
        "is": (agg.item_store, 1),
        "store": (agg.store_total[:, None, :], K),
        "item": (agg.item_total[:, :, None], S),
        "all": (agg.overall_total[:, None, None], K * S),
    }

    def put(col, values):
        X[:, names.index(col)] = np.broadcast_to(values, (n_t, K, S)).reshape(-1)

    for s, (tot, div) in totals.items():
        csum = np.concatenate([np.zeros((1,) + tot.shape[1:], dtype=np.int64), np.cumsum(tot, axis=0)])
        for k in LAGS:
            put(f"lag_{s}_{k}", tot[t - k] / div)
        for k in ROLLING:
            put(f"rm_{s}_{k}", (csum[t + 1] - csum[t - k]) / ((k + 1) * div))
        ly_end = t - LAST_YEAR
        put(f"ly_{s}", (csum[ly_end + 1] - csum[ly_end - LAST_YEAR_WINDOW])
            / ((LAST_YEAR_WINDOW + 1) * div))

    wd = ((panel.dates[0].astype(np.int64) + target_days + 3) % 7)
    for k, label in WEEKDAYS.items():
        put(f"dow_{label}", (wd == k).astype(float)[:, None, None])
    lo = groups["item"][0]
    X[:, lo:lo + K] = np.tile(np.repeat(np.eye(K), S, axis=0), (n_t, 1))
    lo = groups["store"][0]
    X[:, lo:lo + S] = np.tile(np.eye(S), (n_t * K, 1))

    target = np.full((n_t, K, S), -1, dtype=np.int64)
    known = target_days < panel.n_days
    target[known] = agg.item_store[target_days[known]]
    keys = {
        "day": np.repeat(target_days, K * S),
        "item": np.tile(np.repeat(idx, S), n_t),
        "store": np.tile(np.arange(S), n_t * K),
    }
    mask = np.ones(len(names), dtype=bool)
    mask[0] = False
    return DesignMatrix(X, target.reshape(-1), names, mask, groups, keys, h)


def usable_target_days(panel: SalesPanel, h: int = 1, last: int | None = None) -> np.ndarray:
    """Target days with full feature history inside the training window."""
    first = max(panel.window_start, MAX_BACK + h)
    stop = panel.n_days if last is None else min(last, panel.n_days)
    return np.arange(first, stop)


def build_training_set(panel: SalesPanel, cluster_items, h: int = 1,
                       last_target: int | None = None) -> DesignMatrix:
    """One row per (target day, item, store) with complete history.

    ``last_target`` (exclusive) cuts off target days, e.g. to hold out the
    end of the window for evaluation.
    """
    if len(cluster_items) == 0:
        raise EmptyClusterError("cluster has no items")
    if h < 1:
        raise RangeError("horizon must be at least 1")
    days = usable_target_days(panel, h, last_target)
    if days.size == 0:
        raise RangeError(
            f"panel of {panel.n_days} days leaves no target day with {MAX_BACK + h} days of history")
    return design_rows(panel, cluster_items, days, h)
