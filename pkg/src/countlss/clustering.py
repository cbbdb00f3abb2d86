"""
Item summary features and k-means clustering of items.

Each item is summarized on its store-averaged daily series by seven
numbers (see :class:`ItemFeatureVector`); items are then grouped by
k-means (k-means++ seeding, Lloyd iterations, best of several restarts)
on z-scored features.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSeriesError, RangeError
from .features import LAST_YEAR, LAST_YEAR_WINDOW, SalesPanel

FEATURE_NAMES = ("sample_size", "log_mean", "log_sd", "acf1", "pacf7", "corr_lagged_rm", "zero_prop")


def acf(series, lag: int) -> float:
    """Sample autocorrelation (biased: normalized by n and the overall variance)."""
    x = np.asarray(series, dtype=float)
    if lag < 0 or x.size <= lag:
        raise RangeError(f"lag {lag} needs a series longer than {lag}")
    d = x - x.mean()
    denom = float(d @ d)
    if denom <= 1e-300:
        raise DegenerateSeriesError("constant series has no autocorrelation")
    return float(d[lag:] @ d[:x.size - lag]) / denom


def pacf(series, lag: int) -> float:
    """Partial autocorrelation at ``lag`` by the Durbin-Levinson recursion."""
    if lag < 1:
        raise RangeError("pacf lag must be at least 1")
    r = np.array([acf(series, k) for k in range(lag + 1)])
    phi = np.array([r[1]])
    for k in range(2, lag + 1):
        denom = 1.0 - phi @ r[1:k]
        if abs(denom) < 1e-12:
            raise DegenerateSeriesError("singular Durbin-Levinson recursion")
        pkk = (r[k] - phi @ r[k - 1:0:-1]) / denom
        phi = np.append(phi - pkk * phi[::-1], pkk)
    return float(phi[-1])


@dataclass
class ItemFeatureVector:
    sample_size: float
    log_mean: float
    log_sd: float
    acf1: float
    pacf7: float
    corr_lagged_rm: float
    zero_prop: float
    # names of features replaced by a sentinel
    degenerate: tuple[str, ...] = field(default=())

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES])


def _safe(fn, *args):
    try:
        value = fn(*args)
    except DegenerateSeriesError:
        return None
    return value if np.isfinite(value) else None


def _lagged_rm_corr(full, start):
    """Correlation of y_t with the 7-day mean ending 364 days earlier."""
    t = np.arange(max(start, LAST_YEAR + LAST_YEAR_WINDOW), full.size)
    if t.size < 3:
        return None
    csum = np.concatenate([[0.0], np.cumsum(full)])
    end = t - LAST_YEAR
    lagged = (csum[end + 1] - csum[end - LAST_YEAR_WINDOW]) / (LAST_YEAR_WINDOW + 1)
    a = full[t]
    if a.std() == 0 or lagged.std() == 0:
        return None
    return float(np.corrcoef(a, lagged)[0, 1])


def compute_item_features(panel: SalesPanel, item: int) -> ItemFeatureVector:
    """Seven summary features of one item's store-averaged series.

    Statistics use the training window (from ``panel.window_start``);
    the lagged rolling mean may reach into the earlier history. Undefined
    statistics are reported as NaN (log features) or 0 (correlations)
    and listed in ``degenerate``.
    """
    if not 0 <= item < panel.n_items:
        raise RangeError(f"item index {item} out of range")
    full = panel.counts[:, item, :].mean(axis=1)
    y = full[panel.window_start:]
    bad = []
    nonzero = np.flatnonzero(y > 0)
    sample_size = float(y.size - nonzero[0]) if nonzero.size else 0.0
    mean = y.mean()
    sd = y.std(ddof=1) if y.size > 1 else 0.0
    with np.errstate(divide="ignore"):
        log_mean = float(np.log(mean)) if mean > 0 else np.nan
        log_sd = float(np.log(sd)) if sd > 0 else np.nan
    if np.isnan(log_mean):
        bad.append("log_mean")
    if np.isnan(log_sd):
        bad.append("log_sd")
    stats = {}
    for name, value in (("acf1", _safe(acf, y, 1)),
                        ("pacf7", _safe(pacf, y, 7) if y.size > 7 else None),
                        ("corr_lagged_rm", _lagged_rm_corr(full, panel.window_start))):
        if value is None:
            bad.append(name)
            value = 0.0
        stats[name] = value
    return ItemFeatureVector(sample_size, log_mean, log_sd, stats["acf1"], stats["pacf7"],
                             stats["corr_lagged_rm"], float(np.mean(y == 0)), tuple(bad))


def feature_matrix(panel: SalesPanel) -> tuple[np.ndarray, list[ItemFeatureVector]]:
    """Feature matrix (items x 7) with sentinels in place of undefined log features.

    A missing log mean or log sd becomes the column minimum over the
    defined entries minus one.
    """
    vectors = [compute_item_features(panel, i) for i in range(panel.n_items)]
    F = np.array([v.as_array() for v in vectors])
    for j in (1, 2):
        col = F[:, j]
        ok = np.isfinite(col)
        col[~ok] = col[ok].min() - 1.0 if ok.any() else 0.0
    return F, vectors


@dataclass
class ClusterAssignment:
    labels: np.ndarray
    centroids: np.ndarray
    G: int
    seed: int
    inertia: float = float("nan")
    objective_trace: list[float] = field(default_factory=list)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.G)

    def members(self, g: int) -> np.ndarray:
        return np.flatnonzero(self.labels == g)


def standardize_columns(F) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    sd = F.std(axis=0)
    Z = F - F.mean(axis=0)
    Z[:, sd > 0] /= sd[sd > 0]
    Z[:, sd == 0] = 0.0
    return Z


def _sq_dists(Z, C):
    return ((Z[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _kmeans_pp(Z, G, rng):
    n = Z.shape[0]
    centers = [int(rng.integers(n))]
    d2 = ((Z - Z[centers[0]]) ** 2).sum(axis=1)
    for _ in range(1, G):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            nxt = int(rng.choice(np.setdiff1d(np.arange(n), centers)))
        centers.append(nxt)
        d2 = np.minimum(d2, ((Z - Z[nxt]) ** 2).sum(axis=1))
    return Z[centers].copy()


def _lloyd(Z, C, max_iter):
    n, G = Z.shape[0], C.shape[0]
    labels = None
    trace = []
    for _ in range(max_iter):
        D = _sq_dists(Z, C)
        new = np.argmin(D, axis=1)
        obj = float(D[np.arange(n), new].sum())
        if trace and obj > trace[-1] * (1 + 1e-12) + 1e-12:
            raise RuntimeError(f"k-means objective increased: {trace[-1]} -> {obj}")
        trace.append(obj)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for g in range(G):
            pts = labels == g
            if pts.any():
                C[g] = Z[pts].mean(axis=0)
            else:
                # re-seed an empty cluster at the point farthest from its centroid
                far = int(np.argmax(D[np.arange(n), labels]))
                C[g] = Z[far]
                D[far, :] = 0.0
    return labels, C, trace


def _fill_empty(Z, labels, C, G):
    labels = labels.copy()
    for g in range(G):
        if np.any(labels == g):
            continue
        sizes = np.bincount(labels, minlength=G)
        cand = np.flatnonzero(sizes[labels] > 1)
        d = ((Z[cand] - C[labels[cand]]) ** 2).sum(axis=1)
        pick = cand[int(np.argmax(d))]
        labels[pick] = g
        C[g] = Z[pick]
    return labels


def kmeans(features, G: int, seed: int = 0, n_init: int = 10, max_iter: int = 300) -> ClusterAssignment:
    """Cluster rows of ``features`` into ``G`` groups.

    Features are z-scored per column first. Labels are renumbered in
    order of first appearance, so equal seeds give identical output.
    """
    F = np.asarray(features, dtype=float)
    n = F.shape[0]
    if G <= 0 or G > n:
        raise RangeError(f"G must be in 1..{n}, got {G}")
    Z = standardize_columns(F)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        labels, C, trace = _lloyd(Z, _kmeans_pp(Z, G, rng), max_iter)
        if best is None or trace[-1] < best[2][-1]:
            best = (labels, C, trace)
    labels, C, trace = best
    labels = _fill_empty(Z, labels, C, G)
    order = {}
    for g in labels:
        order.setdefault(int(g), len(order))
    labels = np.array([order[int(g)] for g in labels])
    centroids = np.array([F[labels == g].mean(axis=0) for g in range(G)])
    inertia = float(sum(((Z[labels == g] - Z[labels == g].mean(axis=0)) ** 2).sum() for g in range(G)))
    return ClusterAssignment(labels, centroids, G, seed, inertia, trace)


def cluster_table(panel: SalesPanel, assignment: ClusterAssignment, F) -> list[dict]:
    """Rows of ``clusters.csv``: item id, cluster and the seven features."""
    rows = []
    for i, item in enumerate(panel.item_ids):
        row = {"item_id": item, "cluster": int(assignment.labels[i])}
        row.update({name: float(F[i, j]) for j, name in enumerate(FEATURE_NAMES)})
        rows.append(row)
    return rows


__all__ = ["FEATURE_NAMES", "ItemFeatureVector", "ClusterAssignment", "acf", "pacf",
           "compute_item_features", "feature_matrix", "kmeans", "standardize_columns",
           "cluster_table"]
