"""
Pipeline stages: diagnostics, clustering, fitting, evaluation, forecasting.

Stages communicate through files under one work directory::

    workdir/diagnostics/<hash>_iod.csv, <hash>_zerofit.csv
    workdir/clusters/<hash>_clusters.csv
    workdir/fits/<hash>_c<cluster>_<family>.json, <hash>_log.jsonl
    workdir/reports/<hash>_report.csv, <hash>_per_quantile.csv

Each stage hashes the configuration keys it depends on (plus those of the
stages it reads from), so artifacts of a changed configuration are never
picked up silently. The worker count never enters a hash.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import clustering, diagnostics
from .count_dist import FAMILY_ORDER, make_family
from .errors import ConvergenceError, FormatError, MissingArtifactError, NumericalError, RangeError
from .evaluate import (COMPOSITE, ClusterFits, QuantileGrid, benchmark_batch, evaluate_report,
                       forecast_quantiles)
from .features import (SalesPanel, build_training_set, design_rows, load_panel, restrict_window)
from .iwls import IC_NAMES, FitConfig, FitResult, rs_backfit, select_best

log = logging.getLogger("countlss")

ALL_FAMILIES = tuple(f.value for f in FAMILY_ORDER)


@dataclass
class PipelineConfig:
    sales_csv: str = "sales_train_evaluation.csv"
    calendar_csv: str = "calendar.csv"
    workdir: str = "work"
    window_days: int = 730
    n_clusters: int = 100
    families: tuple[str, ...] = ALL_FAMILIES
    horizon: int = 1
    quantiles: tuple[float, ...] = QuantileGrid().probs
    n_lambda: int = 100
    lambda_min_ratio: float = 1e-4
    outer_max_cycles: int = 30
    outer_tol: float = 1e-4
    inner_tol: float = 1e-7
    weight_floor: float = 1e-10
    ic: str = "HQC"
    seed: int = 0
    kmeans_restarts: int = 10
    holdout_days: int = 28
    full_history_diagnostics: bool = False
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)

    def __post_init__(self):
        self.families = tuple(make_family(f).name for f in self.families)
        if not self.families:
            raise FormatError("at least one family is required")
        self.quantiles = QuantileGrid(tuple(self.quantiles)).probs
        if self.ic not in IC_NAMES:
            raise FormatError(f"ic must be one of {IC_NAMES}")
        for name in ("window_days", "n_clusters", "horizon", "n_lambda", "outer_max_cycles",
                     "kmeans_restarts", "workers"):
            if getattr(self, name) < 1:
                raise FormatError(f"{name} must be at least 1")
        if self.holdout_days < 0:
            raise FormatError("holdout_days must be nonnegative")

    def fit_config(self, family) -> FitConfig:
        return FitConfig(family, n_lambda=self.n_lambda, lambda_min_ratio=self.lambda_min_ratio,
                         outer_max_cycles=self.outer_max_cycles, outer_tol=self.outer_tol,
                         inner_tol=self.inner_tol, weight_floor=self.weight_floor, ic=self.ic)

    @property
    def grid(self) -> QuantileGrid:
        return QuantileGrid(self.quantiles)


_FIELDS = {f.name: f for f in dataclasses.fields(PipelineConfig)}


def _convert(name, text):
    default = getattr(PipelineConfig, name, None)
    if name == "workers":
        default = 1
    try:
        if name in ("families",):
            return tuple(s.strip() for s in text.split(",") if s.strip())
        if name == "quantiles":
            return tuple(float(s) for s in text.split(",") if s.strip())
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise FormatError(f"invalid value for {name}: {text!r}") from None
    return text


def parse_config(text: str, base_dir: str = ".", **overrides) -> PipelineConfig:
    """Parse flat ``key = value`` lines; ``#`` starts a comment.

    Relative paths are taken relative to ``base_dir``. Keyword overrides
    (already typed) win over file values.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise FormatError(f"config line {lineno}: unknown key {key!r}")
        if key in values:
            raise FormatError(f"config line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, value)
    for key in ("sales_csv", "calendar_csv", "workdir"):
        path = values.get(key, _FIELDS[key].default)
        if not os.path.isabs(path):
            values[key] = os.path.join(base_dir, path)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return PipelineConfig(**values)
    except (ValueError, RangeError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(str(exc)) from None


def load_config(path, **overrides) -> PipelineConfig:
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such config file: {path}")
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), os.path.dirname(os.path.abspath(path)), **overrides)


def write_config(cfg: PipelineConfig, path) -> None:
    lines = []
    for name in _FIELDS:
        v = getattr(cfg, name)
        if isinstance(v, tuple):
            v = ",".join(map(str, v))
        lines.append(f"{name} = {v}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


# ----------------------------------------------------------------------------
# hashing and layout
# ----------------------------------------------------------------------------

_DATA_KEYS = ("sales_csv", "calendar_csv", "window_days")
STAGE_KEYS = {
    "diagnostics": _DATA_KEYS + ("full_history_diagnostics",),
    "clusters": _DATA_KEYS + ("n_clusters", "seed", "kmeans_restarts"),
}
STAGE_KEYS["fits"] = STAGE_KEYS["clusters"] + (
    "horizon", "holdout_days", "n_lambda", "lambda_min_ratio", "outer_max_cycles", "outer_tol",
    "inner_tol", "weight_floor", "ic")
STAGE_KEYS["reports"] = STAGE_KEYS["fits"] + ("families", "quantiles")


def config_hash(cfg: PipelineConfig, stage: str) -> str:
    doc = {}
    for key in STAGE_KEYS[stage]:
        v = getattr(cfg, key)
        doc[key] = os.path.abspath(v) if key.endswith("_csv") else v
    blob = json.dumps(doc, sort_keys=True, default=list).encode()
    return hashlib.sha256(blob).hexdigest()[:10]


def stage_path(cfg: PipelineConfig, stage: str, name: str) -> str:
    d = os.path.join(cfg.workdir, stage)
    os.makedirs(d, exist_ok=True)
    return os.path.join(d, f"{config_hash(cfg, stage)}_{name}")


def fit_path(cfg: PipelineConfig, cluster: int, family: str) -> str:
    return stage_path(cfg, "fits", f"c{cluster:03d}_{family}.json")


def _require(path, what):
    if not os.path.exists(path):
        raise MissingArtifactError(f"missing {what}: {path} (run the earlier stage first)")


# ----------------------------------------------------------------------------
# stages
# ----------------------------------------------------------------------------

def load_window(cfg: PipelineConfig) -> SalesPanel:
    panel = load_panel(cfg.sales_csv, cfg.calendar_csv)
    return restrict_window(panel, min(cfg.window_days, panel.n_days))


def run_diagnose(cfg: PipelineConfig) -> dict:
    panel = load_window(cfg)
    iod = diagnostics.iod_table(panel, cfg.full_history_diagnostics)
    zero = diagnostics.zero_fit_table(panel, cfg.full_history_diagnostics)
    iod_path = stage_path(cfg, "diagnostics", "iod.csv")
    zero_path = stage_path(cfg, "diagnostics", "zerofit.csv")
    diagnostics.write_iod_csv(iod, iod_path)
    diagnostics.write_zerofit_csv(zero, zero_path)
    err_p = np.mean([abs(r.f0_observed - r.f0_poisson) for r in zero])
    err_nb = np.mean([abs(r.f0_observed - r.f0_negbin) for r in zero])
    return {"series": len(iod), "share_iod_above_1": diagnostics.overdispersed_share(iod),
            "mean_abs_zero_error_poisson": float(err_p), "mean_abs_zero_error_negbin": float(err_nb),
            "iod_csv": iod_path, "zerofit_csv": zero_path}


def run_cluster(cfg: PipelineConfig) -> dict:
    panel = load_window(cfg)
    if cfg.n_clusters > panel.n_items:
        raise RangeError(f"n_clusters={cfg.n_clusters} exceeds the {panel.n_items} items")
    F, _ = clustering.feature_matrix(panel)
    assignment = clustering.kmeans(F, cfg.n_clusters, seed=cfg.seed, n_init=cfg.kmeans_restarts)
    path = stage_path(cfg, "clusters", "clusters.csv")
    rows = clustering.cluster_table(panel, assignment, F)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["item_id", "cluster"] + list(clustering.FEATURE_NAMES))
        for r in rows:
            w.writerow([r["item_id"], r["cluster"]] + [repr(r[k]) for k in clustering.FEATURE_NAMES])
    sizes = assignment.sizes
    return {"clusters": int(cfg.n_clusters), "min_size": int(sizes.min()),
            "median_size": float(np.median(sizes)), "max_size": int(sizes.max()), "clusters_csv": path}


def read_clusters(cfg: PipelineConfig) -> dict[int, list[str]]:
    path = stage_path(cfg, "clusters", "clusters.csv")
    _require(path, "cluster assignment")
    groups: dict[int, list[str]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            groups.setdefault(int(row["cluster"]), []).append(row["item_id"])
    return dict(sorted(groups.items()))


def training_cutoff(cfg: PipelineConfig, panel: SalesPanel) -> int:
    """First held-out day; fits only see targets before it."""
    cut = panel.n_days - cfg.holdout_days
    if cut <= panel.window_start:
        raise RangeError(f"holdout of {cfg.holdout_days} days leaves no training window")
    return cut


# worker-process state, set once per process by the pool initializer
_STATE: dict = {}


def _init_worker(cfg, panel):
    _STATE["cfg"] = cfg
    _STATE["panel"] = panel


def _fit_job(job):
    cluster, items, family = job
    cfg, panel = _STATE["cfg"], _STATE["panel"]
    start = time.perf_counter()
    record = {"cluster": cluster, "family": family, "n_items": len(items)}
    try:
        design = build_training_set(panel, items, cfg.horizon, training_cutoff(cfg, panel))
        fit = rs_backfit(design, cfg.fit_config(family))
    except (NumericalError, ConvergenceError, FloatingPointError) as exc:
        record.update(status="failed", error=f"{type(exc).__name__}: {exc}",
                      seconds=time.perf_counter() - start)
        return record
    path = fit_path(cfg, cluster, family)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(fit.to_json())
    os.replace(tmp, path)
    record.update(status="ok", cycles=fit.cycles_used, converged=fit.converged,
                  lambda_=fit.lambda_chosen, hqc=fit.hqc, n_obs=fit.n_obs,
                  seconds=time.perf_counter() - start, path=path)
    return record


def run_fit(cfg: PipelineConfig, resume: bool = False, log_stream=None) -> dict:
    """Fit every (cluster, family) pair; returns a summary with failures."""
    groups = read_clusters(cfg)
    panel = load_window(cfg)
    training_cutoff(cfg, panel)
    jobs = []
    skipped = 0
    for g, items in groups.items():
        for fam in cfg.families:
            if resume and os.path.exists(fit_path(cfg, g, fam)):
                skipped += 1
                continue
            jobs.append((g, items, fam))
    log_path = stage_path(cfg, "fits", "log.jsonl")
    stream = log_stream if log_stream is not None else sys.stderr
    records = []
    if cfg.workers == 1 or len(jobs) <= 1:
        _init_worker(cfg, panel)
        results = map(_fit_job, jobs)
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=cfg.workers, initializer=_init_worker,
                                   initargs=(cfg, panel))
        results = pool.map(_fit_job, jobs)
    try:
        with open(log_path, "a", encoding="utf-8") as logf:
            for rec in results:
                records.append(rec)
                logf.write(json.dumps(rec) + "\n")
                if rec["status"] == "ok":
                    lam = ",".join(f"{x:.3g}" for x in rec["lambda_"])
                    print(f"cluster {rec['cluster']:3d} {rec['family']:<15s} cycles={rec['cycles']:2d} "
                          f"lambda=[{lam}] HQC={rec['hqc']:.5f} {rec['seconds']:.2f}s",
                          file=stream)
                else:
                    print(f"cluster {rec['cluster']:3d} {rec['family']:<15s} FAILED {rec['error']}",
                          file=stream)
    finally:
        if pool is not None:
            pool.shutdown()
    failed = [r for r in records if r["status"] != "ok"]
    return {"fitted": len(records) - len(failed), "skipped": skipped, "failed": failed,
            "log": log_path}


def load_fits(cfg: PipelineConfig, groups) -> dict[int, dict[str, FitResult]]:
    out = {}
    for g in groups:
        fits = {}
        for fam in cfg.families:
            path = fit_path(cfg, g, fam)
            _require(path, f"fit for cluster {g}, family {fam}")
            with open(path, encoding="utf-8") as fh:
                fits[fam] = FitResult.from_json(fh.read())
        out[g] = fits
    return out


def _cluster_forecasts(panel, items, fits, days, cfg):
    design = design_rows(panel, items, days, cfg.horizon)
    fcs = [forecast_quantiles(fit, design, cfg.grid) for fit in fits.values()]
    best = select_best(list(fits.values()))
    comp = forecast_quantiles(best, design, cfg.grid, source=COMPOSITE)
    return fcs + [comp]


def run_evaluate(cfg: PipelineConfig) -> dict:
    groups = read_clusters(cfg)
    all_fits = load_fits(cfg, groups)
    panel = load_window(cfg)
    cut = training_cutoff(cfg, panel)
    if cfg.holdout_days == 0:
        raise RangeError("evaluation needs holdout_days > 0")
    days = np.arange(cut, panel.n_days)
    forecasts = []
    cluster_fits = []
    for g, items in groups.items():
        forecasts.extend(_cluster_forecasts(panel, items, all_fits[g], days, cfg))
        cluster_fits.append(ClusterFits(g, len(items), all_fits[g]))
    T, I, S = np.meshgrid(days, np.arange(panel.n_items), np.arange(panel.n_stores), indexing="ij")
    forecasts.append(benchmark_batch(panel, cfg.grid, T.ravel(), I.ravel(), S.ravel()))
    report = evaluate_report(forecasts, panel, cfg.grid, cluster_fits)
    report_path = stage_path(cfg, "reports", "report.csv")
    pq_path = stage_path(cfg, "reports", "per_quantile.csv")
    report.to_csv(report_path)
    report.per_quantile_csv(pq_path)
    return {"report": report, "report_csv": report_path, "per_quantile_csv": pq_path}


_DAY_LABEL = re.compile(r"^d_(\d+)$")


def resolve_day(panel: SalesPanel, text: str) -> int:
    """Panel day index of a ``d_<k>`` label or an ISO date (may lie past the data)."""
    m = _DAY_LABEL.match(text)
    if m:
        first = _DAY_LABEL.match(panel.day_labels[0])
        if first is None:
            raise FormatError("panel days are not labeled d_<k>")
        return int(m.group(1)) - int(first.group(1))
    try:
        day = np.datetime64(text, "D")
    except ValueError:
        raise FormatError(f"cannot parse day {text!r}; use d_<k> or YYYY-MM-DD") from None
    return int((day - panel.dates[0]).astype(np.int64))


def run_forecast(cfg: PipelineConfig, start: str, end: str) -> dict:
    """Quantile CSV of the HQC-selected model for target days ``start..end``.

    Every target needs observed data ``horizon`` days before it.
    """
    groups = read_clusters(cfg)
    all_fits = load_fits(cfg, groups)
    panel = load_window(cfg)
    lo, hi = resolve_day(panel, start), resolve_day(panel, end)
    if hi < lo:
        raise RangeError("forecast end precedes start")
    days = np.arange(lo, hi + 1)
    rows = []
    for g, items in groups.items():
        best = select_best(list(all_fits[g].values()))
        fc = forecast_quantiles(best, design_rows(panel, items, days, cfg.horizon), cfg.grid,
                                source=COMPOSITE)
        for k in range(len(fc)):
            rows.append((int(fc.day[k]), int(fc.item[k]), int(fc.store[k]), best.family.name,
                         fc.q[k].tolist(), bool(fc.clamped[k])))
    rows.sort()
    path = stage_path(cfg, "reports", f"forecast_{start}_{end}.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "item_id", "store_id", "family"] + [f"q{p:g}" for p in cfg.quantiles]
                   + ["clamped"])
        for t, i, j, fam, q, clamped in rows:
            date = str(panel.dates[0] + np.timedelta64(t, "D"))
            w.writerow([date, panel.item_ids[i], panel.store_ids[j], fam] + q + [int(clamped)])
    return {"rows": len(rows), "forecast_csv": path}


__all__ = ["ALL_FAMILIES", "PipelineConfig", "parse_config", "load_config", "write_config",
           "config_hash", "stage_path", "fit_path", "run_diagnose", "run_cluster", "run_fit",
           "run_evaluate", "run_forecast", "read_clusters", "load_fits", "resolve_day"]
