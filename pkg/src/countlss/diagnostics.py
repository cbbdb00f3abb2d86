"""
Exploratory dispersion and zero-fraction diagnostics per (item, store) series.

:func:`iod_table` reports the variance-to-mean ratio of each series;
:func:`zero_fit_table` compares the observed share of zeros with the
zero probability implied by unconditional Poisson and negative binomial
maximum likelihood fits.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .count_dist import FamilyId, NegBinomial, make_family
from .errors import DomainError
from .features import SalesPanel

SIGMA_BOUNDS = (1e-6, 1e3)
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class DispersionRecord:
    item_id: str
    store_id: str
    mean: float
    variance: float
    iod: float
    zero_prop: float
    n: int
    # mean is zero, so the ratio is undefined (iod is NaN)
    undefined: bool = False


@dataclass(frozen=True)
class MLEFit:
    family: str
    mu: float
    sigma: float = float("nan")
    # sigma is not identifiable (all-zero series)
    degenerate: bool = False


@dataclass(frozen=True)
class ZeroFitRecord:
    item_id: str
    store_id: str
    f0_observed: float
    f0_poisson: float
    f0_negbin: float
    mle_mu: float
    mle_sigma: float


def dispersion(series) -> tuple[float, float, float, float]:
    """Mean, sample variance (n-1), IOD and zero share of one series."""
    y = np.asarray(series, dtype=float)
    if y.size < 2:
        raise DomainError("a series needs at least two observations")
    mean = float(y.mean())
    var = float(y.var(ddof=1))
    iod = var / mean if mean > 0 else float("nan")
    return mean, var, iod, float(np.mean(y == 0))


def _series(panel: SalesPanel, full_history: bool):
    start = 0 if full_history else panel.window_start
    for i, item in enumerate(panel.item_ids):
        for j, store in enumerate(panel.store_ids):
            yield item, store, panel.counts[start:, i, j]


def iod_table(panel: SalesPanel, full_history: bool = False) -> list[DispersionRecord]:
    """One :class:`DispersionRecord` per (item, store), items outermost."""
    out = []
    for item, store, y in _series(panel, full_history):
        mean, var, iod, zp = dispersion(y)
        out.append(DispersionRecord(item, store, mean, var, iod, zp, int(y.size), mean == 0))
    return out


def _golden_max(f, lo, hi, tol=1e-8):
    """Maximize a unimodal ``f`` on [lo, hi]; returns the argmax."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    # the bounds themselves are candidates (flat or boundary optimum)
    best = max((f(lo), lo), (f(hi), hi), (fc, c), (fd, d))
    return best[1]


def ml_fit_unconditional(family, series) -> MLEFit:
    """Unconditional maximum likelihood fit of a Poisson or negative binomial.

    The mean estimate is the sample mean in both cases. The NB dispersion
    maximizes the profile likelihood by golden-section search over
    ``log sigma`` between ``log 1e-6`` and ``log 1e3``.
    """
    fam = make_family(family)
    if fam.id not in (FamilyId.POISSON, FamilyId.NEGBINOMIAL):
        raise DomainError(f"unconditional fits support Poisson and NegBinomial, not {fam.name}")
    y = np.asarray(series)
    if y.size == 0:
        raise DomainError("empty series")
    if np.any(y < 0) or np.any(y != np.round(y)):
        raise DomainError("series must hold nonnegative integer counts")
    mu = float(y.mean())
    if fam.id == FamilyId.POISSON:
        return MLEFit(fam.name, mu)
    if mu == 0:
        return MLEFit(fam.name, 0.0, float("nan"), degenerate=True)
    values, counts = np.unique(y.astype(np.int64), return_counts=True)
    nb = NegBinomial()
    mu_v = np.full(values.shape, mu)

    def profile(log_sigma):
        s = np.full(values.shape, math.exp(log_sigma))
        return float(counts @ nb.logpmf(values, mu_v, s))

    log_s = _golden_max(profile, math.log(SIGMA_BOUNDS[0]), math.log(SIGMA_BOUNDS[1]))
    return MLEFit(fam.name, mu, math.exp(log_s))


def zero_fit_table(panel: SalesPanel, full_history: bool = False) -> list[ZeroFitRecord]:
    out = []
    for item, store, y in _series(panel, full_history):
        nb = ml_fit_unconditional("NegBinomial", y)
        mu = nb.mu
        f0_nb = 1.0 if nb.degenerate else (1.0 + nb.sigma * mu) ** (-1.0 / nb.sigma)
        out.append(ZeroFitRecord(item, store, float(np.mean(y == 0)), math.exp(-mu), f0_nb,
                                 mu, nb.sigma))
    return out


IOD_COLUMNS = ("item_id", "store_id", "mean", "variance", "iod", "zero_prop", "n")
ZEROFIT_COLUMNS = ("item_id", "store_id", "f0_observed", "f0_poisson", "f0_negbin", "mu", "sigma")


def write_iod_csv(records, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(IOD_COLUMNS)
        for r in records:
            w.writerow([r.item_id, r.store_id, repr(r.mean), repr(r.variance),
                        "" if r.undefined else repr(r.iod), repr(r.zero_prop), r.n])


def write_zerofit_csv(records, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ZEROFIT_COLUMNS)
        for r in records:
            sigma = "" if math.isnan(r.mle_sigma) else repr(r.mle_sigma)
            w.writerow([r.item_id, r.store_id, repr(r.f0_observed), repr(r.f0_poisson),
                        repr(r.f0_negbin), repr(r.mle_mu), sigma])


def overdispersed_share(records) -> float:
    """Share of series with a defined IOD above 1."""
    defined = [r.iod for r in records if not r.undefined]
    return float(np.mean(np.array(defined) > 1.0)) if defined else float("nan")


__all__ = ["DispersionRecord", "MLEFit", "ZeroFitRecord", "dispersion", "iod_table",
           "ml_fit_unconditional", "zero_fit_table", "write_iod_csv", "write_zerofit_csv",
           "overdispersed_share"]
