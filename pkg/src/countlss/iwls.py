"""
Penalized IWLS backfitting for multi-parameter count regression.

Each distribution parameter ``theta_m`` has its own linear predictor
``eta_m = X beta_m`` behind a link. Parameters are updated in turn with
the others held fixed (location first, then scale): the score ``u`` and
curvature ``w`` of the log-likelihood with respect to ``eta_m`` give a
working response ``z = eta_m + u / w``, and a weighted lasso fit of
``z`` on ``X`` over a geometric lambda grid proposes the update. The
grid point with the smallest information criterion, evaluated with the
exact log-likelihood, is taken.

The lasso itself is cyclic coordinate descent on the weighted Gram
matrix of internally standardized columns.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .count_dist import FAMILY_ORDER, Family, Link, apply_link, invert_link, make_family
from .errors import ConvergenceError, DegenerateError, NumericalError, RangeError

__all__ = [
    "FitConfig", "FitResult", "lambda_grid", "lasso_path", "weighted_lasso",
    "rs_backfit", "information_criteria", "select_best",
]

IC_NAMES = ("AIC", "BIC", "HQC")
MAX_SWEEPS = 10_000
MAX_HALVINGS = 5


# ----------------------------------------------------------------------------
# coordinate descent
# ----------------------------------------------------------------------------

@numba.njit(cache=True)
def _cd_path(G, c, pf, lambdas, beta, tol, max_sweeps, out):
    p = c.shape[0]
    grad = c.copy()
    for j in range(p):
        if beta[j] != 0.0:
            for k in range(p):
                grad[k] -= G[k, j] * beta[j]
    for l in range(lambdas.shape[0]):
        lam = lambdas[l]
        maxd = 0.0
        for sweep in range(max_sweeps):
            maxd = 0.0
            for j in range(p):
                gjj = G[j, j]
                if gjj <= 0.0:
                    continue
                bj = beta[j]
                a = grad[j] + gjj * bj
                t = lam * pf[j]
                if a > t:
                    nb = (a - t) / gjj
                elif a < -t:
                    nb = (a + t) / gjj
                else:
                    nb = 0.0
                d = nb - bj
                if d != 0.0:
                    beta[j] = nb
                    for k in range(p):
                        grad[k] -= G[k, j] * d
                    ad = abs(d) * math.sqrt(gjj)
                    if ad > maxd:
                        maxd = ad
            if maxd < tol:
                break
        out[l, :] = beta
        if maxd >= tol:
            return l
    return -1


@dataclass
class _Standardized:
    """Weighted standardization of a design, shared along a lambda path."""

    active: np.ndarray        # indices of columns carried into the solver
    center: np.ndarray        # weighted means of active columns (0 without intercept)
    scale: np.ndarray         # weighted sds of active columns
    intercept: int | None     # index of the constant unpenalized column
    intercept_value: float
    z_center: float
    G: np.ndarray
    c: np.ndarray
    pf: np.ndarray
    n_cols: int

    def to_standard(self, beta):
        return np.asarray(beta, dtype=float)[self.active] * self.scale

    def to_original(self, bstd):
        """Map standardized coefficients (rows) back to the original columns."""
        bstd = np.atleast_2d(bstd)
        out = np.zeros((bstd.shape[0], self.n_cols))
        slopes = bstd / self.scale
        out[:, self.active] = slopes
        if self.intercept is not None:
            out[:, self.intercept] = (self.z_center - slopes @ self.center) / self.intercept_value
        return out


def _standardize(X, z, w, mask) -> _Standardized:
    X = np.asarray(X, dtype=float)
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    n, p = X.shape
    if z.shape != (n,) or w.shape != (n,) or mask.shape != (p,):
        raise ValueError("X, z, w and mask dimensions disagree")
    if not np.all(w > 0):
        raise ValueError("weights must be positive")
    v = w / w.sum()
    mean = v @ X
    var = v @ (X - mean) ** 2
    col_max = np.max(np.abs(X), axis=0) if n else np.zeros(p)
    constant = var <= (1e-12 * np.maximum(col_max, 1e-300)) ** 2
    intercept = None
    for j in np.flatnonzero(constant & ~mask):
        if col_max[j] > 0:
            intercept = int(j)
            break
    if intercept is not None:
        center = mean
        scale = np.sqrt(var)
        z_center = float(v @ z)
        intercept_value = float(mean[intercept])
    else:
        center = np.zeros(p)
        scale = np.sqrt(v @ X ** 2)
        z_center = 0.0
        intercept_value = 1.0
    active = np.flatnonzero(~constant) if intercept is not None else np.flatnonzero(scale > 0)
    center = center[active]
    scale = scale[active]
    Xs = (X[:, active] - center) / scale
    Xv = Xs * v[:, None]
    G = np.ascontiguousarray(Xv.T @ Xs)
    c = np.ascontiguousarray(Xv.T @ (z - z_center))
    pf = mask[active].astype(float)
    return _Standardized(active, center, scale, intercept, intercept_value, z_center,
                         G, c, pf, p)


def _lambda_max(st: _Standardized) -> float:
    pen = st.pf > 0
    if not pen.any():
        return 0.0
    r = st.c
    unpen = ~pen
    if unpen.any():
        Guu = st.G[np.ix_(unpen, unpen)]
        bu = np.linalg.lstsq(Guu, st.c[unpen], rcond=None)[0]
        r = st.c - st.G[:, unpen] @ bu
    return float(np.max(np.abs(r[pen])))


def lambda_grid(X, z, w, mask, n_lambda: int = 100, ratio: float = 1e-4) -> np.ndarray:
    """Geometric lambda grid from ``lambda_max`` down to ``ratio * lambda_max``.

    ``lambda_max`` is the smallest penalty at which every penalized
    coefficient is zero (computed on standardized columns).
    """
    if n_lambda < 2:
        raise RangeError("n_lambda must be at least 2")
    st = _standardize(X, z, w, mask)
    lam_max = _lambda_max(st)
    if lam_max <= 0:
        raise DegenerateError("no penalized column carries variation: lambda_max is 0")
    return np.geomspace(lam_max, lam_max * ratio, n_lambda)


def _solve_path(st: _Standardized, lambdas, warm=None, tol=1e-7, truncate=False):
    lambdas = np.ascontiguousarray(lambdas, dtype=float)
    beta = np.zeros(st.active.size) if warm is None else st.to_standard(warm)
    out = np.empty((lambdas.size, st.active.size))
    failed = _cd_path(st.G, st.c, st.pf, lambdas, np.ascontiguousarray(beta), tol, MAX_SWEEPS, out)
    if failed >= 0:
        if truncate and failed > 0:
            return st.to_original(out[:failed])
        best = st.to_original(out[failed])[0]
        raise ConvergenceError(
            f"coordinate descent did not converge in {MAX_SWEEPS} sweeps at lambda={lambdas[failed]:.3g}",
            best=best)
    return st.to_original(out)


def lasso_path(X, z, w, mask, n_lambda: int = 100, ratio: float = 1e-4, lambdas=None,
               warm=None, tol: float = 1e-7, truncate: bool = False):
    """Warm-started weighted lasso solutions along a lambda grid.

    Returns ``(lambdas, B)`` with one coefficient row per lambda, on the
    original column scale. If no penalized column varies, the grid
    collapses to the single unpenalized fit at ``lambda = 0``. With
    ``truncate`` the path stops before the first lambda at which
    coordinate descent fails to converge (an error is raised only if that
    is the first lambda).
    """
    st = _standardize(X, z, w, mask)
    if lambdas is None:
        lam_max = _lambda_max(st)
        if lam_max > 0:
            lambdas = np.geomspace(lam_max, lam_max * ratio, n_lambda)
        else:
            lambdas = np.zeros(1)
    lambdas = np.asarray(lambdas, dtype=float)
    B = _solve_path(st, lambdas, warm, tol, truncate)
    return lambdas[:B.shape[0]], B


def weighted_lasso(X, z, w, lam: float, mask, warm=None, tol: float = 1e-7) -> np.ndarray:
    """Minimize ``sum(w (z - X b)^2) / (2 sum w) + lam * sum_penalized |b_j|``.

    Columns are standardized by their weighted mean and sd before the
    penalty applies; a constant unpenalized column acts as the intercept.
    Coefficients are returned on the original scale.
    """
    st = _standardize(X, z, w, mask)
    return _solve_path(st, [float(lam)], warm, tol)[0]


# ----------------------------------------------------------------------------
# information criteria and results
# ----------------------------------------------------------------------------

def information_criteria(log_lik: float, df: int, n: int) -> dict[str, float]:
    """Per-observation AIC, BIC and HQC."""
    if n < 8:
        raise RangeError(f"information criteria need n >= 8, got {n}")
    dev = -2.0 * log_lik
    return {
        "AIC": (dev + 2.0 * df) / n,
        "BIC": (dev + df * math.log(n)) / n,
        "HQC": (dev + 2.0 * df * math.log(math.log(n))) / n,
    }


def _penalty_per_df(ic: str, n: int) -> float:
    return {"AIC": 2.0, "BIC": math.log(n), "HQC": 2.0 * math.log(math.log(n))}[ic]


@dataclass
class FitConfig:
    family: Family
    n_lambda: int = 100
    lambda_min_ratio: float = 1e-4
    outer_max_cycles: int = 30
    outer_tol: float = 1e-4
    inner_tol: float = 1e-7
    weight_floor: float = 1e-10
    ic: str = "HQC"
    # IWLS steps per parameter within one cycle, stopped early once the
    # relative deviance change falls below param_tol
    param_max_iter: int = 10
    param_tol: float = 1e-6

    def __post_init__(self):
        self.family = make_family(self.family)
        if self.n_lambda < 2:
            raise RangeError("n_lambda must be at least 2")
        for name in ("lambda_min_ratio", "outer_tol", "inner_tol", "weight_floor", "param_tol"):
            if not getattr(self, name) > 0:
                raise RangeError(f"{name} must be positive")
        if self.ic not in IC_NAMES:
            raise RangeError(f"ic must be one of {IC_NAMES}, got {self.ic!r}")


@dataclass
class FitResult:
    family: Family
    coefficients: list[np.ndarray]
    lambda_chosen: list[float]
    log_lik: float
    df: int
    n_obs: int
    ic_values: dict[str, float]
    converged: bool
    cycles_used: int
    column_names: list[str] = field(default_factory=list)
    deviance_history: list[float] = field(default_factory=list)

    @property
    def hqc(self) -> float:
        return self.ic_values["HQC"]

    def linear_predictors(self, X) -> list[np.ndarray]:
        X = np.asarray(X, dtype=float)
        return [X @ b for b in self.coefficients]

    def predict_theta(self, X) -> list[np.ndarray]:
        return [invert_link(link, eta) for link, eta in zip(self.family.links, self.linear_predictors(X))]

    def to_dict(self) -> dict:
        names = self.column_names or [f"x{j}" for j in range(len(self.coefficients[0]))]
        return {
            "family": self.family.name,
            "links": [link.value for link in self.family.links],
            "coefficients": {
                pname: {name: float(b) for name, b in zip(names, coef)}
                for pname, coef in zip(self.family.param_names, self.coefficients)
            },
            "lambda": dict(zip(self.family.param_names, map(float, self.lambda_chosen))),
            "log_lik": self.log_lik,
            "df": self.df,
            "n_obs": self.n_obs,
            "ic": self.ic_values,
            "converged": self.converged,
            "cycles_used": self.cycles_used,
            "deviance_history": self.deviance_history,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=False)

    @classmethod
    def from_dict(cls, doc: dict) -> "FitResult":
        family = make_family(doc["family"], links=[Link(l) for l in doc["links"]])
        coef_maps = [doc["coefficients"][p] for p in family.param_names]
        names = list(coef_maps[0])
        return cls(
            family=family,
            coefficients=[np.array([cm[nm] for nm in names]) for cm in coef_maps],
            lambda_chosen=[doc["lambda"][p] for p in family.param_names],
            log_lik=doc["log_lik"], df=doc["df"], n_obs=doc["n_obs"], ic_values=dict(doc["ic"]),
            converged=doc["converged"], cycles_used=doc["cycles_used"],
            column_names=names, deviance_history=list(doc.get("deviance_history", [])),
        )

    @classmethod
    def from_json(cls, text: str) -> "FitResult":
        return cls.from_dict(json.loads(text))


def select_best(fits: Sequence[FitResult]) -> FitResult:
    """The fit with minimal HQC; ties go to the earlier family in canonical order."""
    if not fits:
        raise RangeError("select_best needs at least one fit")
    order = {fid: k for k, fid in enumerate(FAMILY_ORDER)}
    return min(fits, key=lambda f: (f.hqc, order[f.family.id]))


# ----------------------------------------------------------------------------
# RS backfitting
# ----------------------------------------------------------------------------

def _initial_mean(design, y):
    ybar = float(np.mean(y))
    trailing = ybar
    names = list(getattr(design, "column_names", None) or [])
    if "rm_is_6" in names:
        trailing = design.X[:, names.index("rm_is_6")]
    return np.maximum(0.5 * trailing + 0.5 * ybar, 0.1) * np.ones_like(y)


class _Backfitter:
    def __init__(self, design, config: FitConfig):
        self.config = config
        self.family = config.family
        self.X = np.ascontiguousarray(design.X, dtype=float)
        self.y = np.asarray(design.target, dtype=float)
        self.mask = np.asarray(design.penalty_mask, dtype=bool)
        self.names = list(getattr(design, "column_names", None) or [])
        self.n, self.p = self.X.shape
        if self.n == 0:
            raise RangeError("design has no rows")
        if self.y.shape != (self.n,):
            raise ValueError("target length does not match design rows")
        if np.any(self.y < 0) or np.any(self.y != np.round(self.y)):
            raise ValueError("targets must be nonnegative integer counts")
        fam = self.family
        self.eta = []
        for m in range(fam.M):
            if m == 0:
                start = _initial_mean(design, self.y)
            else:
                start = np.full(self.n, fam.start_values[m])
            self.eta.append(np.asarray(apply_link(fam.links[m], start), dtype=float))
        self.beta: list[np.ndarray | None] = [None] * fam.M
        self.lam = [float("nan")] * fam.M
        self.pen = _penalty_per_df(config.ic, self.n)

    def theta(self, eta=None):
        eta = self.eta if eta is None else eta
        return [invert_link(link, e) for link, e in zip(self.family.links, eta)]

    def loglik(self, eta=None) -> float:
        ll = self.family.loglik(self.y, self.theta(eta))
        if math.isnan(ll):
            raise NumericalError("log-likelihood is NaN")
        return ll

    def nnz(self, skip=None) -> int:
        total = 0
        for m, b in enumerate(self.beta):
            if m == skip:
                continue
            total += 1 if b is None else int(np.count_nonzero(b))
        return total

    def propose(self, m):
        """IWLS working fit for parameter ``m`` with IC-selected lambda."""
        fam = self.family
        cfg = self.config
        theta = self.theta()
        u, w = fam.score_weight(m, self.y, theta, self.eta[m], weight_floor=cfg.weight_floor)
        z = self.eta[m] + u / w
        lambdas, B = lasso_path(self.X, z, w, self.mask, cfg.n_lambda, cfg.lambda_min_ratio,
                                tol=cfg.inner_tol, truncate=True)
        E = self.X @ B.T
        th = [t[:, None] for t in theta]
        th[m] = invert_link(fam.links[m], E)
        with np.errstate(all="ignore"):
            ll = fam.logpmf(self.y[:, None], *th).sum(axis=0)
        df = np.count_nonzero(B, axis=1) + self.nnz(skip=m)
        crit = -2.0 * ll + self.pen * df
        crit[~np.isfinite(crit)] = np.inf
        if not np.isfinite(crit).any():
            raise NumericalError(f"no finite log-likelihood on the lambda path of {fam.param_names[m]}")
        k = int(np.argmin(crit))
        return B[k], float(lambdas[k]), float(ll[k])

    def fit(self) -> FitResult:
        fam = self.family
        cfg = self.config
        dev = -2.0 * self.loglik()
        history = []
        converged = False
        cycle = 0
        for cycle in range(1, cfg.outer_max_cycles + 1):
            dev_start = dev
            for m in range(fam.M):
                for _ in range(cfg.param_max_iter):
                    beta_new, lam, ll_new = self.propose(m)
                    dev_new = -2.0 * ll_new
                    if self.beta[m] is None:
                        # first fit of this parameter replaces the starting values
                        self.beta[m], self.eta[m], self.lam[m] = beta_new, self.X @ beta_new, lam
                        dev_old, dev = dev, dev_new
                    else:
                        beta_old = self.beta[m]
                        halvings = 0
                        while not dev_new <= dev and halvings < MAX_HALVINGS:
                            beta_new = 0.5 * (beta_old + beta_new)
                            eta = list(self.eta)
                            eta[m] = self.X @ beta_new
                            dev_new = -2.0 * self.loglik(eta)
                            halvings += 1
                        if not dev_new <= dev:
                            break
                        self.beta[m], self.eta[m], self.lam[m] = beta_new, self.X @ beta_new, lam
                        dev_old, dev = dev, dev_new
                    if math.isnan(dev):
                        raise NumericalError(f"deviance is NaN in cycle {cycle}, parameter {fam.param_names[m]}")
                    if abs(dev_old - dev) <= cfg.param_tol * abs(dev):
                        break
            history.append(dev)
            if cycle > 1 and abs(dev_start - dev) <= cfg.outer_tol * abs(dev):
                converged = True
                break
        log_lik = -0.5 * dev
        df = self.nnz()
        return FitResult(
            family=fam,
            coefficients=[np.array(b) for b in self.beta],
            lambda_chosen=list(self.lam),
            log_lik=log_lik,
            df=df,
            n_obs=self.n,
            ic_values=information_criteria(log_lik, df, self.n),
            converged=converged,
            cycles_used=cycle,
            column_names=self.names,
            deviance_history=history,
        )


def rs_backfit(design, config: FitConfig) -> FitResult:
    """Fit all distribution parameters by cyclic penalized IWLS.

    ``design`` needs ``X`` (with a constant unpenalized intercept column),
    ``target`` and ``penalty_mask``; ``column_names`` is optional.
    """
    return _Backfitter(design, config).fit()
