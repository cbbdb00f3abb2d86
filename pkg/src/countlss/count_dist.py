"""
Count distribution families and link functions.

Seven families are available, all parameterized so that the first
parameter ``mu`` is the mean of the un-inflated count (the `location`)
and the optional second parameter ``sigma`` controls dispersion or
zero inflation:

==============  =====  =======================================  ==========================
family          M      pmf / construction                       variance
==============  =====  =======================================  ==========================
Poisson         1      e^-mu mu^y / y!                          mu
Geometric       1      mu^y / (1+mu)^(y+1)                      mu (1+mu)
NegBinomial     2      Gamma-Poisson, shape 1/sigma             mu + sigma mu^2
Waring          2      beta-geometric, a=1/sigma+1, b=mu/sigma  mu(1+mu)(1+sigma)/(1-sigma)
GenPoisson      2      Consul form with mean mu                 mu (1+sigma mu)^2
DoublePoisson   2      Efron, normalized by summation           ~ sigma mu
ZeroInfPoisson  2      P(0) = sigma + (1-sigma) e^-mu           (1-sigma) mu (1+sigma mu)
==============  =====  =======================================  ==========================

Every family object works on numpy arrays with broadcasting, so one
call evaluates a whole batch of observations, each with its own
parameter values. Module level functions (:func:`log_pmf`, :func:`cdf`,
:func:`quantile`, ...) are scalar conveniences taking a
:class:`ParamVector`.

Parameter indices ``m`` are zero based throughout (``0`` is ``mu``).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np
from scipy.special import expit, gammaln, logit, xlogy

from .errors import DomainError, NumericalError

__all__ = [
    "Link", "FamilyId", "Family", "ParamVector", "FAMILY_ORDER",
    "Poisson", "Geometric", "NegBinomial", "Waring", "GenPoisson",
    "DoublePoisson", "ZeroInfPoisson",
    "make_family", "apply_link", "invert_link", "link_derivative",
    "log_pmf", "cdf", "quantile", "moments", "score_and_weight", "sample",
]

LOG_INV_BOUNDS = (1e-10, 1e10)
LOGIT_INV_EPS = 1e-10
_LOG_ETA_MAX = math.log(LOG_INV_BOUNDS[1])
_LOG_ETA_MIN = math.log(LOG_INV_BOUNDS[0])

# Largest count ever tabulated for cdf/quantile work.
_Y_CAP = 2 ** 22
# Rows x support cells per chunk when tabulating pmfs.
_CHUNK_CELLS = 2_000_000


# ----------------------------------------------------------------------------
# links
# ----------------------------------------------------------------------------

class Link(enum.Enum):
    IDENTITY = "identity"
    LOG = "log"
    LOGIT = "logit"
    LOGIDENT = "logident"


def _unwrap(value, like):
    return float(value) if np.ndim(like) == 0 else value


def apply_link(link: Link, x):
    """Map a parameter value to the predictor scale, ``eta = g(x)``.

    ``logident`` is ``log(x)`` on (0, 1] continued linearly as ``x - 1``
    above one, which keeps the inverse from growing exponentially.
    """
    xa = np.asarray(x, dtype=float)
    if link is Link.IDENTITY:
        out = xa.copy()
    elif link in (Link.LOG, Link.LOGIDENT):
        if not np.all(xa > 0):
            raise DomainError(f"{link.value} link requires x > 0, got {x!r}")
        if link is Link.LOG:
            out = np.log(xa)
        else:
            out = np.where(xa <= 1.0, np.log(np.minimum(xa, 1.0)), xa - 1.0)
    elif link is Link.LOGIT:
        if not np.all((xa > 0) & (xa < 1)):
            raise DomainError(f"logit link requires 0 < x < 1, got {x!r}")
        out = logit(xa)
    else:  # pragma: no cover
        raise DomainError(f"unknown link {link!r}")
    return _unwrap(out, x)


def invert_link(link: Link, eta):
    """Inverse link ``g^-1(eta)``.

    The log inverse is clamped to [1e-10, 1e10] and the logit inverse to
    [1e-10, 1 - 1e-10] so that parameters always stay inside their open
    domains.
    """
    ea = np.asarray(eta, dtype=float)
    if link is Link.IDENTITY:
        out = ea.copy()
    elif link is Link.LOG:
        out = np.clip(np.exp(np.clip(ea, _LOG_ETA_MIN, _LOG_ETA_MAX)), *LOG_INV_BOUNDS)
    elif link is Link.LOGIDENT:
        out = np.where(ea <= 0, np.maximum(np.exp(np.clip(ea, _LOG_ETA_MIN, 0.0)), LOG_INV_BOUNDS[0]), ea + 1.0)
    elif link is Link.LOGIT:
        out = np.clip(expit(ea), LOGIT_INV_EPS, 1.0 - LOGIT_INV_EPS)
    else:  # pragma: no cover
        raise DomainError(f"unknown link {link!r}")
    return _unwrap(out, eta)


def link_derivative(link: Link, eta):
    """Derivative of the inverse link, ``d g^-1(eta) / d eta``."""
    ea = np.asarray(eta, dtype=float)
    if link is Link.IDENTITY:
        out = np.ones_like(ea)
    elif link is Link.LOG:
        out = np.exp(np.clip(ea, _LOG_ETA_MIN, _LOG_ETA_MAX))
    elif link is Link.LOGIDENT:
        out = np.where(ea <= 0, np.exp(np.minimum(ea, 0.0)), 1.0)
    elif link is Link.LOGIT:
        p = expit(ea)
        out = p * (1.0 - p)
    else:  # pragma: no cover
        raise DomainError(f"unknown link {link!r}")
    return _unwrap(out, eta)


# ----------------------------------------------------------------------------
# numerical helpers
# ----------------------------------------------------------------------------

def _stirling_tail(x):
    x2 = x * x
    return 1.0 / (12.0 * x) - 1.0 / (360.0 * x * x2) + 1.0 / (1260.0 * x * x2 * x2)


def _log_rising(a, y):
    """``lgamma(a + y) - lgamma(a)`` without cancellation for large ``a``."""
    a, y = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(y, dtype=float))
    out = np.empty(a.shape)
    big = a > 1e4
    small = ~big
    out[small] = gammaln(a[small] + y[small]) - gammaln(a[small])
    if big.any():
        ab, yb = a[big], y[big]
        out[big] = ((ab - 0.5) * np.log1p(yb / ab) + yb * np.log(ab + yb) - yb
                    + _stirling_tail(ab + yb) - _stirling_tail(ab))
    return out


@numba.njit(cache=True)
def _dpo_log_norm_kernel(mu, sigma, ylogy, base, out):
    # log u(y) = const + y (1 + log mu) / sigma + (1 - 1/sigma) y log y + base[y]
    # with base[y] = -y - lgamma(y + 1)
    for k in range(mu.shape[0]):
        m = mu[k]
        s = sigma[k]
        ymax = int(max(1000.0, math.ceil(m + 20.0 * math.sqrt(m * max(s, 1.0)))))
        slope = (1.0 + math.log(m)) / s
        curv = 1.0 - 1.0 / s
        y0 = int(math.floor(m))
        # shift by the term near the mode to keep exp() in range
        ref = y0 * slope + curv * ylogy[y0] + base[y0]
        total = 0.0
        for y in range(ymax + 1):
            term = math.exp(y * slope + curv * ylogy[y] + base[y] - ref)
            total += term
            # terms past the mode decrease monotonically
            if y > m + 1.0 and term < 1e-18 * total:
                break
        out[k] = ref + math.log(total) - 0.5 * math.log(s) - m / s


def _dpo_log_norm(mu, sigma):
    """Log normalizing constant of the double Poisson, by truncated summation.

    The sum runs to ``max(1000, ceil(mu + 20 sqrt(mu max(sigma, 1))))``,
    stopping early once remaining terms are below double precision.
    Repeated (mu, sigma) pairs are computed once.
    """
    mu, sigma = np.broadcast_arrays(np.asarray(mu, dtype=float), np.asarray(sigma, dtype=float))
    uniq, inverse = np.unique(mu.ravel() + 1j * sigma.ravel(), return_inverse=True)
    um = np.ascontiguousarray(uniq.real)
    us = np.ascontiguousarray(uniq.imag)
    ymax = int(max(1000.0, np.max(np.ceil(um + 20.0 * np.sqrt(um * np.maximum(us, 1.0))), initial=0.0)))
    ys = np.arange(ymax + 1, dtype=float)
    out = np.empty(uniq.shape[0])
    _dpo_log_norm_kernel(um, us, xlogy(ys, ys), -ys - gammaln(ys + 1.0), out)
    return out[inverse.ravel()].reshape(mu.shape)


# ----------------------------------------------------------------------------
# families
# ----------------------------------------------------------------------------

class FamilyId(enum.Enum):
    POISSON = "Poisson"
    GEOMETRIC = "Geometric"
    NEGBINOMIAL = "NegBinomial"
    WARING = "Waring"
    GENPOISSON = "GenPoisson"
    DOUBLEPOISSON = "DoublePoisson"
    ZEROINFPOISSON = "ZeroInfPoisson"


FAMILY_ORDER = tuple(FamilyId)


class Family:
    """A count distribution with ``M`` linked parameters.

    Subclasses implement ``_logpmf`` and ``mean_var``; the score and
    weight used by IWLS default to a central finite difference of the
    log-pmf on the predictor scale and may be overridden analytically.
    """

    id: FamilyId
    param_names: tuple[str, ...]
    default_links: tuple[Link, ...]
    start_values: tuple[float, ...] = ()

    def __init__(self, links: Sequence[Link] | None = None):
        links = tuple(self.default_links if links is None else links)
        if len(links) != self.M:
            raise DomainError(f"{self.name} needs {self.M} links, got {len(links)}")
        self.links = links

    @property
    def M(self) -> int:
        return len(self.param_names)

    @property
    def name(self) -> str:
        return self.id.value

    def __repr__(self):
        links = ", ".join(link.value for link in self.links)
        return f"{type(self).__name__}(links=[{links}])"

    def __eq__(self, other):
        return isinstance(other, Family) and (self.id, self.links) == (other.id, other.links)

    def __hash__(self):
        return hash((self.id, self.links))

    # -- domain --------------------------------------------------------------

    def _in_domain(self, m, value):
        return np.isfinite(value) & (value > 0)

    def check_theta(self, theta):
        if len(theta) != self.M:
            raise DomainError(f"{self.name} takes {self.M} parameters, got {len(theta)}")
        for m, value in enumerate(theta):
            if not np.all(self._in_domain(m, np.asarray(value, dtype=float))):
                raise DomainError(
                    f"{self.name}: parameter {self.param_names[m]} out of domain: {value!r}")

    # -- densities -------------------------------------------------------------

    def logpmf(self, y, *theta):
        """Vectorized log-pmf; ``y`` and each parameter broadcast together."""
        y = np.asarray(y, dtype=float)
        theta = [np.asarray(t, dtype=float) for t in theta]
        return self._logpmf(y, *theta)

    def _logpmf(self, y, *theta):
        raise NotImplementedError

    def mean_var(self, *theta):
        raise NotImplementedError

    def loglik(self, y, theta) -> float:
        return float(np.sum(self.logpmf(y, *theta)))

    def _cdf_table(self, theta, pmax):
        """Cumulative probabilities F(0..Y) per parameter row.

        ``Y`` starts at 16 and doubles until every row reaches ``pmax``
        (or the support cap is hit). Returns an array of shape (n, Y+1).
        """
        theta = [np.atleast_1d(np.asarray(t, dtype=float)) for t in theta]
        theta = np.broadcast_arrays(*theta)
        pmax = np.broadcast_to(np.asarray(pmax, dtype=float), theta[0].shape)
        ymax = 16
        while True:
            ys = np.arange(ymax + 1, dtype=float)
            F = np.cumsum(np.exp(self._logpmf(ys[None, :], *[t[:, None] for t in theta])), axis=1)
            if np.all(F[:, -1] >= pmax) or ymax >= _Y_CAP:
                return F
            done = F[:, -1] >= pmax
            if done.any() and ymax >= 1024:
                # finish the rows that still need a longer table on their own
                rest = self._cdf_table([t[~done] for t in theta], pmax[~done])
                out = np.repeat(F[:, -1:], rest.shape[1], axis=1)
                out[:, :F.shape[1]] = F
                out[~done] = rest
                return out
            ymax *= 2

    def cdf(self, y, *theta):
        """Vectorized cdf by cumulative summation of the pmf."""
        y = np.asarray(y)
        theta = list(np.broadcast_arrays(*[np.asarray(t, dtype=float) for t in theta], y))
        yb = theta.pop()
        shape = yb.shape
        yf = yb.ravel()
        tf = [t.ravel() for t in theta]
        out = np.empty(yf.shape)
        step = max(1, _CHUNK_CELLS // (int(yf.max(initial=0)) + 1))
        for lo in range(0, yf.size, step):
            sl = slice(lo, lo + step)
            hi = int(yf[sl].max())
            ys = np.arange(hi + 1, dtype=float)
            F = np.cumsum(np.exp(self._logpmf(ys[None, :], *[t[sl, None] for t in tf])), axis=1)
            out[sl] = np.minimum(F[np.arange(F.shape[0]), yf[sl].astype(np.int64)], 1.0)
        return out.reshape(shape)

    def quantile(self, p, *theta):
        """Integer quantiles: smallest ``q`` with ``F(q) >= p``.

        ``p`` is a 1-d grid shared by all parameter rows; the result has
        shape ``(n_rows, len(p))``.
        """
        p = np.atleast_1d(np.asarray(p, dtype=float))
        theta = np.broadcast_arrays(*[np.atleast_1d(np.asarray(t, dtype=float)) for t in theta])
        n = theta[0].size
        tf = [t.ravel() for t in theta]
        out = np.empty((n, p.size), dtype=np.int64)
        step = 4096
        for lo in range(0, n, step):
            sl = slice(lo, lo + step)
            F = self._cdf_table([t[sl] for t in tf], p.max())
            out[sl] = (F[:, :, None] < p[None, None, :]).sum(axis=1)
        return out

    def _inverse_cdf_rows(self, u, theta):
        """Per-row generalized inverse at uniforms ``u`` (used for sampling)."""
        theta = list(np.broadcast_arrays(*[np.asarray(t, dtype=float) for t in theta], u))
        u = theta.pop()
        if all(np.all(t == t.flat[0]) for t in theta):
            F = self._cdf_table([t.flat[:1] for t in theta], u.max())[0]
            return np.searchsorted(F, u, side="left")
        F = self._cdf_table([t.ravel() for t in theta], u.ravel())
        return (F < u.ravel()[:, None]).sum(axis=1).reshape(u.shape)

    def sample(self, rng: np.random.Generator, *theta, size=None):
        shape = np.broadcast_shapes(*[np.shape(t) for t in theta]) if size is None else size
        u = rng.random(shape)
        return self._inverse_cdf_rows(u, theta)

    # -- IWLS ingredients -----------------------------------------------------

    def _analytic_score(self, m, y, theta):
        """Return (dl/dtheta_m, expected information) or None."""
        return None

    def score_weight(self, m, y, theta, eta=None, *, weight_floor=1e-10):
        """Score ``u = dl/d eta_m`` and curvature weight ``w`` per observation.

        ``theta`` is the list of current parameter arrays; ``eta`` is the
        linear predictor of parameter ``m`` (recomputed from ``theta`` if
        omitted). Weights are floored at ``weight_floor``.
        """
        y = np.asarray(y, dtype=float)
        theta = [np.asarray(t, dtype=float) for t in theta]
        link = self.links[m]
        if eta is None:
            eta = apply_link(link, theta[m])
        eta = np.asarray(eta, dtype=float)
        analytic = self._analytic_score(m, y, theta)
        if analytic is not None:
            dl, info = analytic
            d = link_derivative(link, eta)
            u = dl * d
            w = info * d * d
        else:
            h = 1e-4 * np.maximum(1.0, np.abs(eta))

            def at(e):
                th = list(theta)
                th[m] = invert_link(link, e)
                return self._logpmf(y, *th)

            lp = at(eta + h)
            lm = at(eta - h)
            u = (lp - lm) / (2.0 * h)
            # squared score: its expectation is the Fisher information
            w = u * u
        u = np.broadcast_to(u, np.broadcast_shapes(np.shape(u), y.shape))
        bad = ~np.isfinite(u) | ~np.isfinite(w)
        if bad.any():
            i = int(np.flatnonzero(bad.ravel())[0])
            raise NumericalError(
                f"{self.name}: non-finite score for parameter {self.param_names[m]} "
                f"at observation {i} (y={y.ravel()[i % max(y.size, 1)]})")
        w = np.maximum(np.broadcast_to(w, u.shape), weight_floor)
        return np.array(u, dtype=float), np.array(w, dtype=float)


class Poisson(Family):
    id = FamilyId.POISSON
    param_names = ("mu",)
    default_links = (Link.LOG,)

    def _logpmf(self, y, mu):
        return xlogy(y, mu) - mu - gammaln(y + 1.0)

    def mean_var(self, mu):
        return mu, mu

    def _analytic_score(self, m, y, theta):
        mu = theta[0]
        return (y - mu) / mu, 1.0 / mu

    def sample(self, rng, mu, size=None):
        return rng.poisson(mu, size=size)


class Geometric(Family):
    id = FamilyId.GEOMETRIC
    param_names = ("mu",)
    default_links = (Link.LOG,)

    def _logpmf(self, y, mu):
        return xlogy(y, mu) - (y + 1.0) * np.log1p(mu)

    def mean_var(self, mu):
        return mu, mu * (1.0 + mu)

    def _analytic_score(self, m, y, theta):
        mu = theta[0]
        return (y - mu) / (mu * (1.0 + mu)), 1.0 / (mu * (1.0 + mu))

    def sample(self, rng, mu, size=None):
        return rng.geometric(1.0 / (1.0 + np.asarray(mu, dtype=float)), size=size) - 1


class NegBinomial(Family):
    id = FamilyId.NEGBINOMIAL
    param_names = ("mu", "sigma")
    default_links = (Link.LOG, Link.LOG)
    start_values = (None, 1.0)

    def _logpmf(self, y, mu, sigma):
        a = 1.0 / sigma
        return (_log_rising(a, y) - gammaln(y + 1.0) + xlogy(y, sigma * mu)
                - (y + a) * np.log1p(sigma * mu))

    def mean_var(self, mu, sigma):
        return mu, mu + sigma * mu * mu

    def _analytic_score(self, m, y, theta):
        if m != 0:
            return None
        mu, sigma = theta
        return (y - mu) / (mu * (1.0 + sigma * mu)), 1.0 / (mu * (1.0 + sigma * mu))

    def sample(self, rng, mu, sigma, size=None):
        mu, sigma = np.asarray(mu, dtype=float), np.asarray(sigma, dtype=float)
        return rng.negative_binomial(1.0 / sigma, 1.0 / (1.0 + sigma * mu), size=size)


class Waring(Family):
    """Beta-geometric mixture: Geometric(pi) with pi ~ Beta(1/sigma + 1, mu/sigma)."""

    id = FamilyId.WARING
    param_names = ("mu", "sigma")
    default_links = (Link.LOG, Link.LOG)
    start_values = (None, 1.0)

    def _logpmf(self, y, mu, sigma):
        alpha = 1.0 / sigma + 1.0
        beta = mu / sigma
        return np.log(alpha) + _log_rising(beta, y) - _log_rising(alpha + beta, y + 1.0)

    def mean_var(self, mu, sigma):
        mu, sigma = np.asarray(mu, dtype=float), np.asarray(sigma, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            var = np.where(sigma < 1.0, mu * (1.0 + mu) * (1.0 + sigma) / (1.0 - sigma), np.inf)
        return mu, _unwrap(var, sigma * mu)

    def sample(self, rng, mu, sigma, size=None):
        mu, sigma = np.asarray(mu, dtype=float), np.asarray(sigma, dtype=float)
        pi = rng.beta(1.0 / sigma + 1.0, mu / sigma, size=size)
        pi = np.clip(pi, 1e-300, 1.0)
        return rng.geometric(pi) - 1


class GenPoisson(Family):
    id = FamilyId.GENPOISSON
    param_names = ("mu", "sigma")
    default_links = (Link.LOG, Link.LOG)
    start_values = (None, 1.0)

    def _logpmf(self, y, mu, sigma):
        return (xlogy(y, mu) - y * np.log1p(sigma * mu) + (y - 1.0) * np.log1p(sigma * y)
                - gammaln(y + 1.0) - mu * (1.0 + sigma * y) / (1.0 + sigma * mu))

    def mean_var(self, mu, sigma):
        return mu, mu * (1.0 + sigma * mu) ** 2


class DoublePoisson(Family):
    """Efron's double Poisson; the normalizer is obtained by summation."""

    id = FamilyId.DOUBLEPOISSON
    param_names = ("mu", "sigma")
    default_links = (Link.LOG, Link.LOG)
    start_values = (None, 1.0)

    def _logpmf(self, y, mu, sigma):
        log_u = (-0.5 * np.log(sigma) - mu / sigma - y + xlogy(y, y) - gammaln(y + 1.0)
                 + (y / sigma) * (1.0 + np.log(mu)) - xlogy(y, y) / sigma)
        return log_u - _dpo_log_norm(mu, sigma)

    def mean_var(self, mu, sigma):
        mu, sigma = np.asarray(mu, dtype=float), np.asarray(sigma, dtype=float)
        mf, sf = np.broadcast_arrays(mu, sigma)
        mean = np.empty(mf.shape)
        var = np.empty(mf.shape)
        for idx in np.ndindex(mf.shape):
            m, s = mf[idx], sf[idx]
            ymax = max(1000, math.ceil(m + 20.0 * math.sqrt(m * max(s, 1.0))))
            ys = np.arange(ymax + 1, dtype=float)
            pmf = np.exp(self._logpmf(ys, m, s))
            mean[idx] = np.dot(ys, pmf)
            var[idx] = np.dot((ys - mean[idx]) ** 2, pmf)
        return _unwrap(mean, mu * sigma), _unwrap(var, mu * sigma)


class ZeroInfPoisson(Family):
    id = FamilyId.ZEROINFPOISSON
    param_names = ("mu", "sigma")
    default_links = (Link.LOG, Link.LOGIT)
    start_values = (None, 0.1)

    def _in_domain(self, m, value):
        if m == 1:
            return np.isfinite(value) & (value > 0) & (value < 1)
        return super()._in_domain(m, value)

    def _logpmf(self, y, mu, sigma):
        with np.errstate(divide="ignore"):
            zero = np.logaddexp(np.log(sigma), np.log1p(-sigma) - mu)
        pos = np.log1p(-sigma) + xlogy(y, mu) - mu - gammaln(y + 1.0)
        return np.where(y == 0, zero, pos)

    def mean_var(self, mu, sigma):
        return (1.0 - sigma) * mu, (1.0 - sigma) * mu * (1.0 + sigma * mu)

    def sample(self, rng, mu, sigma, size=None):
        mu, sigma = np.asarray(mu, dtype=float), np.asarray(sigma, dtype=float)
        shape = np.broadcast_shapes(mu.shape, sigma.shape) if size is None else size
        structural = rng.random(shape) < sigma
        return np.where(structural, 0, rng.poisson(mu, size=shape))


_FAMILY_CLASSES = {
    FamilyId.POISSON: Poisson,
    FamilyId.GEOMETRIC: Geometric,
    FamilyId.NEGBINOMIAL: NegBinomial,
    FamilyId.WARING: Waring,
    FamilyId.GENPOISSON: GenPoisson,
    FamilyId.DOUBLEPOISSON: DoublePoisson,
    FamilyId.ZEROINFPOISSON: ZeroInfPoisson,
}


def make_family(family, links: Sequence[Link] | None = None) -> Family:
    """Build a family from a :class:`FamilyId`, its name, or a Family instance."""
    if isinstance(family, Family):
        return family if links is None else type(family)(links)
    try:
        fid = family if isinstance(family, FamilyId) else FamilyId(family)
    except ValueError:
        raise DomainError(f"unknown family {family!r}") from None
    links = None if links is None else [Link(l) if isinstance(l, str) else l for l in links]
    return _FAMILY_CLASSES[fid](links)


# ----------------------------------------------------------------------------
# scalar API
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ParamVector:
    """Validated parameter values for one family."""

    family: Family
    theta: tuple[float, ...]

    def __post_init__(self):
        fam = make_family(self.family)
        theta = tuple(float(t) for t in self.theta)
        fam.check_theta(theta)
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "theta", theta)

    def __iter__(self):
        return iter(self.theta)

    def __len__(self):
        return len(self.theta)

    def __getitem__(self, m):
        return self.theta[m]


def _resolve(family, theta):
    fam = make_family(family)
    if isinstance(theta, ParamVector):
        if theta.family.id != fam.id:
            raise DomainError(f"parameters belong to {theta.family.name}, not {fam.name}")
        return fam, theta.theta
    pv = ParamVector(fam, tuple(np.atleast_1d(theta)))
    return fam, pv.theta


def _check_count(y):
    if y < 0 or int(y) != y:
        raise DomainError(f"counts must be nonnegative integers, got {y!r}")
    return int(y)


def log_pmf(family, theta, y) -> float:
    fam, th = _resolve(family, theta)
    return float(fam.logpmf(_check_count(y), *th))


def cdf(family, theta, y) -> float:
    fam, th = _resolve(family, theta)
    return float(fam.cdf(_check_count(y), *th))


def quantile(family, theta, p: float) -> int:
    if not 0.0 < p < 1.0:
        raise DomainError(f"quantile probability must lie in (0, 1), got {p!r}")
    fam, th = _resolve(family, theta)
    return int(fam.quantile([p], *th)[0, 0])


def moments(family, theta) -> tuple[float, float]:
    """Mean and variance. Waring with sigma >= 1 has variance ``inf``."""
    fam, th = _resolve(family, theta)
    mean, var = fam.mean_var(*th)
    return float(mean), float(var)


def score_and_weight(family, m: int, theta, eta_m: float | None, y) -> tuple[float, float]:
    fam, th = _resolve(family, theta)
    if not 0 <= m < fam.M:
        raise DomainError(f"{fam.name} has no parameter index {m}")
    u, w = fam.score_weight(m, float(_check_count(y)), list(th), eta_m)
    return float(u), float(w)


def sample(family, theta, seed: int, size=None):
    """Draw counts; a fixed seed gives identical draws."""
    fam, th = _resolve(family, theta)
    rng = np.random.default_rng(seed)
    draws = fam.sample(rng, *th, size=size)
    return int(draws) if size is None else np.asarray(draws, dtype=np.int64)
