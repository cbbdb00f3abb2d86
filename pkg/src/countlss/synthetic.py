"""
Simulated sales panels with a known generating family.

Log means combine an item level, a store effect, a weekday profile and
a slowly varying AR(1) item state, so lagged demand carries signal.
Counts are then drawn from the requested family around that mean.
"""
from __future__ import annotations

import os

import numpy as np
import pandas as pd

from .count_dist import make_family
from .features import SalesPanel

# weekday effects on the log mean, Monday first
WEEKDAY_EFFECT = np.array([-0.10, -0.05, 0.0, 0.0, 0.15, 0.30, 0.25])


def simulate_mu(n_items: int, n_stores: int, n_days: int, rng: np.random.Generator,
                start: str = "2014-01-01", level_range=(0.3, 3.0),
                ar_phi: float = 0.95, ar_sd: float = 0.15) -> tuple[np.ndarray, np.ndarray]:
    """Mean array of shape (days, items, stores) and the matching dates."""
    dates = np.arange(np.datetime64(start, "D"), np.datetime64(start, "D") + n_days)
    wd = (dates.astype(np.int64) + 3) % 7
    level = rng.uniform(np.log(level_range[0]), np.log(level_range[1]), n_items)
    store = rng.normal(0.0, 0.2, n_stores)
    state = np.empty((n_days, n_items))
    state[0] = rng.normal(0.0, ar_sd / np.sqrt(1 - ar_phi ** 2), n_items)
    shocks = rng.normal(0.0, ar_sd, (n_days, n_items))
    for t in range(1, n_days):
        state[t] = ar_phi * state[t - 1] + shocks[t]
    log_mu = (level[None, :, None] + store[None, None, :] + WEEKDAY_EFFECT[wd][:, None, None]
              + state[:, :, None])
    return np.exp(log_mu), dates


def simulate_panel(family="NegBinomial", n_items: int = 50, n_stores: int = 2,
                   n_days: int = 400, sigma: float = 1.0, seed: int = 0,
                   start: str = "2014-01-01", **mu_kwargs) -> SalesPanel:
    """Draw a panel whose counts follow ``family`` around a covariate-driven mean.

    ``sigma`` is the second parameter for two-parameter families and is
    ignored for one-parameter ones.
    """
    fam = make_family(family)
    rng = np.random.default_rng(seed)
    mu, dates = simulate_mu(n_items, n_stores, n_days, rng, start=start, **mu_kwargs)
    theta = [mu] if fam.M == 1 else [mu, np.full(mu.shape, float(sigma))]
    counts = np.asarray(fam.sample(rng, *theta), dtype=np.int64)
    width = len(str(n_items))
    return SalesPanel(counts, dates, [f"ITEM_{i:0{width}d}" for i in range(n_items)],
                      [f"ST_{j}" for j in range(n_stores)])


def iid_panel(family, theta, n_series: int, n_days: int, seed: int = 0,
              start: str = "2014-01-01") -> SalesPanel:
    """``n_series`` single-store items of i.i.d. draws with fixed parameters."""
    fam = make_family(family)
    rng = np.random.default_rng(seed)
    shape = (n_days, n_series, 1)
    counts = fam.sample(rng, *[np.full(shape, float(t)) for t in theta])
    dates = np.arange(np.datetime64(start, "D"), np.datetime64(start, "D") + n_days)
    return SalesPanel(np.asarray(counts, dtype=np.int64), dates,
                      [f"ITEM_{i}" for i in range(n_series)], ["ST_0"])


def write_m5_csv(panel: SalesPanel, directory) -> tuple[str, str]:
    """Write ``sales.csv`` and ``calendar.csv`` in the M5 wide layout."""
    os.makedirs(directory, exist_ok=True)
    day_cols = [f"d_{k + 1}" for k in range(panel.n_days)]
    rows = []
    for i, item in enumerate(panel.item_ids):
        for j, store in enumerate(panel.store_ids):
            rows.append([f"{item}_{store}", item, "DEPT_1", "CAT", store, "ST"]
                        + panel.counts[:, i, j].tolist())
    sales = pd.DataFrame(rows, columns=["id", "item_id", "dept_id", "cat_id", "store_id", "state_id"]
                         + day_cols)
    dates = pd.to_datetime(panel.dates)
    calendar = pd.DataFrame({"date": dates.strftime("%Y-%m-%d"), "weekday": dates.day_name(),
                             "d": day_cols})
    sales_path = os.path.join(directory, "sales.csv")
    cal_path = os.path.join(directory, "calendar.csv")
    sales.to_csv(sales_path, index=False)
    calendar.to_csv(cal_path, index=False)
    return sales_path, cal_path
