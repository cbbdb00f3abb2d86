import math

import numpy as np
import pandas as pd
import pytest

from countlss.diagnostics import (SIGMA_BOUNDS, dispersion, iod_table, ml_fit_unconditional,
                                  zero_fit_table, write_iod_csv, write_zerofit_csv)
from countlss.errors import DomainError
from countlss.features import SalesPanel
from countlss.synthetic import iid_panel


def _one(series):
    Y = np.asarray(series, dtype=np.int64)[:, None, None]
    return SalesPanel(Y, np.arange(Y.shape[0]).astype("datetime64[D]"), ["i"], ["s"])


def test_dispersion_example():
    assert dispersion([0, 0, 3, 1])[:3] == (1.0, 2.0, 2.0)


def test_all_zero_series_flagged():
    (rec,) = iod_table(_one([0] * 10))
    assert rec.undefined and math.isnan(rec.iod) and rec.zero_prop == 1.0
    (z,) = zero_fit_table(_one([0] * 10))
    assert z.f0_observed == 1.0 and z.f0_poisson == 1.0


def test_poisson_equidispersion(rng):
    mean, var, iod, _ = dispersion(rng.poisson(5.0, 10_000))
    assert 0.94 <= iod <= 1.06


def test_nb_iod_near_theory():
    recs = iod_table(iid_panel("NegBinomial", (2.0, 1.0), 40, 2000, seed=5))
    assert np.median([r.iod for r in recs]) == pytest.approx(3.0, abs=0.2)


def test_poisson_mle_is_mean():
    assert ml_fit_unconditional("Poisson", [0, 1, 2, 3]).mu == 1.5


def test_nb_mle_recovers_truth(rng):
    from countlss.count_dist import make_family
    y = make_family("NegBinomial").sample(rng, np.full(100_000, 2.0), np.full(100_000, 1.0))
    fit = ml_fit_unconditional("NegBinomial", y)
    assert fit.mu == pytest.approx(2.0, rel=0.05)
    assert fit.sigma == pytest.approx(1.0, rel=0.05)


def test_nb_mle_profile_is_maximal(rng):
    from countlss.count_dist import make_family
    nb = make_family("NegBinomial")
    y = nb.sample(rng, np.full(3000, 1.5), np.full(3000, 0.6))
    fit = ml_fit_unconditional("NegBinomial", y)

    def ll(s):
        return nb.loglik(y, [np.full(y.size, fit.mu), np.full(y.size, s)])

    best = ll(fit.sigma)
    for s in (fit.sigma * 0.98, fit.sigma * 1.02):
        assert ll(s) <= best


def test_nb_on_underdispersed_hits_lower_bound():
    y = np.tile([1, 2, 1, 2, 2, 1], 200)
    fit = ml_fit_unconditional("NegBinomial", y)
    assert fit.sigma == pytest.approx(SIGMA_BOUNDS[0], rel=1e-6)


def test_nb_on_poisson_data_small_sigma(rng):
    fit = ml_fit_unconditional("NegBinomial", rng.poisson(3.0, 20_000))
    assert fit.sigma < 0.02


def test_unsupported_family():
    with pytest.raises(DomainError):
        ml_fit_unconditional("Waring", [1, 2])


def test_zero_fit_examples():
    (z,) = zero_fit_table(_one([0, 1, 2, 1]))
    assert z.mle_mu == 1.0 and z.f0_poisson == pytest.approx(0.367879, abs=1e-6)
    # the closed form at mu = sigma = 1
    assert (1 + 1.0 * 1.0) ** (-1 / 1.0) == 0.5


def test_negbin_f0_dominates_poisson():
    recs = zero_fit_table(iid_panel("NegBinomial", (1.0, 0.8), 30, 500, seed=9))
    for r in recs:
        assert r.f0_negbin >= r.f0_poisson
        assert 0 <= r.f0_negbin <= 1


def test_nb_zero_fit_closer_than_poisson():
    recs = zero_fit_table(iid_panel("NegBinomial", (2.0, 0.5), 60, 730, seed=4))
    e_p = np.mean([r.f0_observed - r.f0_poisson for r in recs])
    e_nb = np.mean([r.f0_observed - r.f0_negbin for r in recs])
    assert abs(e_nb) < abs(e_p)


def test_csv_outputs(tmp_path):
    p = iid_panel("Poisson", (1.0,), 3, 50, seed=0)
    write_iod_csv(iod_table(p), tmp_path / "iod.csv")
    write_zerofit_csv(zero_fit_table(p), tmp_path / "zerofit.csv")
    iod = pd.read_csv(tmp_path / "iod.csv")
    assert list(iod.columns) == ["item_id", "store_id", "mean", "variance", "iod", "zero_prop", "n"]
    zf = pd.read_csv(tmp_path / "zerofit.csv")
    assert list(zf.columns) == ["item_id", "store_id", "f0_observed", "f0_poisson", "f0_negbin",
                                "mu", "sigma"]
    assert len(iod) == len(zf) == 3
