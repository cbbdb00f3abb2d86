import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from countlss.count_dist import make_family
from countlss.errors import RangeError
from countlss.evaluate import (BENCHMARK, COMPOSITE, ClusterFits, QuantileForecast, QuantileGrid,
                               benchmark_forecast, empirical_quantiles, evaluate_report,
                               forecast_quantiles, hqc_summary, pinball)
from countlss.features import DesignMatrix, SalesPanel
from countlss.iwls import FitConfig, FitResult, rs_backfit

P = QuantileGrid().array


def _fit(family, coefs, hqc=1.0):
    fam = make_family(family)
    return FitResult(fam, [np.array([c]) for c in coefs], [0.0] * fam.M, -1.0, fam.M, 100,
                     {"AIC": hqc, "BIC": hqc, "HQC": hqc}, True, 1, ["intercept"])


def test_grid_validation():
    assert len(QuantileGrid()) == 9
    with pytest.raises(RangeError):
        QuantileGrid((0.5, 0.25))
    with pytest.raises(RangeError):
        QuantileGrid((0.0, 0.5))


def test_pinball_examples():
    assert pinball(5, 3, 0.975) == pytest.approx(1.95)
    assert pinball(3, 5, 0.975) == pytest.approx(0.05)
    assert pinball(4, 4, 0.3) == 0.0


@given(st.integers(0, 50), st.integers(0, 50), st.floats(0.001, 0.999))
def test_pinball_nonnegative(y, q, p):
    v = pinball(y, q, p)
    assert v >= 0 and (v == 0) == (y == q)


def test_poisson_forecast_median():
    fc = forecast_quantiles(_fit("Poisson", [0.0]), np.ones((1, 1)))
    assert fc.q[0, 4] == 1
    assert np.all(np.diff(fc.q[0]) >= 0)


def test_zip_forecast_mostly_zero():
    # logit-linked zero share of 0.98
    fit = _fit("ZeroInfPoisson", [0.0, math.log(0.98 / 0.02)])
    fc = forecast_quantiles(fit, np.ones((1, 1)))
    assert np.all(fc.q[0, :8] == 0)


def test_forecast_rejects_mismatched_columns():
    with pytest.raises(ValueError):
        forecast_quantiles(_fit("Poisson", [0.0]), np.ones((2, 3)))


def test_clamp_flag():
    fc = forecast_quantiles(_fit("Poisson", [-40.0]), np.ones((1, 1)))
    assert fc.clamped[0] and fc.q[0, -1] == 0


def test_empirical_quantiles():
    assert list(empirical_quantiles([4] * 8, P)) == [4] * 9
    h = [0] * 7 + [8]
    q = empirical_quantiles(h, P)
    assert q[4] == 0 and q[-1] == 8
    # F(0) = 7/8 is exactly 0.875, so p = 0.875 still maps to 0
    assert empirical_quantiles(h, [0.875])[0] == 0


def _panel(Y):
    Y = np.asarray(Y, dtype=np.int64)
    if Y.ndim == 1:
        Y = Y[:, None, None]
    return SalesPanel(Y, np.arange(Y.shape[0]).astype("datetime64[D]"),
                      [f"i{k}" for k in range(Y.shape[1])], [f"s{k}" for k in range(Y.shape[2])])


def test_benchmark_same_weekday():
    y = np.zeros(70, dtype=int)
    y[np.arange(0, 63, 7)] = 8            # one weekday always sells 8
    fc = benchmark_forecast(_panel(y), QuantileGrid(), 63, 0, 0)
    assert np.all(fc.q == 8)
    fc = benchmark_forecast(_panel(y), QuantileGrid(), 64, 0, 0)
    assert np.all(fc.q == 0)


def test_benchmark_short_history_falls_back():
    y = np.array([0, 1, 2, 3, 4, 5, 6, 7, 8, 9])
    fc = benchmark_forecast(_panel(y), QuantileGrid((0.5,)), 10, 0, 0)
    assert fc.q[0, 0] == 4


def _batch(days, q, source):
    n = len(days)
    return QuantileForecast(days, np.zeros(n), np.zeros(n), np.asarray(q), source)


def test_perfect_forecast_report():
    y = np.array([0, 3, 1, 0, 2, 5])
    panel = _panel(y)
    perfect = _batch(np.arange(6), np.repeat(y[:, None], 9, axis=1), "Poisson")
    bench = _batch(np.arange(6), np.ones((6, 9), dtype=int), BENCHMARK)
    rep = evaluate_report([perfect, bench], panel)
    assert rep.avg_loss["Poisson"] == 0.0
    assert rep.improvement_pct["Poisson"] == 100.0
    assert rep.improvement_pct[BENCHMARK] == 0.0
    assert rep.sources == ["Poisson", BENCHMARK]
    assert rep.avg_loss[BENCHMARK] == pytest.approx(np.mean(rep.per_quantile_loss[BENCHMARK]))


def test_report_permutation_invariant(rng):
    Y = rng.poisson(2.0, size=(30, 4, 2))
    panel = _panel(Y)
    keys = np.array([(t, i, j) for t in range(30) for i in range(4) for j in range(2)])
    q = np.sort(rng.integers(0, 6, size=(len(keys), 9)), axis=1)
    perm = rng.permutation(len(keys))
    a = QuantileForecast(keys[:, 0], keys[:, 1], keys[:, 2], q, "NegBinomial")
    parts = np.array_split(perm, 3)
    b = [QuantileForecast(keys[p, 0], keys[p, 1], keys[p, 2], q[p], "NegBinomial") for p in parts]
    ra, rb = evaluate_report([a], panel), evaluate_report(b, panel)
    assert ra.per_quantile_loss == rb.per_quantile_loss
    assert ra.avg_loss == rb.avg_loss


def test_missing_keys_raise():
    panel = _panel([1, 2, 3])
    with pytest.raises(KeyError, match="missing"):
        evaluate_report([_batch([5], np.ones((1, 9)), "Poisson")], panel)


def test_report_csv_layout(tmp_path):
    panel = _panel([1, 2, 3, 0])
    fcs = [_batch(np.arange(4), np.ones((4, 9), dtype=int), s)
           for s in ("NegBinomial", "Poisson", BENCHMARK, COMPOSITE)]
    cf = [ClusterFits(0, 3, {"Poisson": _fit("Poisson", [0.0], 2.0),
                             "NegBinomial": _fit("NegBinomial", [0.0, 0.0], 1.5)})]
    rep = evaluate_report(fcs, panel, cluster_fits=cf)
    rep.to_csv(tmp_path / "report.csv")
    df = pd.read_csv(tmp_path / "report.csv")
    assert list(df["source"]) == ["Poisson", "NegBinomial", COMPOSITE, BENCHMARK]
    assert len(df.columns) == 1 + 9 + 5
    assert df.set_index("source").loc["NegBinomial", "best_hqc_pct"] == 100.0
    assert df.set_index("source").loc[COMPOSITE, "mean_hqc"] == 1.5
    rep.per_quantile_csv(tmp_path / "pq.csv")
    assert len(pd.read_csv(tmp_path / "pq.csv")) == 4 * 9


def test_hqc_summary_weighting():
    fits = [ClusterFits(0, 1, {"Poisson": _fit("Poisson", [0.0], 1.0),
                               "NegBinomial": _fit("NegBinomial", [0.0, 0.0], 2.0)}),
            ClusterFits(1, 3, {"Poisson": _fit("Poisson", [0.0], 3.0),
                               "NegBinomial": _fit("NegBinomial", [0.0, 0.0], 2.0)})]
    mean_hqc, best, weighted = hqc_summary(fits)
    assert mean_hqc["Poisson"] == 2.0 and mean_hqc[COMPOSITE] == 1.5
    assert best == {"Poisson": 50.0, "NegBinomial": 50.0}
    assert weighted == {"Poisson": 25.0, "NegBinomial": 75.0}


def test_true_quantile_minimizes_expected_pinball(rng):
    # fitted model on known-family data beats +-1 shifted constant quantiles
    n = 100_000
    y = rng.poisson(2.5, n)
    fit = rs_backfit(DesignMatrix.from_arrays(np.ones((n, 1)), y), FitConfig("Poisson"))
    q = forecast_quantiles(fit, np.ones((1, 1))).q[0]
    for k, p in enumerate(P):
        base = pinball(y, q[k], p).mean()
        for d in (-1, 1):
            if q[k] + d >= 0:
                assert base <= pinball(y, q[k] + d, p).mean()
