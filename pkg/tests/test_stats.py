import json
import math

import numpy as np
import pytest
from scipy import stats as sps

from glauber_kawasaki.engine import ClockMode, ensemble, simulate
from glauber_kawasaki.lattice import Configuration, Params
from glauber_kawasaki.limits import SdeParams, fast_field_variance, gaussian_fast_field, sde_simulate
from glauber_kawasaki.stats import (
    EstimatorReport,
    calibrate,
    concentration_check,
    covariance_estimator,
    jackknife_mean_se,
    ks_distance,
    ks_two_sample,
    moment_ci,
    qv_convergence,
    qv_mean_check,
    ratio_of_means,
    residual_brownian_check,
    residual_W,
)


def test_report_verdicts_and_round_trip():
    r = EstimatorReport("x", 1.02, 0.01, 100, 1.0, 0.05)
    assert r.passed
    assert not EstimatorReport("x", 1.2, 0.01, 100, 1.0, 0.05).passed
    assert EstimatorReport("x", 0.1, math.nan, 10, 0.2, 0.0, "below").passed
    assert not EstimatorReport("x", 15.0, 1.0, 10, 16.0, 3.0, "upper").passed
    assert not EstimatorReport("x", math.nan, 1.0, 10, 1.0, 3.0).passed
    d = json.loads(r.to_json())
    assert d["pass"] is True
    assert EstimatorReport.from_dict(d) == r
    d["pass"] = False
    with pytest.raises(ValueError):
        EstimatorReport.from_dict(d)
    with pytest.raises(ValueError):
        EstimatorReport("x", 1.0, 0.0, 1, 1.0, 0.0, "sideways")
    assert r.line().startswith("[PASS] x:")


def test_jackknife_equals_classical_se(rng):
    x = rng.standard_normal(500)
    m, se = jackknife_mean_se(x)
    assert m == pytest.approx(x.mean())
    assert se == pytest.approx(x.std(ddof=1) / math.sqrt(500))


def test_moment_ci():
    rep = moment_ci(np.full(100, 2.0), 2, 4.0)
    assert "degenerate" in rep.flags and rep.se == 0.0
    z = np.random.default_rng(0).standard_normal(10**6)
    assert moment_ci(z, 2, 1.0).passed
    assert moment_ci(z, 4, 3.0).passed
    with pytest.raises(ValueError):
        moment_ci(np.ones(5), 2)


def test_ks_calibration_and_power():
    rng = np.random.default_rng(1)
    passes = sum(ks_distance(rng.standard_normal(1000), sps.norm.cdf).passed for _ in range(200))
    assert passes >= 180
    assert not ks_distance(rng.standard_normal(10_000) + 0.1, sps.norm.cdf).passed
    small = np.mean([ks_distance(rng.standard_normal(10**4), sps.norm.cdf).estimate for _ in range(20)])
    large = np.mean([ks_distance(rng.standard_normal(10**5), sps.norm.cdf).estimate for _ in range(20)])
    assert 2.0 < small / large < 5.0
    assert ks_two_sample(rng.standard_normal(3000), rng.standard_normal(3000)).passed


def test_ratio_of_means(rng):
    rep = ratio_of_means(rng.normal(2.0, 0.1, 1000), rng.normal(2.0, 0.1, 1000), "r", 0.01)
    assert rep.passed and rep.se > 0


def test_qv_reports():
    params = Params.from_gamma(16, 1.0, 0.0)
    ens = ensemble(params, ClockMode.ACCELERATED, Configuration.from_bits("10" * 8), 5, [0.5, 1.0], 1,
                   observables=("qv",))
    rep = qv_convergence(ens, 1.0)
    assert rep.estimate == pytest.approx(0.0, abs=1e-12) and rep.estimate >= 0
    assert qv_mean_check(ens, 1.0).estimate == pytest.approx(1.0)
    noqv = ensemble(params, ClockMode.ACCELERATED, Configuration.from_bits("10" * 8), 2, [1.0], 1)
    with pytest.raises(ValueError):
        qv_convergence(noqv, 1.0)


def test_residual_without_reaction():
    y = np.random.default_rng(2).standard_normal((4, 6))
    W = residual_W(np.linspace(0, 1, 6), y, 0.0, 1.0)
    np.testing.assert_allclose(W, y - y[:, :1])


def test_residual_on_sde_paths():
    rng = np.random.default_rng(3)
    p = SdeParams(1.0, 0.5, 1e-3, 1.0)
    path = sde_simulate(p, rng.standard_normal(3000) * 0.5, rng, record_times=np.linspace(0, 1, 201))
    rep = residual_brownian_check(path.times, path.values.T, 1.0, 0.5)
    assert rep.passed and "coarse_grid" not in rep.flags


def test_covariance_of_gaussian_field():
    rng = np.random.default_rng(4)
    draws = gaussian_fast_field(2, 1.0, rng, n_times=2 * 4000).reshape(4000, 2, 2, 2)
    # columns: (t0, k1), (t0, k2), (t1, k1)
    X = np.column_stack([draws[:, 0, 0, 0], draws[:, 0, 0, 1], draws[:, 1, 0, 0]])
    cov = covariance_estimator(X, ["t0k1", "t0k2", "t1k1"])
    assert cov.check(0, 0, float(fast_field_variance(1, 1.0)), "var").passed
    assert cov.check(0, 1, 0.0, "cross").passed
    assert cov.check(0, 2, 0.0, "time").passed
    assert np.all(np.isfinite(cov.z_scores(np.zeros((3, 3)))))
    assert json.dumps(cov.to_dict())
    with pytest.raises(ValueError):
        covariance_estimator(X[:10])


def test_concentration_examples():
    rng = np.random.default_rng(5)
    n = 200
    base = np.zeros(n)
    base[: n // 2] = 1
    occ = rng.permuted(np.tile(base, (2000, 1)), axis=1)
    rep0 = concentration_check(occ, np.zeros(n), 0.25)
    assert rep0.estimate == 1.0 and rep0.passed
    assert concentration_check(occ, np.ones(n), 0.25).passed
    weights = rng.uniform(-1, 1, n)
    rep = concentration_check(occ, weights, 0.25 / np.max(np.abs(weights)) ** 2)
    assert rep.passed and rep.estimate > 1.0
    with pytest.raises(ValueError):
        concentration_check(occ, np.ones(n), 0.3)


def test_calibration_suite():
    reports = calibrate()
    assert len(reports) == 7 and all(r.passed for r in reports)
