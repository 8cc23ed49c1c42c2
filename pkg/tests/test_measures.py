import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from glauber_kawasaki.lattice import Configuration, derived_gamma, glauber_rates
from glauber_kawasaki.measures import (
    Canonical,
    CanonicalG,
    GTilted,
    IsingInit,
    MagnetisationMarginal,
    Product,
    ProductProfile,
    UTilted,
    all_states,
    birth_death,
    detailed_balance_residual,
    log_weight,
    log_weights_all,
    metropolis_sample,
    pair_matrix,
    parse_measure,
    partition_Z_U,
    potential_U,
    probabilities_all,
    relative_entropy,
    sample,
    sample_counts,
    spec_warnings,
    z_u_limit,
)
from glauber_kawasaki.observables import TestFunction

LOG2 = math.log(2.0)


def test_potential_U_values():
    for g in (0.5, 0.3, 1e-7, -0.2):
        assert potential_U(0.0, g) == 0.0
        assert potential_U(0.0, g, 1) == 0.0
        h = 1e-5
        fd = (potential_U(h, g) - 2 * potential_U(0.0, g) + potential_U(-h, g)) / h**2
        assert fd == pytest.approx(8 * g, rel=1e-4, abs=1e-9)
        assert potential_U(0.0, g, 2) == pytest.approx(8 * g, rel=1e-14)
    direct = 2 * (1.5 * math.log(1.5) + 0.5 * math.log(0.5))
    assert potential_U(0.5, 0.5) == pytest.approx(direct, rel=1e-14)


def test_potential_U_taylor_branch_is_continuous():
    r = np.linspace(-0.5, 0.5, 11)
    lo = potential_U(r, 0.999e-6) / 0.999e-6
    hi = potential_U(r, 1.001e-6) / 1.001e-6
    np.testing.assert_allclose(lo, hi, rtol=1e-6, atol=1e-12)
    np.testing.assert_allclose(lo, 4 * r**2, rtol=1e-6)


def test_potential_U_derivatives_by_differences():
    r = np.linspace(-0.45, 0.45, 19)
    h = 1e-6
    for g in (0.5, 0.8):
        d1 = (potential_U(r + h, g) - potential_U(r - h, g)) / (2 * h)
        np.testing.assert_allclose(potential_U(r, g, 1), d1, rtol=1e-7, atol=1e-9)
        d2 = (potential_U(r + h, g, 1) - potential_U(r - h, g, 1)) / (2 * h)
        np.testing.assert_allclose(potential_U(r, g, 2), d2, rtol=1e-7)


def test_log_weight_examples(rng):
    n = 8
    states = all_states(n)
    np.testing.assert_allclose(log_weight(Product(0.5), states), -n * LOG2)
    np.testing.assert_allclose(log_weight(GTilted(0.0, 1.0), states), -n * LOG2, atol=1e-12)
    half = Configuration.from_bits("10101010")
    assert log_weight(UTilted(0.0), half) == pytest.approx(-8 * LOG2, abs=1e-14)
    assert log_weight(Canonical(3), half) == -math.inf
    assert log_weight(CanonicalG(3, 0.3, 1.0), half) == -math.inf


def test_gtilted_log_weight_direct_sum():
    n = 6
    spec = GTilted(0.4, 1.0, L=2000)
    G = pair_matrix(n, 0.4, 1.0, 2000)
    c = Configuration.from_bits("110100")
    x = c.eta_bar
    direct = sum(G[i, j] * x[i] * x[j] for i in range(n) for j in range(n) if i != j) / (2 * n) - n * LOG2
    assert log_weight(spec, c) == pytest.approx(direct, abs=1e-13)
    assert np.allclose(G, G.T) and np.all(np.diag(G) == 0)


def test_product_sampler_mean():
    rng = np.random.default_rng(1)
    c = sample(Product(0.5), 10_000, rng)
    assert abs(c.m / 1e4 - 0.5) <= 3 * 0.5 / 100


def test_profile_and_canonical_samplers(rng):
    c = sample(Canonical(7), 20, rng)
    assert c.m == 7
    prof = ProductProfile(0.5, 0.4, 1)
    occ = np.array([sample(prof, 32, rng).occupations for _ in range(4000)])
    np.testing.assert_allclose(occ.mean(axis=0), prof.densities(32), atol=4 * 0.5 / math.sqrt(4000))
    with pytest.raises(ValueError):
        sample(Canonical(30), 20, rng)


def test_gtilted_enumeration_sampler_two_point():
    n, N = 12, 4000
    spec = GTilted(0.4, 1.0)
    rng = np.random.default_rng(2)
    x = np.array([sample(spec, n, rng).eta_bar for _ in range(N)])
    est = x[:, 0] * x[:, 1]
    p = probabilities_all(spec, n)
    states = all_states(n).astype(float) - 0.5
    exact = float(p @ (states[:, 0] * states[:, 1]))
    assert abs(est.mean() - exact) <= 4 * est.std(ddof=1) / math.sqrt(N)


def test_metropolis_matches_enumeration():
    n = 12
    rng = np.random.default_rng(3)
    for spec in (GTilted(0.45, 1.0), CanonicalG(6, 0.45, 1.0)):
        config, diag = metropolis_sample(spec, n, rng, burn_in_sweeps=200, diag_sweeps=4000)
        assert diag.converged
        p = probabilities_all(spec, n)
        x = all_states(n).astype(float) - 0.5
        exact = float(p @ np.mean(x * np.roll(x, -1, axis=1), axis=1))
        est = 0.5 * (diag.estimate_a + diag.estimate_b)
        se = 0.5 * math.hypot(diag.se_a, diag.se_b)
        assert abs(est - exact) <= 4 * se + 1e-3
        if isinstance(spec, CanonicalG):
            assert config.m == 6


def test_utilted_marginal_ks():
    n, N = 10_000, 4000
    rng = np.random.default_rng(4)
    k = sample_counts(UTilted(0.0), n, rng, N)
    Y = (k - n / 2) / n**0.75
    Z = z_u_limit(0.0) / math.sqrt(2 / math.pi)
    x = np.linspace(-4, 4, 8001)
    cdf = np.cumsum(np.exp(-x**4)) * (x[1] - x[0]) / Z
    assert sps.kstest(Y, lambda y: np.interp(y, x, cdf)).statistic <= 0.05


def test_marginal_is_normalised_and_binomial_for_product():
    m = MagnetisationMarginal.of(Product(0.5), 20)
    np.testing.assert_allclose(m.probs, sps.binom.pmf(np.arange(21), 20, 0.5), rtol=1e-12)
    for spec in (UTilted(1.0), IsingInit(0.5, 2.0), Canonical(4)):
        assert MagnetisationMarginal.of(spec, 20).probs.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("theta", [-1.0, 0.0, 1.0])
def test_partition_asymptotics(theta):
    z = partition_Z_U(100_000, theta)
    assert abs(z.scaled / z_u_limit(theta) - 1) <= 0.02
    assert partition_Z_U(1000, theta).Z >= 1.0


def test_partition_ratio():
    ratio = partition_Z_U(100_000, 1.0).Z / partition_Z_U(100_000, -1.0).Z
    assert ratio == pytest.approx(z_u_limit(1.0) / z_u_limit(-1.0), rel=0.02)


def test_birth_death_examples():
    for g in (0.0, 0.5):
        assert birth_death(0.5, g) == (0.5, 0.5)
        assert birth_death(1.0, g)[0] == 0.0
    with pytest.raises(ValueError):
        birth_death(1.5, 0.5)


def test_birth_rate_canonical_average():
    # (1/n) E[sum (1 - eta_i) c(tau_i eta)] under the canonical law with m = n/2.
    # Exact value for finite n: B(1/2) + gamma/(n-1) - gamma^2/(2(n-1)).
    n, N = 1000, 100_000
    g = derived_gamma(n, 0.0)
    rng = np.random.default_rng(5)
    base = np.zeros(n, dtype=np.uint8)
    base[: n // 2] = 1
    vals = []
    for _ in range(N // 2000):
        occ = rng.permuted(np.tile(base, (2000, 1)), axis=1)
        vals.append(((1 - occ) * glauber_rates(occ, g)).mean(axis=1))
    vals = np.concatenate(vals)
    est, se = vals.mean(), vals.std(ddof=1) / math.sqrt(N)
    exact = birth_death(0.5, g)[0] + g / (n - 1) - g * g / (2 * (n - 1))
    assert abs(est - exact) <= 3 * se
    assert abs(est - birth_death(0.5, g)[0]) <= 3 * se + 1.0 / n


def test_detailed_balance_residual():
    for n in (100, 1000, 10_000):
        assert abs(detailed_balance_residual(n, 0.0, n // 2)) <= 10 / n
    n = 31
    k = np.arange(n)
    np.testing.assert_allclose(detailed_balance_residual(n, 0.0, k), -detailed_balance_residual(n, 0.0, n - 1 - k),
                               atol=1e-12)
    # n = 10, k = 5 by hand
    g = 0.5
    U = lambda r: (1 / g) * ((1 + 2 * g * r) * math.log(1 + 2 * g * r) + (1 - 2 * g * r) * math.log(1 - 2 * g * r))
    lhs = 10 * (U(0.1) - U(0.0)) + math.log(5 / 6)
    B = 0.5 * (1 + g * 0.0) ** 2
    D = 0.6 * (1 - g * 0.2) ** 2
    assert detailed_balance_residual(10, 0.0, 5) == pytest.approx(lhs - math.log(B / D), abs=1e-14)


def test_relative_entropy_examples():
    p = np.random.default_rng(6).dirichlet(np.ones(16))
    assert relative_entropy(p, p) == 0.0
    n = 6
    delta = np.zeros(2**n)
    delta[5] = 1.0
    assert relative_entropy(delta, np.full(2**n, 2.0**-n)) == pytest.approx(n * LOG2)
    assert relative_entropy(np.array([0.5, 0.5]), np.array([1.0, 0.0])) == math.inf


def test_ising_entropy_against_direct_sum():
    values = []
    for n in (8, 10, 12, 14):
        states = all_states(n)
        M = (states.sum(axis=1) - n / 2) / n
        w = np.exp(2 * n * M**2)
        p = w / w.sum()
        direct = float(np.sum(p * np.log(p * 2.0**n)))
        H = relative_entropy(probabilities_all(IsingInit(0, 2), n), np.full(2**n, 2.0**-n))
        assert H == pytest.approx(direct, rel=1e-12)
        values.append(H / math.sqrt(n))
    assert max(values) / min(values) < 1.5


@pytest.mark.parametrize("text", ["product:0.5", "product:0.25", "u-tilted:theta=0", "u-tilted:theta=-1.5",
                                  "g-tilted:delta=0.45,b=1", "g-tilted:delta=0.1,b=3,L=500",
                                  "ising:b=0,c=2", "canonical:m=4", "canonical-g:m=6,delta=0.3,b=1",
                                  "profile:base=0.5,amp=0.3,k=1"])
def test_measure_strings_round_trip(text):
    spec = parse_measure(text)
    assert parse_measure(str(spec)) == spec


@pytest.mark.parametrize("text", ["nope:1", "product:1.5", "g-tilted:delta=0.4", "ising:q=1", "g-tilted:delta=2,b=1"])
def test_measure_strings_rejected(text):
    with pytest.raises(ValueError):
        parse_measure(text)


def test_ising_warning():
    assert spec_warnings(IsingInit(0, 2)) == []
    assert "c <= 2" in spec_warnings(IsingInit(0, 3))[0]


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**10 - 1), st.integers(-9, 9))
def test_translation_invariant_weights(index, k):
    n = 10
    c = Configuration.from_index(index, n)
    for spec in (UTilted(0.0), IsingInit(0.3, 2), GTilted(0.3, 1.0, L=500), Product(0.3)):
        assert log_weight(spec, c.translate(k)) == pytest.approx(log_weight(spec, c), abs=1e-12)
    assert log_weight(UTilted(0.0), c.complement()) == pytest.approx(log_weight(UTilted(0.0), c), abs=1e-12)
