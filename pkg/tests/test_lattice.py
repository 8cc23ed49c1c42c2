import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glauber_kawasaki.lattice import (
    Configuration,
    Params,
    apply_flip,
    apply_swap,
    derived_gamma,
    glauber_rate,
    glauber_rates,
    magnetisation_stats,
    rate_table,
    vprime,
)

configs = st.integers(4, 40).flatmap(
    lambda n: st.lists(st.integers(0, 1), min_size=n, max_size=n).map(Configuration))


@pytest.mark.parametrize("n,theta,expected", [(100, 0.0, 0.5), (100, 1.0, 0.45), (4, 2.0, 0.0)])
def test_derived_gamma_values(n, theta, expected):
    assert derived_gamma(n, theta) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("n,theta", [(4, -2.0), (4, 6.0), (0, 0.0)])
def test_derived_gamma_rejects(n, theta):
    with pytest.raises(ValueError):
        derived_gamma(n, theta)


def test_params_validation_and_inverse():
    with pytest.raises(ValueError):
        Params(3, 1.0)
    with pytest.raises(ValueError):
        Params(8, -0.1)
    p = Params.from_gamma(16, 1.0, 0.3)
    assert p.gamma == pytest.approx(0.3, abs=1e-14)
    assert p.to_dict()["n"] == 16


def test_rate_table_three_values():
    g = 0.5
    t = rate_table(g)
    assert set(np.round(t, 12)) == {round((1 - g) ** 2, 12), round(1 - g * g, 12), round((1 + g) ** 2, 12)}
    # global spin flip and left/right reflection leave c unchanged
    for code in range(8):
        assert t[code] == t[7 - code]
        refl = ((code & 1) << 2) | (code & 2) | (code >> 2)
        assert t[code] == t[refl]


def test_glauber_rate_examples():
    c = Configuration([1, 1, 1, 1, 0, 0])
    assert glauber_rate(c, 1, 0.5) == 0.25
    assert glauber_rate(Configuration([1, 1, 0, 0, 1, 0]), 1, 0.5) == 0.75
    assert glauber_rate(Configuration([1, 0, 1, 0]), 1, 0.5) == 2.25
    assert all(glauber_rate(c, i, 0.0) == 1.0 for i in range(c.n))


def test_flip_swap_examples():
    c = apply_flip(Configuration.from_bits("0000"), 2)
    assert c.bits() == "0010" and c.m == 1
    c = apply_flip(Configuration.from_bits("1111"), 0)
    assert c.bits() == "0111" and c.m == 3
    c = apply_swap(Configuration.from_bits("1000"), 0)
    assert c.bits() == "0100" and c.m == 1
    c = Configuration.from_bits("1100")
    assert apply_swap(c, 0) == c
    # swap across the wrap-around bond
    assert apply_swap(Configuration.from_bits("1000"), 3).bits() == "0001"


@pytest.mark.parametrize("bits,m,mag,Y,M", [
    ("0" * 16, 0, -8.0, -1.0, -0.5),
    ("01" * 8, 8, 0.0, 0.0, 0.0),
    ("1" * 16, 16, 8.0, 1.0, 0.5),
])
def test_magnetisation_stats(bits, m, mag, Y, M):
    s = magnetisation_stats(Configuration.from_bits(bits))
    assert (s.m, s.mag_sum, s.Y, s.M) == (m, mag, pytest.approx(Y), M)


def test_vprime_zero_and_symmetry():
    rho = np.linspace(0, 1, 11)
    for g in (0.0, 0.3, 0.5):
        assert vprime(0.5, g) == 0.0
        np.testing.assert_allclose(vprime(rho, g), -vprime(1 - rho, g), atol=1e-15)


def test_configuration_rejects_bad_values():
    with pytest.raises(ValueError):
        Configuration([0, 2, 1, 0])


@settings(max_examples=200, deadline=None)
@given(configs, st.data())
def test_flip_and_swap_are_involutions(c, data):
    i = data.draw(st.integers(0, c.n - 1))
    assert c.flip(i).flip(i) == c
    assert c.swap(i).swap(i) == c
    assert c.flip(i).m == c.m + (1 - 2 * c[i])
    assert c.swap(i).m == c.m


@settings(max_examples=200, deadline=None)
@given(configs, st.data())
def test_cached_count_and_serialisation(c, data):
    k = data.draw(st.integers(-50, 50))
    for d in (c, c.translate(k), c.complement()):
        assert d.m == int(d.occupations.sum())
    assert Configuration.from_hex(c.to_hex()) == c
    assert Configuration.from_bits(c.bits()) == c
    assert Configuration.from_index(c.index(), c.n) == c
    assert c.translate(k).translate(-k) == c
    assert c.complement().complement() == c
    np.testing.assert_array_equal(c.sigma, 2 * c.occupations.astype(int) - 1)
    np.testing.assert_array_equal(c.eta_bar, c.occupations - 0.5)


@settings(max_examples=200, deadline=None)
@given(configs, st.floats(-0.95, 0.95))
def test_rate_sum_identity(c, gamma):
    # sum_i c(tau_i eta) = n - 2 gamma S1 + gamma^2 S2 with spin correlation sums
    s = c.sigma
    S1 = int(np.sum(s * np.roll(s, -1)))
    S2 = int(np.sum(s * np.roll(s, -2)))
    total = glauber_rates(c.occupations, gamma).sum()
    assert total == pytest.approx(c.n - 2 * gamma * S1 + gamma**2 * S2, abs=1e-9)
    direct = sum(glauber_rate(c, i, gamma) for i in range(c.n))
    assert total == pytest.approx(direct, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(configs, st.floats(-0.95, 0.95), st.integers(-5, 5))
def test_rates_translation_and_spin_flip_invariant(c, gamma, k):
    r = glauber_rates(c.occupations, gamma)
    np.testing.assert_allclose(glauber_rates(c.translate(k).occupations, gamma), np.roll(r, -k))
    np.testing.assert_allclose(glauber_rates(c.complement().occupations, gamma), r)
