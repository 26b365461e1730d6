import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from iesic.link_abstraction import (
    QuadratureError,
    RicianLink,
    decode_prob,
    rician_mgf,
    rician_ser,
    rician_ser_mc,
)

# mpmath quadrature of the same integrand at 30 digits
MPMATH_SER_K4 = {1.0: 0.323377391871475, 10.0: 0.0268910118271763,
                 100.0: 0.00103536803839658, 1000.0: 8.52469171086128e-5}


def rayleigh_qpsk_ser(g):
    """Closed-form QPSK symbol error over Rayleigh fading (K = 0)."""
    c = g / 2
    mu = math.sqrt(c / (1 + c))
    i1 = 0.5 * (1 - mu)
    i2 = 0.25 * (1 - 4 / math.pi * mu * math.atan(1 / mu))
    return 2 * i1 - i2


def test_zero_snr_is_three_quarters():
    assert rician_ser(0.0, 4.0) == 0.75


@pytest.mark.parametrize("g", sorted(MPMATH_SER_K4))
def test_matches_high_precision_quadrature(g):
    assert rician_ser(g, 4.0) == pytest.approx(MPMATH_SER_K4[g], rel=1e-9)


@pytest.mark.parametrize("g", [0.5, 1.0, 10.0, 100.0, 1e4])
def test_rayleigh_limit_matches_closed_form(g):
    assert rician_ser(g, 0.0) == pytest.approx(rayleigh_qpsk_ser(g), rel=1e-9, abs=1e-13)


def test_monte_carlo_agreement_at_10():
    rng = np.random.default_rng(11)
    p, se = rician_ser_mc(10.0, 4.0, 1_000_000, rng)
    assert abs(p - rician_ser(10.0, 4.0)) < 3 * se


def test_monotone_and_bounded_on_grid():
    grid = np.logspace(-3, 4, 100)
    vals = [rician_ser(g) for g in grid]
    assert all(0 <= v <= 0.75 for v in vals)
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_quadrature_tolerance_stability():
    for g in (0.3, 3.0, 30.0, 300.0):
        a = rician_ser(g, 4.0, epsabs=1e-10)
        b = rician_ser(g, 4.0, epsabs=5e-11)
        assert abs(a - b) < 1e-9


def test_mgf_standard_form_bounded_printed_form_not():
    s = -0.5
    assert rician_mgf(s, 10.0, 4.0) <= 1.0
    assert rician_mgf(s, 10.0, 4.0, as_printed=True) > 1.0
    assert rician_ser(10.0, 4.0, as_printed=True) > 1.0


def test_decode_prob_edges():
    assert decode_prob(math.inf) == 1.0
    assert decode_prob(0.0) == pytest.approx(0.25 ** 1024)
    assert decode_prob(0.0, RicianLink(packet_len_bits=0)) == 1.0
    assert decode_prob(5.0, RicianLink(packet_len_bits=0)) == 1.0


def test_decode_prob_packet_length_monotone():
    g = 2000.0
    ps = [decode_prob(g, RicianLink(packet_len_bits=n)) for n in (64, 256, 1024)]
    assert ps[0] > ps[1] > ps[2]


@given(st.floats(0.1, 1e5), st.floats(1.01, 10.0))
def test_decode_prob_increasing_in_gamma(g, c):
    assert decode_prob(g * c) >= decode_prob(g)
    assert rician_ser(g * c) < rician_ser(g)


def test_domain_errors():
    with pytest.raises(ValueError):
        rician_ser(-1.0)
    with pytest.raises(ValueError):
        RicianLink(k_factor=-1)


def test_quadrature_failure_is_reported(monkeypatch):
    import iesic.link_abstraction as la

    # a non-integrable singularity forces the integrator to give up
    monkeypatch.setattr(la, "_integrand", lambda theta, *a: 1.0 / theta)
    la._ser_cached.cache_clear()
    try:
        with pytest.raises(QuadratureError):
            rician_ser(1.2345, 4.0)
    finally:
        la._ser_cached.cache_clear()
