import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coldchain.ovw import OvwQuery, estimate_ovw
from oracles import ovw_monte_carlo


def _q(mu, b):
    # one session per period so that the session mean equals mu
    return OvwQuery(mu / 30.0, b, sessions_per_period=1, period_length_days=30)


def test_single_dose_vials_never_waste():
    for mu in (0.0, 0.5, 2.0, 10.0, 500.0):
        assert estimate_ovw(_q(mu, 1)) == 0.0


def test_small_exact_case_by_hand():
    # mu = 1, b = 2: P(0)=e^-1, P(1)=e^-1, P(2)=e^-1/2, ...
    # waste is 1 dose on odd counts, opened doses are 2*ceil(k/2)
    from math import ceil, exp, factorial

    p = [exp(-1) / factorial(k) for k in range(60)]
    waste = sum(pk * (k % 2) for k, pk in enumerate(p))
    opened = sum(pk * 2 * ceil(k / 2) for k, pk in enumerate(p))
    assert estimate_ovw(_q(1.0, 2)) == pytest.approx(waste / opened, rel=1e-12)


@pytest.mark.parametrize("b", [5, 10, 20])
@pytest.mark.parametrize("mu", [0.5, 2.0, 10.0])
def test_against_short_monte_carlo(b, mu):
    est, se = ovw_monte_carlo(mu, b, 400_000, seed=b * 100 + int(mu * 10))
    assert abs(estimate_ovw(_q(mu, b)) - est) < 4 * se


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 60.0), st.sampled_from([2, 5, 10, 20]))
def test_fraction_in_unit_interval(mu, b):
    w = estimate_ovw(_q(mu, b))
    assert 0.0 <= w < 1.0


def test_monotone_along_divisibility_chain():
    # a vial that is a multiple of a smaller one never wastes less
    for mu in (0.5, 2.0, 7.0, 30.0):
        chain = [estimate_ovw(_q(mu, b)) for b in (1, 5, 10, 20)]
        assert all(x <= y + 1e-15 for x, y in zip(chain, chain[1:]))


def test_decreasing_in_demand_for_large_vials():
    vals = [estimate_ovw(_q(mu, 20)) for mu in np.linspace(1, 200, 15)]
    assert all(x >= y - 1e-12 for x, y in zip(vals, vals[1:]))


def test_query_validation():
    with pytest.raises(ValueError):
        OvwQuery(-1.0, 10)
    with pytest.raises(ValueError):
        OvwQuery(1.0, 0)
    with pytest.raises(ValueError):
        OvwQuery(1.0, 10, sessions_per_period=0)
