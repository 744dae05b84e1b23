import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import dblquad, quad

from oqsim.kernels import phi1, simplex_integral

rates = st.complex_numbers(min_magnitude=0.0, max_magnitude=5.0, allow_nan=False, allow_infinity=False)


def test_single_rate_is_exponential():
    assert simplex_integral([2.0], 0.5) == pytest.approx(np.exp(-1.0))


@given(rates, st.floats(0.01, 3.0))
def test_two_rates_match_phi1(p, t):
    # int_0^t e^{-p s} ds
    got = simplex_integral([p, 0.0], t)
    assert got == pytest.approx(complex(phi1(-p, t)), rel=1e-9, abs=1e-12)


@given(st.floats(0.1, 4.0), st.floats(-3.0, 3.0), st.floats(0.05, 3.0))
def test_tau_weighted_integral(mu, gap, t):
    p = mu - 1j * gap
    re = quad(lambda s: s * np.exp(-mu * s) * np.cos(gap * s), 0, t)[0]
    im = quad(lambda s: s * np.exp(-mu * s) * np.sin(gap * s), 0, t)[0]
    assert simplex_integral([p, p, 0.0], t) == pytest.approx(re + 1j * im, rel=1e-8, abs=1e-12)


def test_nested_integral_against_dblquad():
    p, q, t = 1.3 - 0.4j, 0.7 + 2.0j, 1.1
    # int_0^t dt1 int_0^{t1} dt2 (t1 - t2) e^{-p t1 - q t2}
    f = lambda t2, t1: (t1 - t2) * np.exp(-p * t1 - q * t2)  # noqa: E731
    re = dblquad(lambda a, b: f(a, b).real, 0, t, 0, lambda x: x)[0]
    im = dblquad(lambda a, b: f(a, b).imag, 0, t, 0, lambda x: x)[0]
    assert simplex_integral([p + q, p, p, 0.0], t) == pytest.approx(re + 1j * im, rel=1e-8)


def test_coincident_and_zero_rates_are_stable():
    t = 2.0
    # all rates zero: simplex volume t^n / n!
    assert simplex_integral(np.zeros(4), t) == pytest.approx(t**3 / 6)
    # nearly coincident rates agree with exactly coincident ones
    a = simplex_integral([1.0, 1.0 + 1e-10, 0.0], t)
    b = simplex_integral([1.0, 1.0, 0.0], t)
    assert a == pytest.approx(b, rel=1e-8)


def test_batched_shape():
    r = np.ones((3, 5, 4))
    assert simplex_integral(r, 1.0).shape == (3, 5)


@given(st.floats(0.2, 3.0), st.floats(-2.0, 2.0), st.floats(0.3, 3.0), st.floats(-2.0, 2.0))
def test_infinite_limit(mr, mi, nr, ni):
    p, q = complex(mr, mi), complex(nr, ni)
    assert simplex_integral([0.0, p, q, q], np.inf) == pytest.approx(1 / (p * q * q), rel=1e-12)
    assert simplex_integral([p, p, p + q, q], np.inf) == 0
    far = simplex_integral([p + q, p, p, 0.0], 60.0 / min(mr, nr))
    assert simplex_integral([p + q, p, p, 0.0], np.inf) == pytest.approx(far, rel=1e-9)


def test_infinite_limit_rejects_two_zero_rates():
    with pytest.raises(ValueError):
        simplex_integral([0.0, 0.0, 1.0], np.inf)


def test_phi1_small_argument():
    x = np.array([1e-12, -1e-10 + 1e-11j, 0.0])
    assert np.allclose(phi1(x, 2.0), 2.0 + x * 2.0, rtol=1e-14)


@given(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False), st.floats(0.0, 2.0))
def test_phi1_derivative_identity(x, t):
    # d/dt phi1 = e^{x t}, checked through phi1(t + h) - phi1(t) = e^{xt} phi1(h)
    h = 0.1
    lhs = complex(phi1(x, t + h)) - complex(phi1(x, t))
    rhs = np.exp(x * t) * complex(phi1(x, h))
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)
