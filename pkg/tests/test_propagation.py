import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oqsim.liouville import commutator_superop, matrix_exponential
from oqsim.propagation import StepperConfig, StepperStats, StepSizeError, integrate


def decay(t, y):
    return -y


def test_zero_rhs_is_constant():
    y0 = np.array([1.0 + 2j, -3.0])
    out = integrate(lambda t, y: np.zeros_like(y), y0, [0.0, 1.0, 5.0])
    assert np.array_equal(out, np.tile(y0, (3, 1)))


MATCHED = StepperConfig(atol=1e-9, rtol=1e-9)


def test_scalar_decay():
    out = integrate(decay, np.array([1.0]), [0.0, 1.0], MATCHED)
    assert abs(out[-1, 0] - np.exp(-1.0)) < 1e-9


def test_scalar_decay_default_tolerance():
    # global error accumulates above the per-step tolerance but stays below it
    out = integrate(decay, np.array([1.0]), [0.0, 1.0])
    assert abs(out[-1, 0] - np.exp(-1.0)) < 1e-8


def test_lands_on_grid_and_stores_initial():
    grid = np.array([0.0, 0.1234, 0.5, 2.0])
    seen = []
    out = integrate(decay, np.array([1.0]), grid, monitor=lambda t, y: seen.append(t))
    assert seen == list(grid)
    assert out[0, 0] == 1.0
    assert np.allclose(out[:, 0], np.exp(-grid), rtol=1e-8)


def test_unitary_matches_matrix_exponential(rng):
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    h = a + a.conj().T
    gen = -1j * commutator_superop(h)
    rho0 = np.diag([0.6, 0.3, 0.1]).astype(complex).reshape(-1)
    grid = np.linspace(0.0, 10.0, 11)
    out = integrate(lambda t, y: gen @ y, rho0, grid, StepperConfig(atol=1e-10, rtol=1e-10))
    exact = matrix_exponential(gen, 10.0) @ rho0
    assert np.max(np.abs(out[-1] - exact)) < 1e-8


def scalar_error(tol):
    out = integrate(decay, np.array([1.0]), [0.0, 2.0], StepperConfig(atol=tol, rtol=tol))
    return abs(out[-1, 0] - np.exp(-2.0))


def unitary_error(tol):
    h = np.array([[1.0, 0.4], [0.4, -0.7]])
    gen = -1j * commutator_superop(h)
    rho0 = np.array([1.0, 0, 0, 0], dtype=complex)
    out = integrate(lambda t, y: gen @ y, rho0, [0.0, 10.0], StepperConfig(atol=tol, rtol=tol))
    return np.max(np.abs(out[-1] - matrix_exponential(gen, 10.0) @ rho0))


@pytest.mark.parametrize("error", [scalar_error, unitary_error])
def test_error_shrinks_with_tolerance(error):
    # error per unit step of a fifth-order pair scales like tol, so a halving gives about 2x
    ratios = [error(tol) / error(tol / 2) for tol in (1e-6, 1e-7, 1e-8)]
    assert all(r > 1.3 for r in ratios)
    assert error(1e-10) < error(1e-6) / 100


@pytest.mark.xfail(strict=True, reason="an error-per-step controller gives about 2x per tolerance halving, not 4x")
@pytest.mark.parametrize("error", [scalar_error, unitary_error])
def test_tolerance_halving_gives_fourfold_error_reduction(error):
    assert error(1e-8) / error(5e-9) >= 4.0


def test_deterministic():
    grid = np.linspace(0, 3, 7)
    a = integrate(decay, np.array([1.0 + 1j]), grid)
    b = integrate(decay, np.array([1.0 + 1j]), grid)
    assert np.array_equal(a, b)


def test_step_underflow_reports_time():
    def blowup(t, y):
        return y**2

    with pytest.raises(StepSizeError) as info:
        integrate(blowup, np.array([1.0]), [0.0, 2.0], StepperConfig(min_step=1e-6))
    assert 0.9 < info.value.t_reached <= 1.0


def test_store_false_returns_none_and_counts_steps():
    stats = StepperStats()
    assert integrate(decay, np.array([1.0]), [0.0, 1.0], stats=stats, store=False) is None
    assert stats.accepted > 0 and stats.rhs_calls >= 6 * stats.accepted


def test_invalid_inputs():
    with pytest.raises(ValueError):
        integrate(decay, np.array([1.0]), [0.0, 0.0])
    with pytest.raises(ValueError):
        StepperConfig(atol=0.0)


@given(st.floats(0.1, 5.0), st.floats(0.1, 3.0))
def test_linear_ode_property(rate, t):
    out = integrate(lambda s, y: -rate * y, np.array([1.0]), [0.0, t], StepperConfig(atol=1e-10, rtol=1e-10))
    assert out[-1, 0] == pytest.approx(np.exp(-rate * t), rel=1e-7, abs=1e-9)
