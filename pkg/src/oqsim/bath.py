"""Spectral densities, thermal response functions and exponential-sum fits.

Units are rad/ps throughout with hbar = 1.  The bath response function is
``alpha(t) = D(t) + i D1(t)`` with

    D(t)  =  int_0^inf J(w) coth(beta w / 2) cos(w t) dw
    D1(t) = -int_0^inf J(w) sin(w t) dw
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.integrate
import scipy.optimize

__all__ = [
    "CM_TO_RAD_PS",
    "K_B",
    "DrudeLorentz",
    "ExponentialSumResponse",
    "FitError",
    "OhmicGaussian",
    "QuadratureError",
    "SpectralDensity",
    "Tabulated",
    "ThermalParams",
    "correlation_imag",
    "correlation_real",
    "drude_lorentz_response",
    "evaluate_response",
    "evaluate_spectral_density",
    "fit_response_to_exponentials",
    "reorganization_energy",
    "sample_response",
    "thermal_weight",
]

#: Boltzmann constant in rad ps^-1 K^-1 (k_B / hbar).
K_B = 0.130920
#: Conversion of wavenumbers (cm^-1) to angular frequency (rad/ps).
CM_TO_RAD_PS = 0.188365


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested accuracy."""


class FitError(RuntimeError):
    """Exponential fit failed its residual bound or was rank deficient."""


# ---------------------------------------------------------------------------
# spectral densities


class SpectralDensity:
    """Base class for spectral densities ``J(w)`` defined for ``w >= 0``."""

    #: characteristic frequency used to scale quadrature tolerances
    scale: float = 1.0

    def __call__(self, omega):
        omega = _nonnegative(omega)
        return omega * self.over_omega(omega)

    def over_omega(self, omega):
        """``J(w) / w`` including its finite ``w -> 0`` limit."""
        raise NotImplementedError

    def reorganization_energy(self) -> float:
        """``int_0^inf J(w) / w dw`` by adaptive quadrature."""
        val, err, info = _quad(self.over_omega, 0.0, np.inf, epsrel=1e-10, epsabs=0.0)
        if info:
            raise QuadratureError(f"reorganization energy integral diverges or failed (estimate {val}, error {err})")
        return val

    @property
    def is_zero(self) -> bool:
        return False


@dataclass(frozen=True)
class OhmicGaussian(SpectralDensity):
    """``J(w) = eta * lam * (w / omega_c) * exp(-(w / omega_c)**2)``."""

    eta: float
    lam: float
    omega_c: float

    def __post_init__(self):
        if self.eta < 0 or self.lam <= 0 or self.omega_c <= 0:
            raise ValueError("OhmicGaussian needs eta >= 0 and positive lam, omega_c")

    @property
    def scale(self) -> float:
        return self.omega_c

    @property
    def is_zero(self) -> bool:
        return self.eta == 0

    def over_omega(self, omega):
        omega = _nonnegative(omega)
        x = omega / self.omega_c
        return self.eta * self.lam / self.omega_c * np.exp(-x * x)

    def reorganization_energy(self) -> float:
        return self.eta * self.lam * np.sqrt(np.pi) / 2


@dataclass(frozen=True)
class DrudeLorentz(SpectralDensity):
    """``J(w) = (2 / pi) * lam * gamma * w / (w**2 + gamma**2)``."""

    lam: float
    gamma: float

    def __post_init__(self):
        if self.lam < 0 or self.gamma <= 0:
            raise ValueError("DrudeLorentz needs lam >= 0 and gamma > 0")

    @property
    def scale(self) -> float:
        return self.gamma

    @property
    def is_zero(self) -> bool:
        return self.lam == 0

    def over_omega(self, omega):
        omega = _nonnegative(omega)
        return 2.0 / np.pi * self.lam * self.gamma / (omega * omega + self.gamma**2)

    def reorganization_energy(self) -> float:
        return self.lam


@dataclass(frozen=True)
class Tabulated(SpectralDensity):
    """Spectral density sampled on a grid, linearly interpolated, zero beyond it."""

    omega: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        j = np.asarray(self.values, dtype=float)
        if w.ndim != 1 or w.shape != j.shape or w.size < 2:
            raise ValueError("tabulated spectral density needs matching 1-d grids")
        if np.any(np.diff(w) <= 0) or w[0] < 0:
            raise ValueError("tabulated frequencies must be non-negative and increasing")
        if np.any(j < 0):
            raise ValueError("spectral density must be non-negative")
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "values", j)

    @property
    def scale(self) -> float:
        return float(self.omega[-1])

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)

    def __call__(self, omega):
        omega = _nonnegative(omega)
        return np.interp(omega, self.omega, self.values, left=0.0, right=0.0)

    def over_omega(self, omega):
        omega = np.asarray(_nonnegative(omega), dtype=float)
        w0 = self.omega[1] if self.omega[0] == 0 else self.omega[0]
        slope0 = np.interp(w0, self.omega, self.values) / w0
        safe = np.where(omega > 0, omega, 1.0)
        return np.where(omega > 0, self(omega) / safe, slope0)

    def reorganization_energy(self) -> float:
        w = self.omega
        return float(scipy.integrate.trapezoid(self.over_omega(w), w))


def evaluate_spectral_density(spectral: SpectralDensity, omega):
    """Evaluate ``J(w)``; negative frequencies are rejected."""
    return spectral(omega)


def reorganization_energy(spectral: SpectralDensity) -> float:
    """Reorganization energy ``int_0^inf J(w)/w dw``."""
    return spectral.reorganization_energy()


def _nonnegative(omega):
    arr = np.asarray(omega, dtype=float)
    if np.any(arr < 0):
        raise ValueError("spectral densities are defined for omega >= 0 only")
    return arr if arr.ndim else float(arr)


# ---------------------------------------------------------------------------
# thermal response


@dataclass(frozen=True)
class ThermalParams:
    """Bath temperature in kelvin."""

    temperature: float

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")

    @property
    def kt(self) -> float:
        return K_B * self.temperature

    @property
    def beta(self) -> float:
        return 1.0 / self.kt


def thermal_weight(spectral: SpectralDensity, thermal: ThermalParams, omega):
    """``J(w) coth(beta w / 2)``, continued to ``2 k_B T J(w)/w`` at ``w = 0``."""
    omega = np.asarray(_nonnegative(omega), dtype=float)
    x = 0.5 * thermal.beta * omega
    safe = np.where(x > 0, x, 1.0)
    x_coth = np.where(x < 1e-6, 1.0 + x * x / 3.0, safe / np.tanh(safe))
    return spectral.over_omega(omega) * 2.0 * thermal.kt * x_coth


def _quad(func, a, b, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.integrate.IntegrationWarning)
        out = scipy.integrate.quad(func, a, b, full_output=1, limit=kwargs.pop("limit", 400), **kwargs)
    val, err, info = out[0], out[1], out[2]
    ier = 0 if len(out) == 3 else 1
    return val, err, ier


def _abs_floor(spectral: SpectralDensity, thermal: ThermalParams | None) -> float:
    """Absolute tolerance floor: 1e-12 of a bounded response-magnitude scale."""
    upper = 10.0 * spectral.scale
    if thermal is None:
        val, _, _ = _quad(lambda w: spectral(w), 0.0, upper)
    else:
        val, _, _ = _quad(lambda w: thermal_weight(spectral, thermal, w), 0.0, upper)
    return 1e-12 * max(abs(val), np.finfo(float).tiny)


def _oscillatory(func, t: float, weight: str, floor: float) -> float:
    val, err, ier = _quad(func, 0.0, np.inf, weight=weight, wvar=t, epsabs=floor, limlst=200)
    if ier and err > max(floor, 1e-7 * abs(val)):
        raise QuadratureError(f"oscillatory quadrature did not converge at t={t}: value {val}, error estimate {err}")
    return val


def correlation_real(spectral: SpectralDensity, thermal: ThermalParams, t: float) -> float:
    """``D(t)`` by adaptive (t = 0) or Fourier-type (t > 0) quadrature."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if spectral.is_zero:
        return 0.0
    if isinstance(spectral, Tabulated):
        w = spectral.omega
        return float(scipy.integrate.trapezoid(thermal_weight(spectral, thermal, w) * np.cos(w * t), w))
    g = lambda w: thermal_weight(spectral, thermal, w)  # noqa: E731
    if t == 0:
        val, err, ier = _quad(g, 0.0, np.inf, epsrel=1e-10, epsabs=0.0)
        if ier:
            raise QuadratureError(f"D(0) integral diverges or failed: value {val}, error estimate {err}")
        return val
    return _oscillatory(g, t, "cos", _abs_floor(spectral, thermal))


def correlation_imag(spectral: SpectralDensity, t: float) -> float:
    """``D1(t) = -int J(w) sin(w t) dw`` (temperature independent)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0 or spectral.is_zero:
        return 0.0
    if isinstance(spectral, Tabulated):
        w = spectral.omega
        return float(-scipy.integrate.trapezoid(spectral(w) * np.sin(w * t), w))
    return -_oscillatory(lambda w: spectral(w), t, "sin", _abs_floor(spectral, None))


# ---------------------------------------------------------------------------
# exponential-sum responses


def _terms(seq) -> tuple[tuple[complex, complex], ...]:
    return tuple((complex(c), complex(mu)) for c, mu in seq)


@dataclass(frozen=True)
class ExponentialSumResponse:
    """Response function written as sums of decaying exponentials.

    ``D(t) = sum_k c_k exp(-mu_k t) + delta_weight * delta(t)`` and
    ``D1(t) = sum_k c'_k exp(-mu'_k t)``.

    Attributes
    ----------
    real_terms, imag_terms : tuple of (c, mu)
        Complex coefficients and rates; complex terms come in conjugate pairs
        so that both sums are real.
    delta_weight : float
        Weight of the instantaneous part of ``D(t)``.
    """

    real_terms: tuple = field(default=())
    imag_terms: tuple = field(default=())
    delta_weight: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "real_terms", _terms(self.real_terms))
        object.__setattr__(self, "imag_terms", _terms(self.imag_terms))
        object.__setattr__(self, "delta_weight", float(self.delta_weight))
        if self.delta_weight < 0:
            raise ValueError("delta_weight must be non-negative")
        for c, mu in self.real_terms + self.imag_terms:
            if not mu.real > 0:
                raise ValueError(f"rate {mu} does not decay (Re mu must be > 0)")
        for terms in (self.real_terms, self.imag_terms):
            if not terms:
                continue
            c = np.array([p[0] for p in terms])
            mu = np.array([p[1] for p in terms])
            probe = np.array([0.0, 0.1, 0.5, 1.0, 3.0]) / mu.real.min()
            vals = np.exp(-np.outer(probe, mu)) @ c
            if np.max(np.abs(vals.imag)) > 1e-9 * max(np.sum(np.abs(c)), 1e-300):
                raise ValueError("exponential terms are not closed under conjugation")

    # evaluation -------------------------------------------------------

    def evaluate(self, t):
        """Return ``(D(t), D1(t))`` without the delta part."""
        t = np.asarray(t, dtype=float)
        return self._sum(self.real_terms, t), self._sum(self.imag_terms, t)

    @staticmethod
    def _sum(terms, t):
        out = np.zeros(np.shape(t))
        for c, mu in terms:
            out = out + (c * np.exp(-mu * t)).real
        return out if np.ndim(t) else float(out)

    # views ------------------------------------------------------------

    @property
    def alpha_terms(self) -> tuple[np.ndarray, np.ndarray]:
        """Coefficients and rates of ``alpha = D + i D1`` as one exponential sum."""
        a = [c for c, _ in self.real_terms] + [1j * c for c, _ in self.imag_terms]
        m = [mu for _, mu in self.real_terms] + [mu for _, mu in self.imag_terms]
        return np.array(a, dtype=complex), np.array(m, dtype=complex)

    @property
    def rates(self) -> np.ndarray:
        return np.array([mu for _, mu in self.real_terms + self.imag_terms], dtype=complex)

    @property
    def memory_time(self) -> float:
        """Slowest decay time ``1 / min Re mu`` (zero for a memoryless response)."""
        r = self.rates
        return float(1.0 / r.real.min()) if r.size else 0.0

    @property
    def is_zero(self) -> bool:
        return self.delta_weight == 0 and not any(c != 0 for c, _ in self.real_terms + self.imag_terms)

    def scaled(self, factor: float) -> "ExponentialSumResponse":
        """Response multiplied by a non-negative coupling factor."""
        if factor < 0:
            raise ValueError("scale factor must be non-negative")
        return ExponentialSumResponse(
            [(factor * c, mu) for c, mu in self.real_terms],
            [(factor * c, mu) for c, mu in self.imag_terms],
            factor * self.delta_weight,
        )

    def without_delta(self) -> "ExponentialSumResponse":
        return ExponentialSumResponse(self.real_terms, self.imag_terms, 0.0)

    # serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        def enc(terms):
            return [
                {"c": {"re": c.real, "im": c.imag}, "mu": {"re": mu.real, "im": mu.imag}} for c, mu in terms
            ]

        return {
            "real_terms": enc(self.real_terms),
            "imag_terms": enc(self.imag_terms),
            "delta_weight": self.delta_weight,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExponentialSumResponse":
        def dec(items):
            return [
                (complex(it["c"]["re"], it["c"]["im"]), complex(it["mu"]["re"], it["mu"]["im"])) for it in items
            ]

        return cls(dec(data.get("real_terms", [])), dec(data.get("imag_terms", [])), data.get("delta_weight", 0.0))


def evaluate_response(resp: ExponentialSumResponse, t):
    """Return ``(D(t), D1(t))`` of an exponential-sum response (delta part excluded)."""
    return resp.evaluate(t)


def drude_lorentz_response(lam: float, gamma: float, thermal: ThermalParams) -> ExponentialSumResponse:
    """Single exponential plus delta approximation of a Drude-Lorentz bath.

    ``D(t) ~ c exp(-gamma t) + w delta(t)`` with
    ``c = 2 lam kT (1 - 2 gamma^2 / ((2 pi kT)^2 - gamma^2))`` and
    ``w = 8 lam kT gamma / ((2 pi kT)^2 - gamma^2)``; ``D1(t) = -lam gamma exp(-gamma t)``.
    """
    kt = thermal.kt
    denom = (2 * np.pi * kt) ** 2 - gamma**2
    if abs(denom) <= 1e-12 * gamma**2:
        raise ValueError("2 pi k_B T equals the cutoff rate: the approximation has a pole there")
    c = 2 * lam * kt * (1 - 2 * gamma**2 / denom)
    w = 8 * lam * kt * gamma / denom
    if w < 0:
        raise ValueError("cutoff rate exceeds 2 pi k_B T; the exponent-plus-delta form does not apply")
    return ExponentialSumResponse([(c, gamma)], [(-lam * gamma, gamma)], w)


# ---------------------------------------------------------------------------
# fitting


def _basis(times, pair_rates, real_rates):
    cols = []
    for mu in pair_rates:
        e = np.exp(-mu * times)
        cols += [2 * e.real, -2 * e.imag]
    for mu in real_rates:
        cols.append(np.exp(-mu * times))
    return np.stack(cols, axis=1)


def _unpack(x, n_pairs):
    pairs = x[:n_pairs] + 1j * x[n_pairs : 2 * n_pairs]
    return pairs, x[2 * n_pairs :]


def _varpro(times, y, n_pairs, x0, lower):
    def resid(x):
        a = _basis(times, *_unpack(x, n_pairs))
        coef = np.linalg.lstsq(a, y, rcond=None)[0]
        return a @ coef - y

    return scipy.optimize.least_squares(
        resid, x0, bounds=(lower, np.inf), method="trf", x_scale="jac", ftol=1e-15, xtol=1e-15, gtol=1e-15,
        max_nfev=400 * x0.size,
    )


def _fit_one(times, y, n_terms):
    """Fit real samples to ``n_terms`` exponentials; returns (terms, rms)."""
    y = np.asarray(y, dtype=float)
    peak = float(np.max(np.abs(y)))
    if peak == 0:
        return [], 0.0
    if n_terms == 0:
        return [], float(np.sqrt(np.mean(y**2)))
    t_max = float(times[-1])
    env = np.maximum.accumulate(np.abs(y)[::-1])[::-1]
    below = np.nonzero(env < peak / np.e)[0]
    t_e = times[below[0]] if below.size else t_max
    k_est = 1.0 / max(t_e, times[1] - times[0])
    lo = max(1.0 / t_max, 1e-3 * k_est)
    hi = 10.0 * k_est
    floor = 1e-6 * lo

    best = None
    for n_pairs in range(n_terms // 2, -1, -1):
        n_real = n_terms - 2 * n_pairs
        for spread in (0.5, 1.0, 2.0):
            for shift in (0.0, 0.5):
                re = np.geomspace(lo, hi, n_pairs + 2)[1:-1] if n_pairs else np.array([])
                im = spread * k_est * (np.arange(n_pairs) + 1.0) if n_pairs else np.array([])
                rr = np.geomspace(lo, hi, n_real + 2)[1:-1] * (1.0 + shift) if n_real else np.array([])
                x0 = np.concatenate([re * (1.0 + shift), im, rr])
                lower = np.concatenate([np.full(n_pairs, floor), np.zeros(n_pairs), np.full(n_real, floor)])
                x0 = np.maximum(x0, lower * 2)
                res = _varpro(times, y, n_pairs, x0, lower)
                if best is None or res.cost < best[0].cost * (1 - 1e-12):
                    best = (res, n_pairs)
    res, n_pairs = best
    pairs, reals = _unpack(res.x, n_pairs)
    a = _basis(times, pairs, reals)
    coef, _, rank, _ = np.linalg.lstsq(a, y, rcond=None)
    if rank < a.shape[1]:
        raise FitError(f"rank-deficient exponential fit ({rank} of {a.shape[1]} columns independent)")
    terms = []
    for k, mu in enumerate(pairs):
        c = coef[2 * k] + 1j * coef[2 * k + 1]
        terms += [(c, mu), (np.conj(c), np.conj(mu))]
    for k, mu in enumerate(reals):
        terms.append((complex(coef[2 * n_pairs + k]), complex(mu)))
    rms = float(np.sqrt(np.mean((a @ coef - y) ** 2)))
    return terms, rms


def fit_response_to_exponentials(
    times: Sequence[float],
    d_samples: Sequence[float],
    d1_samples: Sequence[float],
    n_real: int,
    n_imag: int,
    max_rms: float = 0.02,
) -> ExponentialSumResponse:
    """Fit sampled ``D(t)`` and ``D1(t)`` by sums of decaying exponentials.

    Each part is fitted separately by separable nonlinear least squares: the
    rates are optimized while the coefficients are solved linearly.  Splits
    of the term count into conjugate pairs and real exponentials are all
    tried from deterministic, logarithmically spaced rate seeds.

    Parameters
    ----------
    times : sequence of float
        Sample grid starting at 0 and covering the decay of the response.
    d_samples, d1_samples : sequence of float
        Samples of ``D`` and ``D1``.
    n_real, n_imag : int
        Number of exponential terms for ``D`` and ``D1``.
    max_rms : float
        Allowed root-mean-square residual relative to the peak magnitude.

    Raises
    ------
    FitError
        If a residual exceeds the bound or the fit is rank deficient.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be an increasing grid")
    parts = []
    for label, y, n in (("D", d_samples, n_real), ("D1", d1_samples, n_imag)):
        y = np.asarray(y, dtype=float)
        if y.shape != times.shape:
            raise ValueError(f"{label} samples do not match the time grid")
        terms, rms = _fit_one(times, y, int(n))
        peak = float(np.max(np.abs(y)))
        if peak and rms > max_rms * peak:
            raise FitError(f"{label} fit residual {rms / peak:.3%} of peak exceeds {max_rms:.1%}")
        parts.append(terms)
    return ExponentialSumResponse(parts[0], parts[1], 0.0)


def sample_response(spectral: SpectralDensity, thermal: ThermalParams, times) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``D`` and ``D1`` of a spectral density on a grid by quadrature."""
    times = np.asarray(times, dtype=float)
    d = np.array([correlation_real(spectral, thermal, t) for t in times])
    d1 = np.array([correlation_imag(spectral, t) for t in times])
    return d, d1
