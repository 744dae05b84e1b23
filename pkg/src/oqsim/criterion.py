"""Weak-coupling criteria for the population (dephasing) rates.

For every eigenstate ``i`` the criterion compares the fourth-order correction
to the rate ``<ii|K|ii>`` with its second-order value.  Only the regular
exponential part of ``D(t)`` enters; ``D1`` and the white-noise part of the
response are left out, so the numbers depend on the slippage of the rates
and not on their Markovian values.

All time integrals are exponential integrals over simplices, evaluated in
closed form by :func:`oqsim.kernels.simplex_integral`.  With
``p = mu - i Delta`` the weights are::

    int_0^t tau e^{-p tau}                                     rates (p, p, 0)
    int_0^t e^{-p tau}                                         rates (p, 0)
    int_0^t dt1 e^{-p t1} int_0^{t-t1} t2 e^{-q t2}            rates (0, p, q, q)
    int_0^t dt1 e^{-p t1} int_{t-t1}^t (t-t2) e^{-q t2}        rates (p, p, p+q, q)
    int_0^t dt1 int_0^{t1} dt2 (t1-t2) e^{-p t1 - q t2}        rates (p+q, p, p, 0)

An infinite horizon uses the limits of these integrals.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.special

from .bath import QuadratureError, SpectralDensity, ThermalParams, thermal_weight
from .generators import SystemModel
from .kernels import simplex_integral

__all__ = [
    "AUTO_INFINITE_RATE_TIMES",
    "DEGENERACY_TOL",
    "CriterionReport",
    "DegenerateSpectrumError",
    "criterion_report",
    "export_visualization",
    "finite_time_rate",
    "full_criterion",
    "k2_rate_ii",
    "k4_rate_ii",
    "markovian_rate",
    "resolve_horizon",
    "simplified_criterion",
    "upsilon",
]

DEGENERACY_TOL = 1e-9
#: The infinite-horizon limit is used once every bath rate satisfies Re mu * t above this.
AUTO_INFINITE_RATE_TIMES = 20.0
VERDICT_THRESHOLD = 1.0


class DegenerateSpectrumError(ValueError):
    """The system spectrum is degenerate where the criterion needs it not to be."""


def _system(model) -> SystemModel:
    return model if isinstance(model, SystemModel) else model.system


def _bath(model) -> tuple[SpectralDensity, ThermalParams]:
    if isinstance(model, SystemModel):
        raise TypeError("this quantity needs the spectral density; pass a ModelSpec")
    return model.spectral_density, model.thermal


def resolve_horizon(model, t: float) -> float:
    """Horizon actually used: ``inf`` when the bath has decayed long before ``t``."""
    t = float(t)
    if not t > 0:
        raise ValueError("criterion horizon must be positive")
    if np.isinf(t):
        return t
    rates = _system(model).response.without_delta().rates
    if rates.size and np.all(rates.real * t > AUTO_INFINITE_RATE_TIMES):
        return np.inf
    return t


def _check_gaps(energies: np.ndarray) -> None:
    gaps = np.diff(energies)
    if gaps.size and gaps.min() < DEGENERACY_TOL:
        raise DegenerateSpectrumError(f"eigenvalues closer than {DEGENERACY_TOL:g} rad/ps")


def _check_broad_sense(energies: np.ndarray) -> None:
    """Reject ``E_a + E_b = E_c + E_d`` unless ``{a, b} = {c, d}``."""
    _check_gaps(energies)
    sums = np.sort([energies[a] + energies[b] for a, b in itertools.combinations_with_replacement(range(energies.size), 2)])
    if sums.size > 1 and np.diff(sums).min() < DEGENERACY_TOL:
        raise DegenerateSpectrumError("degenerate transition frequencies: two distinct level pairs have equal energy sums")


def _pair_weight_matrix(v: np.ndarray) -> np.ndarray:
    """``sum_nu |V_ij|^2``, symmetrised against round-off in the basis change."""
    w = np.sum(np.abs(v) ** 2, axis=0)
    return 0.5 * (w + w.T)


class _Geometry:
    """Eigenbasis coupling weights shared by the criterion formulas."""

    def __init__(self, model, broad_sense: bool = False):
        sysm = _system(model)
        e = sysm.basis.energies
        (_check_broad_sense if broad_sense else _check_gaps)(e)
        v = sysm.couplings_eigen
        diag = np.real(np.einsum("nii->ni", v))
        self.energies = e
        self.gaps = sysm.basis.gaps
        self.weights = _pair_weight_matrix(v)
        # sum_nu V_ii (V_ii - V_kk)
        self.diag_weights = np.sum(diag[:, :, None] * (diag[:, :, None] - diag[:, None, :]), axis=0)
        resp = sysm.response.without_delta()
        self.c = np.array([c for c, _ in resp.real_terms], dtype=complex)
        self.mu = np.array([m for _, m in resp.real_terms], dtype=complex)
        self.d = e.size


# ---------------------------------------------------------------------------
# second order


def upsilon(model, i: int, j: int, t: float) -> float:
    """Simplified criterion weight ``2 |V_ij|^2 int_0^t tau D(tau) cos(Delta_ij tau) dtau``."""
    if i == j:
        raise ValueError("upsilon needs two distinct eigenstates")
    geo = _Geometry(model)
    return float(_upsilon_matrix(geo, resolve_horizon(model, t))[i, j])


def _upsilon_matrix(geo: _Geometry, t: float) -> np.ndarray:
    p = geo.mu[None, None, :] - 1j * geo.gaps[:, :, None]
    s = simplex_integral(np.stack([p, p, np.zeros_like(p)], axis=-1), t)
    out = 2 * geo.weights * np.real(s @ geo.c)
    np.fill_diagonal(out, 0.0)
    return out


def simplified_criterion(model, t: float) -> dict:
    """Per-eigenstate sums ``sum_{j != i} Upsilon_ij`` and the largest magnitude."""
    geo = _Geometry(model)
    ups = _upsilon_matrix(geo, resolve_horizon(model, t))
    sums = ups.sum(axis=1)
    return {"sums": sums, "max": float(np.max(np.abs(sums)))}


def _k2_rates(geo: _Geometry, t: float) -> np.ndarray:
    p = geo.mu[None, None, :] - 1j * geo.gaps[:, :, None]
    s = simplex_integral(np.stack([p, np.zeros_like(p)], axis=-1), t)
    g = geo.weights * np.real(s @ geo.c)
    np.fill_diagonal(g, 0.0)
    return -2 * g.sum(axis=1)


def k2_rate_ii(model, i: int, t: float, source: str = "response") -> float:
    """Second-order population rate ``<ii|K2|ii>`` with ``D1`` omitted.

    Parameters
    ----------
    source : {"response", "exact"}
        ``"response"`` integrates the exponential-sum ``D``; ``"exact"`` uses
        :func:`finite_time_rate` on the spectral density (needs a ModelSpec).
    """
    if source == "exact":
        d = _system(model).dim
        return -2.0 * sum(finite_time_rate(model, i, k, t) for k in range(d) if k != i)
    if source != "response":
        raise ValueError(f"unknown source {source!r}")
    geo = _Geometry(model)
    return float(_k2_rates(geo, resolve_horizon(model, t))[i])


# ---------------------------------------------------------------------------
# fourth order


def _pair_weights(geo: _Geometry, p_gap: np.ndarray, q_gap: np.ndarray, kind: str, t: float) -> np.ndarray:
    """``Re sum_{m,n} c_m c_n I(p, q)`` for rate offsets ``p = mu_m - i p_gap``."""
    p = geo.mu[:, None] - 1j * np.asarray(p_gap)[..., None, None]
    q = geo.mu[None, :] - 1j * np.asarray(q_gap)[..., None, None]
    p, q = np.broadcast_arrays(p, q)
    zero = np.zeros_like(p)
    if kind == "first":
        s = simplex_integral(np.stack([zero, p, q, q], axis=-1), t)
        s = s + simplex_integral(np.stack([p, p, p + q, q], axis=-1), t)
    else:
        s = simplex_integral(np.stack([p + q, p, p, zero], axis=-1), t)
    cc = geo.c[:, None] * geo.c[None, :]
    return np.real(np.sum(s * cc, axis=(-2, -1)))


def _k4_terms(geo: _Geometry, t: float) -> tuple[np.ndarray, np.ndarray]:
    d = geo.d
    w, x, gaps = geo.weights, geo.diag_weights, geo.gaps
    first = np.zeros(d)
    second = np.zeros(d)
    for i in range(d):
        others = [k for k in range(d) if k != i]
        if not others:
            continue
        kk, pp = np.meshgrid(others, others, indexing="ij")
        coef = w[i, kk] * w[i, pp] * (1.0 + (kk == pp))
        vals = _pair_weights(geo, gaps[i, kk], gaps[i, pp], "first", t)
        first[i] = -2 * np.sum(coef * vals)

        ks = np.array(others)
        vals = _pair_weights(geo, gaps[i, ks], np.zeros(ks.size), "second", t)
        acc = np.sum(w[i, ks] * x[i, ks] * vals)
        trip = [(k, p) for k in others for p in range(d) if p not in (i, k)]
        if trip:
            tk, tp = np.array(trip).T
            vals = _pair_weights(geo, gaps[i, tk], gaps[tk, tp], "second", t)
            acc += np.sum(w[i, tk] * w[tk, tp] * vals)
        second[i] = 2 * acc
    return first, second


def k4_rate_ii(model, i: int, t: float) -> dict:
    """Fourth-order correction to ``<ii|K|ii>`` with ``D1`` omitted.

    Returns the double-integral term (``"first"``), the ``(t1 - t2)``-weighted
    term (``"second"``) and their sum (``"combined"``), all in rad/ps.

    Raises
    ------
    DegenerateSpectrumError
        If two distinct pairs of levels have equal energy sums.
    """
    geo = _Geometry(model, broad_sense=True)
    first, second = _k4_terms(geo, resolve_horizon(model, t))
    return {"first": float(first[i]), "second": float(second[i]), "combined": float(first[i] + second[i])}


def full_criterion(model, t: float) -> dict:
    """Per-eigenstate ``|K4_ii / K2_ii|`` and the largest value.

    Eigenstates with a vanishing second-order rate get ``None`` (indeterminate)
    rather than a division by zero.  ``first_only`` holds the ratios using the
    double-integral fourth-order term alone.
    """
    geo = _Geometry(model, broad_sense=True)
    t_eff = resolve_horizon(model, t)
    k2 = _k2_rates(geo, t_eff)
    first, second = _k4_terms(geo, t_eff)
    scale = np.max(np.abs(k2)) if k2.size else 0.0
    ratios, first_only = [], []
    for i in range(geo.d):
        if abs(k2[i]) <= 1e-14 * max(scale, 1e-300) or k2[i] == 0:
            ratios.append(None)
            first_only.append(None)
        else:
            ratios.append(float(abs((first[i] + second[i]) / k2[i])))
            first_only.append(float(abs(first[i] / k2[i])))
    finite = [r for r in ratios if r is not None]
    return {
        "ratios": ratios,
        "first_only": first_only,
        "max": max(finite) if finite else None,
        "k2": k2,
        "k4_first": first,
        "k4_second": second,
    }


# ---------------------------------------------------------------------------
# Markovian and finite-time rates from the spectral density


def markovian_rate(model, i: int, j: int) -> float:
    """``Gamma_inf(i, j) = sum |V_ij|^2 (pi / 2) J(|Delta|) coth(beta |Delta| / 2)``.

    At ``Delta = 0`` the thermal factor is continued to ``2 k_B T J(w) / w``.
    """
    spectral, thermal = _bath(model)
    sysm = _system(model)
    w = _pair_weight_matrix(sysm.couplings_eigen)[i, j]
    gap = abs(sysm.basis.gaps[i, j])
    return float(w * 0.5 * np.pi * thermal_weight(spectral, thermal, gap))


def _even_weight(spectral, thermal, omega):
    return thermal_weight(spectral, thermal, np.abs(omega))


def _cos_integral(spectral: SpectralDensity, thermal: ThermalParams, gap: float, t: float) -> float:
    """``int_0^t D(tau) cos(gap tau) dtau`` from the spectral density.

    Uses ``int_0^t cos(w tau) cos(gap tau) dtau`` in frequency space and the
    even extension of ``J coth``::

        (1/2) int_0^inf h(x) sin(x t) / x dx,   h(x) = g(gap + x) + g(gap - x)

    The part on ``[0, a]`` is regularised by subtracting ``h(0)`` (which then
    contributes ``h(0) Si(a t)``); the tail is a Fourier integral.
    """
    gap = abs(float(gap))
    if np.isinf(t):
        return float(0.5 * np.pi * thermal_weight(spectral, thermal, gap))
    g = lambda w: float(_even_weight(spectral, thermal, w))  # noqa: E731
    h = lambda x: g(gap + x) + g(gap - x)  # noqa: E731
    h0 = h(0.0)
    a = gap + 10.0 * max(spectral.scale, 2 * np.pi * thermal.kt)
    floor = 1e-13 * max(abs(h0), 1e-300) * max(1.0, t)

    def reg(x):
        if x < 1e-9 * a:
            return 0.0
        return (h(x) - h0) / x

    with np.errstate(all="ignore"):
        near = scipy.integrate.quad(reg, 0.0, a, weight="sin", wvar=t, limit=400, epsabs=floor, full_output=1)
        tail = scipy.integrate.quad(lambda x: h(x) / x, a, np.inf, weight="sin", wvar=t, limlst=200, epsabs=floor, full_output=1)
    for out in (near, tail):
        if len(out) > 3 and out[1] > max(10 * floor, 1e-8 * abs(h0) / max(t, 1e-300)):
            raise QuadratureError(f"rate integral did not converge at t={t}, gap={gap}")
    si = scipy.special.sici(a * t)[0]
    return float(0.5 * (near[0] + tail[0] + h0 * si))


def finite_time_rate(model, i: int, j: int, t: float) -> float:
    """``Gamma_t(i, j) = sum |V_ij|^2 int_0^t D(tau) cos(Delta_ij tau) dtau`` from ``J``.

    ``t = inf`` returns :func:`markovian_rate`.
    """
    spectral, thermal = _bath(model)
    sysm = _system(model)
    w = float(_pair_weight_matrix(sysm.couplings_eigen)[i, j])
    if w == 0 or spectral.is_zero:
        return 0.0
    if t <= 0:
        raise ValueError("t must be positive")
    return w * _cos_integral(spectral, thermal, sysm.basis.gaps[i, j], t)


# ---------------------------------------------------------------------------
# report


@dataclass
class CriterionReport:
    """Both criteria and the Markovian rates at one horizon."""

    horizon_ps: float
    horizon_used_ps: float
    delta: np.ndarray
    upsilon: np.ndarray
    simplified_sums: np.ndarray
    full_ratios: list
    full_first_only: list
    k2_rates: np.ndarray
    k4_first: np.ndarray
    k4_second: np.ndarray
    markovian_rates: np.ndarray | None = None
    label: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def simplified_max(self) -> float:
        return float(np.max(np.abs(self.simplified_sums)))

    @property
    def full_max(self) -> float | None:
        vals = [r for r in self.full_ratios if r is not None]
        return max(vals) if vals else None

    def eigenstate_verdicts(self) -> list[str]:
        out = []
        for s, r in zip(self.simplified_sums, self.full_ratios):
            strong = abs(s) >= VERDICT_THRESHOLD or (r is not None and r >= VERDICT_THRESHOLD)
            out.append("strong" if strong else "weak")
        return out

    @property
    def verdict(self) -> str:
        return "strong" if "strong" in self.eigenstate_verdicts() else "weak"

    @property
    def simplified_verdict(self) -> str:
        return "strong" if self.simplified_max >= VERDICT_THRESHOLD else "weak"

    @property
    def full_verdict(self) -> str:
        fm = self.full_max
        if fm is None:
            return "indeterminate"
        return "strong" if fm >= VERDICT_THRESHOLD else "weak"

    def to_dict(self) -> dict:
        verdicts = self.eigenstate_verdicts()
        per = [
            {
                "i": i,
                "simplified_sum": float(self.simplified_sums[i]),
                "full_ratio": self.full_ratios[i],
                "full_ratio_first_term": self.full_first_only[i],
                "k2_rate": float(self.k2_rates[i]),
                "k4_first": float(self.k4_first[i]),
                "k4_second": float(self.k4_second[i]),
                "verdict": verdicts[i],
            }
            for i in range(len(verdicts))
        ]
        horizon = lambda x: "inf" if np.isinf(x) else float(x)  # noqa: E731
        out = {
            "label": self.label,
            "horizon_ps": horizon(self.horizon_ps),
            "horizon_used_ps": horizon(self.horizon_used_ps),
            "per_eigenstate": per,
            "simplified_max": self.simplified_max,
            "full_max": self.full_max,
            "simplified_verdict": self.simplified_verdict,
            "full_verdict": self.full_verdict,
            "verdict": self.verdict,
            "upsilon": self.upsilon.tolist(),
            "delta": self.delta.tolist(),
        }
        if self.markovian_rates is not None:
            out["markovian_rates"] = self.markovian_rates.tolist()
        out.update(self.meta)
        return out


def criterion_report(model, t: float | None = None) -> CriterionReport:
    """Evaluate both criteria for every eigenstate at horizon ``t``.

    ``t`` defaults to the model's ``criterion_horizon`` (infinite if absent).
    """
    if t is None:
        t = getattr(model, "criterion_horizon", np.inf)
    t_eff = resolve_horizon(model, t)
    geo = _Geometry(model, broad_sense=True)
    ups = _upsilon_matrix(geo, t_eff)
    full = full_criterion(model, t_eff)
    markov = None
    if not isinstance(model, SystemModel):
        d = geo.d
        markov = np.array([[markovian_rate(model, i, j) if i != j else 0.0 for j in range(d)] for i in range(d)])
    return CriterionReport(
        horizon_ps=float(t),
        horizon_used_ps=t_eff,
        delta=geo.gaps.copy(),
        upsilon=ups,
        simplified_sums=ups.sum(axis=1),
        full_ratios=full["ratios"],
        full_first_only=full["first_only"],
        k2_rates=full["k2"],
        k4_first=full["k4_first"],
        k4_second=full["k4_second"],
        markovian_rates=markov,
        label=getattr(model, "label", ""),
    )


def export_visualization(model, t: float | None = None, points: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Data for plotting ``|Upsilon_ij|`` against transition frequency.

    Returns
    -------
    pairs : ndarray, shape (n_pairs, 2)
        ``(Delta_ij, Upsilon_ij)`` for each unordered pair ``i < j``, with
        ``Delta_ij = E_j - E_i > 0``.
    curve : ndarray, shape (points, 2)
        ``(omega, pi J(omega) / omega)`` on ``[0, 1.5 max Delta]``.
    """
    report = criterion_report(model, t)
    d = report.delta.shape[0]
    iu = np.triu_indices(d, 1)
    pairs = np.column_stack([-report.delta[iu], report.upsilon[iu]])
    spectral, _ = _bath(model)
    top = 1.5 * float(np.max(pairs[:, 0])) if pairs.size else 1.0
    omega = np.linspace(0.0, top, points)
    curve = np.column_stack([omega, np.pi * spectral.over_omega(omega)])
    return pairs, curve
