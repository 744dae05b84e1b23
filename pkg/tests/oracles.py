"""Independent reference computations used by the tests.

Everything here is deliberately brute force: nested Gauss-Legendre quadrature
of the defining time integrals, or analytic series, with no code shared with
the closed forms in the package.
"""

import numpy as np
from numpy.polynomial.legendre import leggauss

from oqsim.bath import ExponentialSumResponse, ThermalParams

PUBLISHED = ExponentialSumResponse(
    [
        (0.14534 + 0.316206j, 2.77201 + 0.985685j),
        (0.14534 - 0.316206j, 2.77201 - 0.985685j),
        (-(0.0587924 + 0.0207246j), 2.67694 + 3.11522j),
        (-(0.0587924 - 0.0207246j), 2.67694 - 3.11522j),
    ],
    [
        (-0.00683011 + 0.0449112j, 2.35315 - 1.04322j),
        (-0.00683011 - 0.0449112j, 2.35315 + 1.04322j),
        (0.00683011 + 0.00938383j, 2.33632 + 3.21569j),
        (0.00683011 - 0.00938383j, 2.33632 - 3.21569j),
    ],
)

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)


def _cx(a):
    eye = np.eye(a.shape[0])
    return np.kron(a, eye) - np.kron(eye, a.T)


def _ac(a):
    eye = np.eye(a.shape[0])
    return np.kron(a, eye) + np.kron(eye, a.T)


def _gl(a, b, n):
    x, w = leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def _heisenberg(h):
    e, u = np.linalg.eigh(h)

    def vt(v, s):
        us = u @ np.diag(np.exp(1j * e * s)) @ u.conj().T
        return us @ v @ us.conj().T

    return vt


def k2_quadrature(h, vs, resp, t, n=80):
    """Interaction-picture K2 (site basis) by quadrature of its time integral.

    ``K2(t) = -sum_nu int_0^t V^x(t) [D(t - s) V^x(s) + i D1(t - s) V^o(s)] ds``.
    """
    vt = _heisenberg(h)
    s, w = _gl(0.0, t, n)
    out = 0
    for v in vs:
        v0 = _cx(vt(v, t))
        for sk, wk in zip(s, w):
            d, d1 = resp.evaluate(t - sk)
            vs_ = vt(v, sk)
            out = out - wk * v0 @ (d * _cx(vs_) + 1j * d1 * _ac(vs_))
    return out


def k4_quadrature(h, vs, resp, t, n=20):
    """Interaction-picture K4 (site basis, independent baths) by nested quadrature.

    Integrates the fourth-order cumulant over ``t > t1 > t2 > t3 > 0`` with
    ``R_nu(ta, tb) = D(ta - tb) V_nu^x(tb) + i D1(ta - tb) V_nu^o(tb)``; bath
    correlations pair ``(t, t2)`` with ``(t1, t3)`` in the first term and
    ``(t1, t2)`` with ``(t, t3)`` in the second.
    """
    vt = _heisenberg(h)

    def r(v, ta, tb):
        d, d1 = resp.evaluate(ta - tb)
        x = vt(v, tb)
        return d * _cx(x) + 1j * d1 * _ac(x)

    x, w = leggauss(n)
    x = 0.5 * (x + 1)
    w = 0.5 * w
    tot = 0
    for va in vs:
        v0 = _cx(vt(va, t))
        for vb in vs:
            for a, wa in zip(x, w):
                t1 = a * t
                w1 = wa * t
                v1 = _cx(vt(vb, t1))
                for b, wb in zip(x, w):
                    t2 = b * t1
                    w2 = w1 * wb * t1
                    r02, r12 = r(va, t, t2), r(vb, t1, t2)
                    for c, wc in zip(x, w):
                        t3 = c * t2
                        w3 = w2 * wc * t2
                        r13, r03 = r(vb, t1, t3), r(va, t, t3)
                        first = v0 @ (v1 @ r02 - r02 @ v1) @ r13
                        inner = v1 @ r12
                        second = v0 @ (inner @ r03 - r03 @ inner)
                        tot = tot + w3 * (first + second)
    return tot


def criterion_quadrature(energies, vs_eigen, dfun, t, n=60):
    """Population-rate criterion terms by Gauss-Legendre quadrature.

    Returns a list of ``(k2, upsilon_sum, k4_first, k4_second)`` per eigenstate.
    ``vs_eigen`` are the coupling operators in the eigenbasis.
    """
    d = len(energies)
    gap = energies[:, None] - energies[None, :]
    w = sum(np.abs(v) ** 2 for v in vs_eigen)
    x = np.zeros((d, d))
    for v in vs_eigen:
        dv = np.diag(v).real
        x += dv[:, None] * (dv[:, None] - dv[None, :])
    tau, wt = _gl(0.0, t, n)
    dt = dfun(tau)
    out = []
    for i in range(d):
        others = [k for k in range(d) if k != i]
        k2 = -2 * sum(w[i, k] * np.sum(wt * dt * np.cos(gap[i, k] * tau)) for k in others)
        ups = sum(2 * w[i, k] * np.sum(wt * tau * dt * np.cos(gap[i, k] * tau)) for k in others)
        first = 0.0
        second = 0.0
        for n1, t1 in enumerate(tau):
            ta, wa = _gl(0.0, t - t1, n)
            tb, wb = _gl(t - t1, t, n)
            da, db = dfun(ta), dfun(tb)
            for k in others:
                for p in others:
                    f = w[i, k] * w[i, p] * (2 if k == p else 1)
                    if f == 0:
                        continue
                    inner = np.sum(wa * ta * da * np.cos(gap[i, k] * t1 + gap[i, p] * ta))
                    inner += np.sum(wb * (t - tb) * db * np.cos(gap[i, k] * t1 + gap[i, p] * tb))
                    first += wt[n1] * dt[n1] * f * inner
            tc, wc = _gl(0.0, t1, n)
            dc = dfun(tc)
            for k in others:
                second += wt[n1] * dt[n1] * w[i, k] * x[i, k] * np.cos(gap[i, k] * t1) * np.sum(wc * (t1 - tc) * dc)
                for p in range(d):
                    if p in (i, k):
                        continue
                    second += (
                        wt[n1] * dt[n1] * w[i, k] * w[k, p]
                        * np.sum(wc * (t1 - tc) * dc * np.cos(gap[i, k] * t1 + gap[k, p] * tc))
                    )
        out.append((k2, ups, -2 * first, 2 * second))
    return out


def drude_lorentz_matsubara(lam, gamma, temperature, n=200_000):
    """Exact Drude-Lorentz ``D(t)`` as (coefficients, rates) of its Matsubara series."""
    beta = ThermalParams(temperature).beta
    k = np.arange(1, n + 1)
    nu = 2 * np.pi * k / beta
    c = np.concatenate([[lam * gamma / np.tan(beta * gamma / 2)], 4 * lam * gamma / beta * nu / (nu**2 - gamma**2)])
    mu = np.concatenate([[gamma], nu])
    return c, mu


def matsubara_cos_integral(lam, gamma, temperature, gap, t, n=200_000):
    """``int_0^t D(s) cos(gap s) ds`` from the Matsubara series with a tail estimate."""
    c, mu = drude_lorentz_matsubara(lam, gamma, temperature, n)
    p = mu - 1j * gap
    val = float(np.real(np.sum(c * (1 - np.exp(-p * t)) / p)))
    beta = ThermalParams(temperature).beta
    return val + lam * gamma * beta / (np.pi**2 * n)
