"""Closed-form time integrals of exponential kernels.

Every time integral needed by the perturbative generators and the criterion
reduces to an integral of ``exp(-sum_i r_i u_i)`` over the simplex
``{u_i >= 0, sum_i u_i = t}``.  That integral is the top-right entry of
``expm(t * C)`` where ``C`` is bidiagonal with ``-r`` on the diagonal and ones
on the superdiagonal (a divided difference of ``exp``), which stays accurate
when rates coincide or vanish.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

__all__ = ["phi1", "simplex_integral"]


def simplex_integral(rates, t: float) -> np.ndarray:
    """Integral of ``exp(-sum r_i u_i)`` over the simplex ``sum u_i = t``.

    Parameters
    ----------
    rates : array_like, shape (..., n + 1)
        Complex rates ``r_0 ... r_n``; leading axes are batch axes.
    t : float
        Simplex size.  ``np.inf`` is accepted when exactly one rate per batch
        entry is zero and every other rate has positive real part.

    Returns
    -------
    ndarray, shape (...)
    """
    rates = np.asarray(rates, dtype=complex)
    n1 = rates.shape[-1]
    if n1 == 1:
        return np.exp(-rates[..., 0] * t)
    if np.isinf(t):
        return _simplex_limit(rates)
    batch = rates.shape[:-1]
    flat = rates.reshape(-1, n1)
    gen = np.zeros((flat.shape[0], n1, n1), dtype=complex)
    idx = np.arange(n1)
    gen[:, idx, idx] = -flat * t
    gen[:, idx[:-1], idx[1:]] = t
    out = scipy.linalg.expm(gen)[:, 0, -1]
    return out.reshape(batch)


def _simplex_limit(rates: np.ndarray) -> np.ndarray:
    zero = rates == 0
    nz = zero.sum(axis=-1)
    if np.any(nz > 1):
        raise ValueError("infinite-horizon limit needs at most one zero rate")
    others = np.where(zero, 1.0, rates)
    if np.any(others.real[~zero] <= 0):
        raise ValueError("infinite-horizon limit needs decaying rates")
    return np.where(nz == 1, 1.0 / np.prod(others, axis=-1), 0.0)


def phi1(x, t: float) -> np.ndarray:
    """``int_0^t exp(x s) ds`` evaluated without cancellation for small ``x t``."""
    x = np.asarray(x, dtype=complex)
    z = x * t
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, x)
    return np.where(small, t * (1 + 0.5 * z), np.expm1(z) / safe)
