"""Adaptive Dormand-Prince 5(4) integration shared by all propagators."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["StepSizeError", "StepperConfig", "StepperStats", "integrate"]


class StepSizeError(RuntimeError):
    """The step size fell below the configured minimum."""

    def __init__(self, message: str, t_reached: float):
        super().__init__(message)
        self.t_reached = t_reached


@dataclass(frozen=True)
class StepperConfig:
    """Tolerances and step bounds (ps) for :func:`integrate`."""

    atol: float = 1e-8
    rtol: float = 1e-8
    max_step: float = np.inf
    min_step: float = 1e-12
    first_step: float | None = None

    def __post_init__(self):
        if not (self.atol > 0 and self.rtol > 0):
            raise ValueError("tolerances must be positive")
        if not (0 < self.min_step < self.max_step):
            raise ValueError("need 0 < min_step < max_step")


@dataclass
class StepperStats:
    accepted: int = 0
    rejected: int = 0
    rhs_calls: int = 0


# Dormand-Prince 5(4) tableau
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_E = _B - np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


def _error_norm(err, y, y_new, cfg):
    scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.max(np.abs(err) / scale))


def _initial_step(rhs, t0, y0, f0, cfg, span):
    d0 = np.max(np.abs(y0))
    d1 = np.max(np.abs(f0))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + h0 * f0
    d2 = np.max(np.abs(rhs(t0 + h0, y1) - f0)) / h0
    h1 = max(1e-6, h0 * 1e-3) if max(d1, d2) <= 1e-15 else (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span, cfg.max_step)


def integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0,
    grid,
    config: StepperConfig | None = None,
    stats: StepperStats | None = None,
    monitor: Callable[[float, np.ndarray], None] | None = None,
    store: bool = True,
) -> np.ndarray | None:
    """Integrate ``dy/dt = rhs(t, y)`` and return the solution on ``grid``.

    Steps are truncated so that every grid point is hit exactly; the
    embedded fourth-order solution controls the local error in the max norm
    with ``atol + rtol * |y|`` per component.

    Parameters
    ----------
    rhs : callable
        ``rhs(t, y)`` returning an array shaped like ``y``.
    y0 : array_like
        Initial state at ``grid[0]`` (complex allowed).
    grid : array_like
        Strictly increasing output times.
    config : StepperConfig, optional
    stats : StepperStats, optional
        Filled with step counts if given.
    monitor : callable, optional
        Called as ``monitor(t, y)`` at each output time.
    store : bool
        If false, nothing is stored and ``None`` is returned; use ``monitor``
        to extract what is needed from large states.

    Returns
    -------
    ndarray of shape ``(len(grid),) + y0.shape`` or None

    Raises
    ------
    StepSizeError
        When the required step drops below ``config.min_step``.
    """
    cfg = config or StepperConfig()
    st = stats if stats is not None else StepperStats()
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    y = np.array(y0, dtype=complex if np.iscomplexobj(y0) else float)
    out = np.empty((grid.size,) + y.shape, dtype=y.dtype) if store else None
    if store:
        out[0] = y
    if monitor:
        monitor(grid[0], y)
    if grid.size == 1:
        return out

    t = float(grid[0])
    f = rhs(t, y)
    st.rhs_calls += 1
    h = cfg.first_step or _initial_step(rhs, t, y, f, cfg, grid[-1] - t)
    st.rhs_calls += 1
    k = [None] * 7
    for idx in range(1, grid.size):
        target = float(grid[idx])
        while t < target:
            h = min(h, cfg.max_step)
            last = t + h >= target - 1e-12 * max(1.0, abs(target))
            h_step = target - t if last else h
            if h_step < cfg.min_step and not last:
                raise StepSizeError(f"step size underflow at t={t:.6g} ps", t)
            k[0] = f
            for s in range(1, 7):
                ys = y + h_step * sum(a * k[j] for j, a in enumerate(_A[s]) if a)
                k[s] = rhs(t + _C[s] * h_step, ys)
            st.rhs_calls += 6
            y_new = ys  # row 7 of the tableau equals the 5th-order weights
            err = h_step * sum(e * k[j] for j, e in enumerate(_E) if e)
            en = _error_norm(err, y, y_new, cfg)
            if not np.isfinite(en):
                en = np.inf
            if en <= 1.0:
                t = target if last else t + h_step
                y = y_new
                f = k[6]
                st.accepted += 1
                factor = 5.0 if en == 0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
                if not last or factor < 1:
                    h = h_step * factor
            else:
                st.rejected += 1
                h = h_step * max(0.2, 0.9 * en ** -0.2)
                if h < cfg.min_step:
                    raise StepSizeError(f"step size underflow at t={t:.6g} ps", t)
        if store:
            out[idx] = y
        if monitor:
            monitor(t, y)
    return out
