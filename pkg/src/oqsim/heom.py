"""Hierarchical equations of motion for exponential-sum baths.

Each bath ``nu`` contributes one hierarchy slot per exponential term of the
real part ``D`` and of the imaginary part ``D1`` of its response.  The
auxiliary operator with index vector ``n`` obeys

    d rho_n/dt = -(i H^x + sum_s n_s mu_s) rho_n
                 - i sum_R sqrt(n_s / |c_s|) c_s V^x rho_{n - e_s}
                 + sum_I sqrt(n_s / |c_s|) c_s V^o rho_{n - e_s}
                 - i sum_s sqrt((n_s + 1) |c_s|) V^x rho_{n + e_s}

plus ``-(w / 2) V^x V^x rho_n`` on every tier for a white-noise weight ``w``.
Auxiliaries beyond the cut are set to zero.
"""

from __future__ import annotations

import itertools
import os
import time
from dataclasses import dataclass, field
from functools import cached_property
from math import comb

import numpy as np
import scipy.sparse as sp

from .bath import ExponentialSumResponse
from .generators import SystemModel, Trajectory, _check_grid, _check_state
from .liouville import anticommutator_superop, commutator_superop, trace_distance
from .propagation import StepperConfig, StepperStats, integrate

__all__ = [
    "HEOMConfig",
    "HEOMMemoryError",
    "Hierarchy",
    "build_hierarchy",
    "converge_heom",
    "heom_liouvillian",
    "heom_rhs",
    "hierarchy_size",
    "propagate_heom",
]

MEM_CAP_ENV = "OQSIM_MEM_CAP_MB"
DEFAULT_MEM_CAP_MB = 3072.0


class HEOMMemoryError(MemoryError):
    """The hierarchy would exceed the configured memory cap."""

    def __init__(self, message: str, count: int):
        super().__init__(message)
        self.count = count


def _default_cap() -> float:
    return float(os.environ.get(MEM_CAP_ENV, DEFAULT_MEM_CAP_MB))


@dataclass(frozen=True)
class HEOMConfig:
    """Hierarchy depth, truncation rule and integrator settings."""

    n_c: int = 3
    stepper: StepperConfig = field(default_factory=StepperConfig)
    convergence_tolerance: float = 1e-3
    truncation: str = "total"
    mem_cap_mb: float | None = None

    def __post_init__(self):
        if self.n_c < 0:
            raise ValueError("N_c must be non-negative")
        if self.truncation not in ("total", "per_slot"):
            raise ValueError("truncation must be 'total' or 'per_slot'")
        if not self.convergence_tolerance > 0:
            raise ValueError("convergence tolerance must be positive")


@dataclass(frozen=True)
class Slot:
    """One exponential term of one bath."""

    bath: int
    coef: complex
    rate: complex
    imag: bool


@dataclass(frozen=True, eq=False)
class Hierarchy:
    """Index set of a truncated hierarchy and its neighbour tables.

    ``up[k, s]`` is the position of ``labels[k] + e_s`` (``-1`` beyond the
    cut) and ``down[k, s]`` that of ``labels[k] - e_s``.
    """

    slots: tuple
    labels: tuple
    up: np.ndarray
    down: np.ndarray
    n_c: int

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def n_slots(self) -> int:
        return len(self.slots)

    def index(self, label) -> int:
        return self.lookup[tuple(label)]

    @cached_property
    def lookup(self) -> dict:
        return {lab: k for k, lab in enumerate(self.labels)}


def hierarchy_size(n_slots: int, n_c: int, truncation: str = "total") -> int:
    """Number of auxiliary operators in a truncated hierarchy."""
    return comb(n_slots + n_c, n_c) if truncation == "total" else (n_c + 1) ** n_slots


def _slots(response: ExponentialSumResponse, n_baths: int) -> tuple:
    out = []
    for nu in range(n_baths):
        out += [Slot(nu, c, mu, False) for c, mu in response.real_terms]
        out += [Slot(nu, c, mu, True) for c, mu in response.imag_terms]
    return tuple(out)


def _labels(n_slots: int, n_c: int, truncation: str):
    if truncation == "per_slot":
        return sorted(itertools.product(range(n_c + 1), repeat=n_slots), key=lambda v: (sum(v), v[::-1]))
    labels = []
    for tier in range(n_c + 1):
        for combo in itertools.combinations_with_replacement(range(n_slots), tier):
            vec = [0] * n_slots
            for s in combo:
                vec[s] += 1
            labels.append(tuple(vec))
    return labels


def estimate_memory_mb(count: int, dim: int, n_slots: int) -> float:
    """Rough peak memory of a propagation: state copies plus the sparse generator."""
    d2 = dim * dim
    state = count * d2 * 16
    nnz = count * (2 * dim * d2 + 2 * n_slots * 2 * dim * d2)
    return (10 * state + nnz * 20) / 2**20


def build_hierarchy(
    model: SystemModel,
    response: ExponentialSumResponse | None = None,
    n_c: int = 3,
    truncation: str = "total",
    mem_cap_mb: float | None = None,
) -> Hierarchy:
    """Enumerate the hierarchy for a model and precompute neighbour links.

    Parameters
    ----------
    model : SystemModel
    response : ExponentialSumResponse, optional
        Defaults to ``model.response``.
    n_c : int
        Cut-off tier.
    truncation : {"total", "per_slot"}
        ``"total"`` keeps all index vectors with ``sum(n) <= n_c``;
        ``"per_slot"`` keeps every ``n_s <= n_c``.
    mem_cap_mb : float, optional
        Memory cap; defaults to the ``OQSIM_MEM_CAP_MB`` environment variable.

    Raises
    ------
    HEOMMemoryError
        If the estimated memory exceeds the cap.
    """
    response = model.response if response is None else response
    if n_c < 0:
        raise ValueError("N_c must be non-negative")
    slots = _slots(response, len(model.couplings))
    m = len(slots)
    count = hierarchy_size(m, n_c, truncation)
    cap = _default_cap() if mem_cap_mb is None else mem_cap_mb
    need = estimate_memory_mb(count, model.dim, m)
    if need > cap:
        raise HEOMMemoryError(
            f"hierarchy with {count} auxiliary operators needs ~{need:.0f} MB, above the {cap:.0f} MB cap", count
        )
    labels = _labels(m, n_c, truncation)
    lookup = {lab: k for k, lab in enumerate(labels)}
    up = np.full((len(labels), m), -1, dtype=np.int64)
    down = np.full((len(labels), m), -1, dtype=np.int64)
    for k, lab in enumerate(labels):
        for s in range(m):
            plus = lab[:s] + (lab[s] + 1,) + lab[s + 1 :]
            up[k, s] = lookup.get(plus, -1)
            if lab[s]:
                down[k, s] = lookup[lab[:s] + (lab[s] - 1,) + lab[s + 1 :]]
    return Hierarchy(slots, tuple(labels), up, down, n_c)


def _link_prefactors(slot: Slot, n_s: int) -> tuple[complex, complex]:
    """Coefficients of the links from n - e_s and from n + e_s into n."""
    mag = abs(slot.coef)
    if mag == 0:
        return 0.0, 0.0
    lower = np.sqrt(n_s / mag) * slot.coef
    lower = lower if slot.imag else -1j * lower
    upper = -1j * np.sqrt((n_s + 1) * mag)
    return lower, upper


def heom_rhs(hier: Hierarchy, model: SystemModel, ados: np.ndarray, response: ExponentialSumResponse | None = None):
    """Time derivative of all auxiliary operators, evaluated term by term.

    Parameters
    ----------
    hier : Hierarchy
    model : SystemModel
    ados : ndarray, shape (hier.size, d, d)
        Auxiliary operators, ``ados[0]`` being the reduced density matrix.
    response : ExponentialSumResponse, optional
        Used only for the white-noise weight; defaults to ``model.response``.
    """
    response = model.response if response is None else response
    h = model.hamiltonian
    vs = model.couplings
    w = response.delta_weight
    out = np.empty_like(ados, dtype=complex)
    for k, lab in enumerate(hier.labels):
        rho = ados[k]
        damp = sum(n * s.rate for n, s in zip(lab, hier.slots))
        drho = -1j * (h @ rho - rho @ h) - damp * rho
        if w:
            for v in vs:
                x = v @ rho - rho @ v
                drho -= 0.5 * w * (v @ x - x @ v)
        for s, slot in enumerate(hier.slots):
            v = vs[slot.bath]
            lower, upper = _link_prefactors(slot, lab[s])
            j = hier.down[k, s]
            if j >= 0 and lower:
                r = ados[j]
                drho += lower * (v @ r + r @ v if slot.imag else v @ r - r @ v)
            j = hier.up[k, s]
            if j >= 0 and upper:
                r = ados[j]
                drho += upper * (v @ r - r @ v)
        out[k] = drho
    return out


def heom_liouvillian(hier: Hierarchy, model: SystemModel, response: ExponentialSumResponse | None = None):
    """Sparse generator of the hierarchy acting on the stacked vectorized auxiliaries."""
    response = model.response if response is None else response
    d2 = model.dim**2
    n = hier.size
    vx = [sp.csr_matrix(commutator_superop(v)) for v in model.couplings]
    vo = [sp.csr_matrix(anticommutator_superop(v)) for v in model.couplings]
    local = sp.csr_matrix(-1j * commutator_superop(model.hamiltonian))
    if response.delta_weight:
        for x in vx:
            local = local - 0.5 * response.delta_weight * (x @ x)
    labels = np.array(hier.labels, dtype=float).reshape(n, hier.n_slots)
    rates = np.array([s.rate for s in hier.slots], dtype=complex)
    damp = labels @ rates if hier.n_slots else np.zeros(n)
    total = sp.kron(sp.identity(n, format="csr"), local) - sp.kron(sp.diags(damp), sp.identity(d2))
    rows = np.arange(n)
    for s, slot in enumerate(hier.slots):
        mag = abs(slot.coef)
        if mag == 0:
            continue
        has = hier.down[:, s] >= 0
        ns = labels[has, s]
        lower = np.sqrt(ns / mag) * slot.coef
        lower = lower if slot.imag else -1j * lower
        link = sp.csr_matrix((lower, (rows[has], hier.down[has, s])), shape=(n, n))
        total = total + sp.kron(link, vo[slot.bath] if slot.imag else vx[slot.bath])
        has = hier.up[:, s] >= 0
        upper = -1j * np.sqrt((labels[has, s] + 1) * mag)
        link = sp.csr_matrix((upper, (rows[has], hier.up[has, s])), shape=(n, n))
        total = total + sp.kron(link, vx[slot.bath])
    return total.tocsr()


def propagate_heom(
    model: SystemModel,
    rho0,
    grid,
    config: HEOMConfig | None = None,
    response: ExponentialSumResponse | None = None,
) -> Trajectory:
    """Propagate the truncated hierarchy; returns the reduced density matrix.

    All auxiliary operators start at zero.  Hierarchy statistics (count,
    memory estimate, step counts, wall time) are stored in ``Trajectory.info``.
    """
    cfg = config or HEOMConfig()
    grid = _check_grid(grid)
    rho0 = _check_state(rho0, model.dim)
    start = time.perf_counter()
    hier = build_hierarchy(model, response, cfg.n_c, cfg.truncation, cfg.mem_cap_mb)
    gen = heom_liouvillian(hier, model, response)
    d2 = model.dim**2
    y0 = np.zeros(hier.size * d2, dtype=complex)
    y0[:d2] = rho0.reshape(-1)
    stats = StepperStats()
    states = np.empty((grid.size, model.dim, model.dim), dtype=complex)
    k = iter(range(grid.size))

    def keep(t, y):
        states[next(k)] = y[:d2].reshape(model.dim, model.dim)

    integrate(lambda t, y: gen @ y, y0, grid, cfg.stepper, stats, monitor=keep, store=False)
    info = {
        "n_c": cfg.n_c,
        "auxiliaries": hier.size,
        "memory_estimate_mb": estimate_memory_mb(hier.size, model.dim, hier.n_slots),
        "steps": stats.accepted,
        "rejected_steps": stats.rejected,
        "wall_time_s": time.perf_counter() - start,
    }
    return Trajectory(grid, states, "heom", info)


def converge_heom(
    model: SystemModel,
    rho0,
    grid,
    tolerance: float = 1e-3,
    n_c_max: int = 16,
    config: HEOMConfig | None = None,
    response: ExponentialSumResponse | None = None,
):
    """Raise the cut-off tier until successive trajectories agree.

    Starting from ``N_c = 0``, the depth is increased by one until the maximum
    trace distance over the grid between depths ``N_c - 1`` and ``N_c`` drops
    below ``tolerance``.

    Returns
    -------
    trajectory : Trajectory
        Result at the converged (higher) depth.
    n_c_used : int
    distances : list of float
        Successive maximum trace distances, ``distances[k]`` comparing depths
        ``k`` and ``k + 1``.

    Raises
    ------
    HEOMMemoryError
        If the memory cap is reached before convergence.
    RuntimeError
        If ``n_c_max`` is reached before convergence.
    """
    base = config or HEOMConfig()
    previous = propagate_heom(model, rho0, grid, _with_depth(base, 0), response)
    distances = []
    for n_c in range(1, n_c_max + 1):
        current = propagate_heom(model, rho0, grid, _with_depth(base, n_c), response)
        dist = max(trace_distance(a, b) for a, b in zip(previous.states, current.states))
        distances.append(dist)
        if dist < tolerance:
            current.info["n_c_used"] = n_c
            current.info["tier_distances"] = distances
            return current, n_c, distances
        previous = current
    raise RuntimeError(f"HEOM not converged to {tolerance} by N_c = {n_c_max} (last distance {distances[-1]:.3g})")


def _with_depth(cfg: HEOMConfig, n_c: int) -> HEOMConfig:
    return HEOMConfig(n_c, cfg.stepper, cfg.convergence_tolerance, cfg.truncation, cfg.mem_cap_mb)
