"""Second- and fourth-order time-convolutionless generators and the P-matrix method.

All constructions happen in the eigenbasis of the system Hamiltonian, where
the free Liouvillian is diagonal, ``L0 = diag(-i * Delta_ab)``.  Superoperators
returned by the public functions are in the Schroedinger picture and the site
(input) basis unless ``basis="eigen"`` or ``picture="interaction"`` is passed.

The bath enters through ``alpha(t) = D(t) + i D1(t) = sum_k a_k exp(-m_k t)``
and, optionally, a white-noise part ``w delta(t)`` of ``D`` whose image in every
generator is the Lindblad dephasing term ``-(w / 2) sum_nu V_nu^x V_nu^x``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import expm_multiply

from .bath import ExponentialSumResponse
from .kernels import phi1, simplex_integral
from .liouville import (
    EnergyBasis,
    anticommutator_superop,
    check_hermitian,
    commutator_superop,
    eigendecompose,
    matrix_exponential,
)
from .propagation import StepperConfig, StepperStats, integrate

__all__ = [
    "PhysicalityReport",
    "SystemModel",
    "Trajectory",
    "k2_at",
    "k4_at",
    "physicality_check",
    "propagate_pmat",
    "propagate_tcl",
    "theta2_at",
]

UNPHYSICAL_THRESHOLD = 1e-6


@dataclass(frozen=True, eq=False)
class SystemModel:
    """System Hamiltonian, one coupling operator per bath and a shared response.

    Attributes
    ----------
    hamiltonian : ndarray
        Hermitian ``d x d`` matrix in rad/ps.
    couplings : tuple of ndarray
        Hermitian coupling operators ``V_nu``.
    response : ExponentialSumResponse
        Response function shared by all baths.
    """

    hamiltonian: np.ndarray
    couplings: tuple
    response: ExponentialSumResponse = field(default_factory=ExponentialSumResponse)

    def __post_init__(self):
        h = check_hermitian(self.hamiltonian, name="Hamiltonian")
        vs = tuple(check_hermitian(v, name="coupling operator") for v in self.couplings)
        if not vs:
            raise ValueError("a system model needs at least one bath")
        if any(v.shape != h.shape for v in vs):
            raise ValueError("coupling operators must match the Hamiltonian dimension")
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "couplings", vs)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @cached_property
    def basis(self) -> EnergyBasis:
        return eigendecompose(self.hamiltonian)

    @cached_property
    def couplings_eigen(self) -> np.ndarray:
        """Coupling operators in the eigenbasis, shape ``(n_baths, d, d)``."""
        return np.array([self.basis.to_eigen(v) for v in self.couplings])

    def with_response(self, response: ExponentialSumResponse) -> "SystemModel":
        return replace(self, response=response)


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Density matrices (site basis) on a time grid."""

    times: np.ndarray
    states: np.ndarray
    method: str
    info: dict = field(default_factory=dict)

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.einsum("tii->ti", self.states))

    def trace_error(self) -> float:
        return float(np.max(np.abs(np.einsum("tii->t", self.states) - 1.0)))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.states - np.conj(np.swapaxes(self.states, 1, 2)))))


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1 or grid[0] != 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("time grid must start at 0 and increase strictly")
    return grid


def _check_state(rho0, dim: int) -> np.ndarray:
    rho0 = check_hermitian(rho0, rtol=1e-10, name="initial state")
    if rho0.shape != (dim, dim):
        raise ValueError("initial state dimension does not match the model")
    if abs(np.trace(rho0) - 1) > 1e-10:
        raise ValueError("initial state must have unit trace")
    return rho0


# ---------------------------------------------------------------------------
# second order


def _dephasing_superop(vs: np.ndarray, weight: float) -> np.ndarray:
    d = vs.shape[-1]
    out = np.zeros((d * d, d * d), dtype=complex)
    for v in vs:
        vx = commutator_superop(v)
        out -= 0.5 * weight * (vx @ vx)
    return out


def _f_matrix(model: SystemModel, t: float) -> np.ndarray:
    """``F_ab(t) = int_0^t alpha(s) exp(-i Delta_ab s) ds`` plus ``w / 2``."""
    a, m = model.response.alpha_terms
    gaps = model.basis.gaps
    f = np.full(gaps.shape, 0.5 * model.response.delta_weight, dtype=complex)
    for ak, mk in zip(a, m):
        f += ak * phi1(-(mk + 1j * gaps), t)
    return f


def _k2_eigen(model: SystemModel, t: float) -> np.ndarray:
    """Schroedinger-picture K2 in the eigenbasis."""
    d = model.dim
    f = _f_matrix(model, t)
    eye = np.eye(d)
    out = np.zeros((d * d, d * d), dtype=complex)
    for v in model.couplings_eigen:
        lam = v * f
        out -= np.kron(v @ lam, eye) - np.kron(v, lam.conj()) - np.kron(lam, v.T) + np.kron(eye, (lam.conj().T @ v).T)
    return out


def _to_picture(model: SystemModel, sop: np.ndarray, t: float, picture: str, basis: str) -> np.ndarray:
    if picture == "interaction":
        ph = model.basis.free_phases(t)
        sop = np.conj(ph)[:, None] * sop * ph[None, :]
    elif picture != "schrodinger":
        raise ValueError(f"unknown picture {picture!r}")
    if basis == "site":
        return model.basis.superop_to_site(sop)
    if basis != "eigen":
        raise ValueError(f"unknown basis {basis!r}")
    return sop


def k2_at(model: SystemModel, t: float, picture: str = "schrodinger", basis: str = "site") -> np.ndarray:
    """Second-order TCL generator at time ``t``.

    Each element is a closed-form sum over the exponential terms of
    ``int_0^t alpha(s) exp(-i Delta s) ds``; the white-noise part of the bath
    adds the constant dephasing term ``-(w / 2) V^x V^x`` per bath.

    Parameters
    ----------
    model : SystemModel
    t : float
        Time in ps, ``t >= 0``.
    picture : {"schrodinger", "interaction"}
    basis : {"site", "eigen"}
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    return _to_picture(model, _k2_eigen(model, t), t, picture, basis)


def _psi(a, z, t):
    """``int_0^t exp(a s) (1 - exp(-z s)) / z ds`` for arrays of ``a`` and ``z``."""
    a, z = np.broadcast_arrays(np.asarray(a, dtype=complex), np.asarray(z, dtype=complex))
    small = np.abs(z) * t < 1e-2
    safe = np.where(small, 1.0, z)
    out = (phi1(a, t) - phi1(a - z, t)) / safe
    if np.any(small):
        rates = np.stack([z[small] - a[small], -a[small], np.zeros(int(small.sum()))], axis=-1)
        out[small] = simplex_integral(rates, t)
    return out


def _theta2_eigen(model: SystemModel, t: float) -> np.ndarray:
    """Interaction-picture ``int_0^t K2`` in the eigenbasis, in closed form."""
    d = model.dim
    eps = model.basis.energies
    gaps = model.basis.gaps
    a, m = model.response.alpha_terms
    half_w = 0.5 * model.response.delta_weight
    vs = model.couplings_eigen
    q = np.einsum("nik,nkr->ikr", vs, vs)  # sum_nu V_ik V_kr
    r = np.einsum("nir,nsj->irsj", vs, vs)  # sum_nu V_ir V_sj

    def g(omega, xy_gap):
        """int_0^t e^{i omega s} F_xy(s) ds with F_xy built from gap xy_gap."""
        out = half_w * phi1(1j * omega, t)
        for ak, mk in zip(a, m):
            out = out + ak * _psi(1j * omega, mk + 1j * xy_gap, t)
        return out

    def gc(omega, xy_gap):
        """Same with the complex-conjugated F_xy."""
        out = half_w * phi1(1j * omega, t)
        for ak, mk in zip(a, m):
            out = out + np.conj(ak) * _psi(1j * omega, np.conj(mk) - 1j * xy_gap, t)
        return out

    i_, k_, r_ = np.ix_(range(d), range(d), range(d))
    # term with delta_js: element (ij, rj), frequency e_i - e_r, F_kr
    t1 = np.einsum("ikr,ikr->ir", q, g(eps[i_] - eps[r_], gaps[k_, r_]))
    # term with delta_ir: element (ij, is), frequency e_s - e_j, conj F_ks  (indices s, k, j)
    s_, kk, j_ = i_, k_, r_
    t4 = np.einsum("skj,skj->sj", q, gc(eps[s_] - eps[j_], gaps[kk, s_]))
    i4, j4, r4, s4 = np.ix_(range(d), range(d), range(d), range(d))
    omega = gaps[i4, j4] - gaps[r4, s4]
    rr = np.transpose(r, (0, 3, 1, 2))  # index order (i, j, r, s)
    t23 = rr * (gc(omega, gaps[j4, s4]) + g(omega, gaps[i4, r4]))
    theta = t23.copy()
    eye = np.eye(d)
    theta -= np.einsum("ir,js->ijrs", t1, eye)
    theta -= np.einsum("sj,ir->ijrs", t4, eye)
    return theta.reshape(d * d, d * d)


def theta2_at(model: SystemModel, t: float, basis: str = "eigen") -> np.ndarray:
    """Second-order influence functional ``Theta2(t) = int_0^t K2(s) ds``.

    The integral is taken in the interaction picture and evaluated in closed
    form, one nested exponential integral beyond :func:`k2_at`.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return np.zeros((model.dim**2,) * 2, dtype=complex)
    theta = _theta2_eigen(model, t)
    return model.basis.superop_to_site(theta) if basis == "site" else theta


# ---------------------------------------------------------------------------
# fourth order from a graded hierarchy


@dataclass(frozen=True)
class _Slot:
    bath: int
    coef: complex  # c^R for real-part slots, c^I for imaginary-part slots
    rate: complex
    imag: bool


def _slots(response: ExponentialSumResponse, n_baths: int) -> list[_Slot]:
    out = []
    for nu in range(n_baths):
        out += [_Slot(nu, c, mu, False) for c, mu in response.real_terms]
        out += [_Slot(nu, c, mu, True) for c, mu in response.imag_terms]
    return out


class _GradedExpansion:
    """Order-by-order expansion of the exact reduced propagator.

    For an exponential-sum bath the exact reduced dynamics is generated by a
    hierarchy of auxiliary operators.  Counting each inter-tier link as one
    power of the coupling and the white-noise term as two, the tier-0 block
    of order ``k`` is the ``k``-th order propagator ``Lambda_k(t)``.  Only the
    blocks that can feed ``Lambda_4`` are kept, and every block carries a full
    superoperator (columns = initial Liouville basis states).
    """

    def __init__(self, model: SystemModel, max_order: int = 4):
        self.model = model
        d2 = model.dim**2
        self.d2 = d2
        vs = model.couplings_eigen
        vx = [commutator_superop(v) for v in vs]
        vo = [anticommutator_superop(v) for v in vs]
        slots = _slots(model.response, len(vs))
        self.l0 = -1j * model.basis.liouville_gaps

        states = []
        for order in range(max_order + 1):
            for tier in range(order % 2, min(order, max_order - order) + 1, 2):
                for n in itertools.combinations_with_replacement(range(len(slots)), tier):
                    states.append((order, n))
        index = {s: k for k, s in enumerate(states)}
        self.index = index
        n_states = len(states)

        blocks: list[list] = [[None] * n_states for _ in range(n_states)]
        l_delta = _dephasing_superop(vs, model.response.delta_weight) if model.response.delta_weight else None
        for (order, n), col in index.items():
            local = self.l0 - sum(slots[s].rate for s in n)
            blocks[col][col] = sp.diags(local)
            for s, slot in enumerate(slots):
                mag = abs(slot.coef)
                if mag == 0:
                    continue
                target = (order + 1, tuple(sorted(n + (s,))))
                if target in index:
                    ns = target[1].count(s)
                    pref = np.sqrt(ns / mag) * slot.coef
                    mat = pref * vo[slot.bath] if slot.imag else -1j * pref * vx[slot.bath]
                    _add(blocks, index[target], col, mat)
                if s in n:
                    lst = list(n)
                    lst.remove(s)
                    target = (order + 1, tuple(lst))
                    if target in index:
                        pref = -1j * np.sqrt(n.count(s) * mag)
                        _add(blocks, index[target], col, pref * vx[slot.bath])
            if l_delta is not None and (order + 2, n) in index:
                _add(blocks, index[(order + 2, n)], col, l_delta)
        self.generator = sp.bmat(blocks, format="csr")
        self.n_states = n_states

    def rows(self, order: int) -> slice:
        k = self.index[(order, ())]
        return slice(k * self.d2, (k + 1) * self.d2)

    def initial(self) -> np.ndarray:
        y = np.zeros((self.n_states * self.d2, self.d2), dtype=complex)
        y[self.rows(0)] = np.eye(self.d2)
        return y

    def generators(self, t: float, y: np.ndarray, max_order: int = 4) -> dict[int, np.ndarray]:
        """Schroedinger-picture K2 (and K4) in the eigenbasis from the state ``y``."""
        inv_u0 = np.exp(1j * self.model.basis.liouville_gaps * t)
        out = {}
        x = {}
        lam = {}
        for order in range(2, max_order + 1, 2):
            rows = self.rows(order)
            lam[order] = y[rows]
            x[order] = self.generator[rows] @ y - self.l0[:, None] * y[rows]
        out[2] = x[2] * inv_u0[None, :]
        if max_order >= 4:
            out[4] = x[4] * inv_u0[None, :] - (x[2] * inv_u0[None, :]) @ (lam[2] * inv_u0[None, :])
        return out


def _add(blocks, row, col, mat):
    mat = sp.csr_matrix(mat)
    blocks[row][col] = mat if blocks[row][col] is None else blocks[row][col] + mat


def _graded_generators(model: SystemModel, times: Sequence[float], max_order: int = 4) -> dict[int, np.ndarray]:
    """Generators K2, K4 (eigenbasis, Schroedinger picture) on an increasing grid."""
    times = np.asarray(times, dtype=float)
    exp = _GradedExpansion(model, max_order)
    y = exp.initial()
    out = {o: np.empty((times.size, exp.d2, exp.d2), dtype=complex) for o in range(2, max_order + 1, 2)}
    t_prev = 0.0
    for k, t in enumerate(times):
        if t > t_prev:
            y = expm_multiply(exp.generator * (t - t_prev), y)
            t_prev = t
        for order, val in exp.generators(t, y, max_order).items():
            out[order][k] = val
    return out


def k4_at(model: SystemModel, t: float, picture: str = "schrodinger", basis: str = "site") -> np.ndarray:
    """Fourth-order TCL generator at time ``t``.

    ``K4 = dLambda4/dt - dLambda2/dt Lambda2`` in the interaction picture, where
    ``Lambda_k`` are the order-``k`` terms of the exact reduced propagator,
    obtained from a graded expansion of the exponential-sum hierarchy.  This
    equals the triple time-ordered integral of the fourth-order cumulant.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return np.zeros((model.dim**2,) * 2, dtype=complex)
    k4 = _graded_generators(model, [t])[4][0]
    return _to_picture(model, k4, t, picture, basis)


class FourthOrderTable:
    """K4 (eigenbasis, Schroedinger picture) tabulated on a uniform grid.

    Values between nodes come from a cubic spline; the grid spacing resolves
    the fastest bath rate and transition frequency.
    """

    def __init__(self, model: SystemModel, t_end: float, spacing: float):
        n = max(2, int(np.ceil(t_end / spacing)))
        self.grid = np.linspace(0.0, t_end, n + 1)
        self.values = _graded_generators(model, self.grid)[4]
        self.spline = CubicSpline(self.grid, self.values, axis=0)

    def __call__(self, t: float) -> np.ndarray:
        return self.spline(t)

    @staticmethod
    def default_spacing(model: SystemModel, output_dt: float) -> float:
        fastest = np.max(np.abs(model.response.rates), initial=0.0) + np.max(np.abs(model.basis.gaps))
        return min(output_dt, 0.1 / fastest) if fastest > 0 else output_dt


# ---------------------------------------------------------------------------
# propagation


def _rotate_out(model: SystemModel, times, rho_int) -> np.ndarray:
    """Interaction-picture eigenbasis states -> Schroedinger site-basis matrices."""
    d = model.dim
    gaps = model.basis.gaps
    states = np.empty((len(times), d, d), dtype=complex)
    for k, t in enumerate(times):
        rho = np.exp(-1j * gaps * t) * rho_int[k].reshape(d, d)
        rho = model.basis.to_site(rho)
        states[k] = 0.5 * (rho + rho.conj().T)
    return states


def propagate_tcl(
    model: SystemModel,
    order: int,
    rho0,
    grid,
    config: StepperConfig | None = None,
    k4_spacing: float | None = None,
    secular: bool = False,
) -> Trajectory:
    """Integrate the TCL2 or TCL4 master equation.

    The equation is solved in the interaction picture in the eigenbasis and
    rotated back with the closed-system propagator at every output time.

    Parameters
    ----------
    model : SystemModel
    order : {2, 4}
    rho0 : array_like
        Initial density matrix in the site basis.
    grid : array_like
        Output times starting at 0 (ps).
    config : StepperConfig, optional
        Integrator tolerances (default 1e-8).
    k4_spacing : float, optional
        Spacing of the K4 interpolation table.
    secular : bool
        Keep only the K2 elements between coherences of equal frequency.
        Off by default; only available at second order.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    if secular and order != 2:
        raise ValueError("the secular approximation is only implemented for TCL2")
    grid = _check_grid(grid)
    rho0 = _check_state(rho0, model.dim)
    d = model.dim
    gaps_l = model.basis.liouville_gaps
    table = None
    if order == 4 and grid[-1] > 0:
        dt = np.min(np.diff(grid)) if grid.size > 1 else grid[-1]
        spacing = k4_spacing or FourthOrderTable.default_spacing(model, dt)
        table = FourthOrderTable(model, grid[-1], spacing)

    if secular:
        keep = np.abs(gaps_l[:, None] - gaps_l[None, :]) < 1e-9

        def rhs(t, y):
            ph = np.exp(-1j * gaps_l * t)
            return np.conj(ph) * ((_k2_eigen(model, t) * keep) @ (ph * y))

    def full_rhs(t, y):
        ph = np.exp(-1j * gaps_l * t)
        rho_s = (ph * y).reshape(d, d)
        f = _f_matrix(model, t)
        drho = np.zeros((d, d), dtype=complex)
        for v in model.couplings_eigen:
            lam = v * f
            x = lam @ rho_s - rho_s @ lam.conj().T
            drho -= v @ x - x @ v
        dy = drho.reshape(-1)
        if table is not None:
            dy = dy + table(t) @ (ph * y)
        return np.conj(ph) * dy

    if not secular:
        rhs = full_rhs
    y0 = model.basis.to_eigen(rho0).reshape(-1)
    stats = StepperStats()
    ys = integrate(rhs, y0, grid, config or StepperConfig(), stats)
    return Trajectory(grid, _rotate_out(model, grid, ys), f"tcl{order}", {"steps": stats.accepted, "secular": secular})


def propagate_pmat(model: SystemModel, rho0, grid) -> Trajectory:
    """Second-order P-matrix propagation ``rho(t) = U0(t) exp(Theta2(t)) rho(0)``."""
    grid = _check_grid(grid)
    rho0 = _check_state(rho0, model.dim)
    y0 = model.basis.to_eigen(rho0).reshape(-1)
    ys = np.empty((grid.size, y0.size), dtype=complex)
    for k, t in enumerate(grid):
        ys[k] = y0 if t == 0 else matrix_exponential(_theta2_eigen(model, t)) @ y0
    return Trajectory(grid, _rotate_out(model, grid, ys), "pmat")


@dataclass(frozen=True)
class PhysicalityReport:
    """Spectrum of the full generator ``L0 + K(t)`` at a probe time."""

    t_probe: float
    eigenvalues: np.ndarray
    max_real: float
    physical: bool

    def to_dict(self) -> dict:
        return {"t_probe_ps": self.t_probe, "max_real_part": self.max_real, "physical": self.physical}


def physicality_check(model: SystemModel, order: int, t_probe: float | None = None) -> PhysicalityReport:
    """Flag generators with a growing mode.

    The eigenvalue closest to zero (the steady state) is discarded; the
    generator is unphysical if any remaining eigenvalue has real part above
    ``1e-6`` rad/ps.  The probe time defaults to ``10 / min Re mu``.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    if t_probe is None:
        t_probe = 10.0 * model.response.memory_time if model.response.rates.size else 1.0
    total = np.diag(-1j * model.basis.liouville_gaps) + _k2_eigen(model, t_probe)
    if order == 4:
        total = total + _graded_generators(model, [t_probe])[4][0]
    ev = np.linalg.eigvals(total)
    rest = np.delete(ev, np.argmin(np.abs(ev)))
    max_real = float(np.max(rest.real)) if rest.size else 0.0
    return PhysicalityReport(t_probe, ev, max_real, max_real <= UNPHYSICAL_THRESHOLD)
