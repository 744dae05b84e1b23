"""Preset models and the JSON model-file format.

A model file looks like::

    {
      "label": "...",
      "hamiltonian": {"unit": "rad_per_ps" | "per_cm", "entries": [[[re, im], ...], ...]},
      "baths": [{"variant": "drude_lorentz", "lambda": ..., "cutoff_fs": ..., "temperature_K": ...,
                 "response": {"kind": ...}}],
      "coupling": "site_projectors" | [matrix, ...],
      "initial": {"site": 0} | {"matrix": [[[re, im], ...], ...]},
      "criterion_horizon_ps": 5.0 | "inf"
    }

``entries`` may be given as ``d`` rows of ``[re, im]`` pairs or as one flat
row-major list of ``d * d`` pairs.  Site indices are zero-based.  All baths
share one response function, so a bath list either has a single entry
applied to every coupling operator or repeats the same entry per operator.

Bath response kinds:

``exponent_plus_delta``
    Drude-Lorentz only: one exponential plus a white-noise part.
``exponential_sum``
    Explicit ``real_terms``/``imag_terms``/``delta_weight`` as written by
    :meth:`ExponentialSumResponse.to_dict`; ``per_unit_eta: true`` multiplies
    the coefficients by the bath's ``eta``.
``fit``
    Sample the exact response on ``[0, t_end]`` with ``points`` samples and fit
    ``n_real`` + ``n_imag`` exponentials.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .bath import (
    CM_TO_RAD_PS,
    DrudeLorentz,
    ExponentialSumResponse,
    OhmicGaussian,
    SpectralDensity,
    ThermalParams,
    drude_lorentz_response,
    fit_response_to_exponentials,
    sample_response,
)
from .generators import SystemModel

__all__ = [
    "BUNDLED_MODELS",
    "FMO_LARGEST_COUPLING",
    "ModelSpec",
    "PUBLISHED_OHMIC_RESPONSE",
    "bundled_model_path",
    "fmo_from_file",
    "fs_to_rate",
    "initial_site_state",
    "load_model",
    "model_from_dict",
    "spin_boson",
]

BUNDLED_MODELS = {
    "fmo": "fmo_ishizaki_fleming.json",
    "spin_boson": "spin_boson_default.json",
}

#: Largest site coupling |H_12| of the bundled FMO Hamiltonian, rad/ps.
FMO_LARGEST_COUPLING = 16.5

#: Four-plus-four exponential fit of the Ohmic-Gaussian response at the
#: spin-boson defaults (eta = 1, lambda = 0.01485, omega_c = 2.2, T = 50 K).
PUBLISHED_OHMIC_RESPONSE = ExponentialSumResponse(
    real_terms=[
        (0.14534 + 0.316206j, 2.77201 + 0.985685j),
        (0.14534 - 0.316206j, 2.77201 - 0.985685j),
        (-0.0587924 - 0.0207246j, 2.67694 + 3.11522j),
        (-0.0587924 + 0.0207246j, 2.67694 - 3.11522j),
    ],
    imag_terms=[
        (-0.00683011 + 0.0449112j, 2.35315 - 1.04322j),
        (-0.00683011 - 0.0449112j, 2.35315 + 1.04322j),
        (0.00683011 + 0.00938383j, 2.33632 + 3.21569j),
        (0.00683011 - 0.00938383j, 2.33632 - 3.21569j),
    ],
)


def fs_to_rate(cutoff_fs: float) -> float:
    """Convert a correlation time in femtoseconds to a rate in 1/ps."""
    if not cutoff_fs > 0:
        raise ValueError("cutoff time must be positive")
    return 1000.0 / cutoff_fs


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A system model together with the physical bath description.

    Attributes
    ----------
    system : SystemModel
        Hamiltonian, couplings and the response used by the propagators.
    spectral_density : SpectralDensity
    thermal : ThermalParams
    initial_state : ndarray
        Initial density matrix in the site basis.
    label : str
    criterion_horizon : float
        Default horizon (ps) for the weak-coupling criterion; may be ``inf``.
    metadata : dict
        Free-form provenance of the parameters (units, source file).
    """

    system: SystemModel
    spectral_density: SpectralDensity
    thermal: ThermalParams
    initial_state: np.ndarray
    label: str = ""
    criterion_horizon: float = np.inf
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        rho = np.asarray(self.initial_state, dtype=complex)
        d = self.system.dim
        if rho.shape != (d, d):
            raise ValueError(f"initial state must be {d}x{d}")
        if not np.allclose(rho, rho.conj().T, atol=1e-12) or abs(np.trace(rho) - 1) > 1e-10:
            raise ValueError("initial state must be Hermitian with unit trace")
        if np.linalg.eigvalsh(rho).min() < -1e-10:
            raise ValueError("initial state must be positive semidefinite")
        object.__setattr__(self, "initial_state", rho)

    @property
    def dim(self) -> int:
        return self.system.dim

    def with_initial_site(self, site: int) -> "ModelSpec":
        return replace(self, initial_state=initial_site_state(self, site))


def initial_site_state(spec: ModelSpec | SystemModel, site: int) -> np.ndarray:
    """Pure state ``|site><site|`` in the site basis (zero-based index)."""
    d = spec.dim
    if not 0 <= int(site) < d or int(site) != site:
        raise IndexError(f"site {site} out of range for dimension {d}")
    rho = np.zeros((d, d), dtype=complex)
    rho[int(site), int(site)] = 1.0
    return rho


# ---------------------------------------------------------------------------
# presets


def spin_boson(
    delta: float = np.pi / 2,
    eta: float = 1.0,
    lam: float = 0.01485,
    omega_c: float = 2.2,
    temperature: float = 50.0,
    response: str | ExponentialSumResponse = "published",
    horizon: float = 5.0,
) -> ModelSpec:
    """Two-level system ``(delta / 2) sigma_x`` coupled through ``sigma_z``.

    Parameters
    ----------
    delta : float
        Level splitting (rad/ps).
    eta, lam, omega_c : float
        Ohmic-Gaussian spectral density ``J = eta lam w exp(-(w / omega_c)^2)``.
    temperature : float
        Bath temperature (K).
    response : {"published", "fit"} or ExponentialSumResponse
        ``"published"`` scales :data:`PUBLISHED_OHMIC_RESPONSE` by ``eta`` and is
        only meaningful at the default ``lam``, ``omega_c`` and temperature;
        ``"fit"`` fits four plus four exponentials to the exact response.
    horizon : float
        Default criterion horizon (ps).
    """
    if not (delta > 0 and eta > 0 and lam > 0 and omega_c > 0 and temperature > 0):
        raise ValueError("spin-boson parameters must be positive")
    spectral = OhmicGaussian(eta, lam, omega_c)
    thermal = ThermalParams(temperature)
    if isinstance(response, ExponentialSumResponse):
        resp = response
    elif response == "published":
        resp = PUBLISHED_OHMIC_RESPONSE.scaled(eta)
    elif response == "fit":
        resp = _fit_response(spectral, thermal, {})
    else:
        raise ValueError(f"unknown response option {response!r}")
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sz = np.diag([1.0, -1.0]).astype(complex)
    system = SystemModel(0.5 * delta * sx, (sz,), resp)
    return ModelSpec(
        system,
        spectral,
        thermal,
        initial_site_state(system, 0),
        label=f"spin-boson eta={eta:g}",
        criterion_horizon=horizon,
        metadata={"delta": delta, "eta": eta, "lambda": lam, "omega_c": omega_c, "temperature_K": temperature},
    )


def bundled_model_path(name: str) -> Path:
    """Path of a bundled model file, by short name or file name."""
    fname = BUNDLED_MODELS.get(name, name)
    res = resources.files("oqsim") / "data" / fname
    if not res.is_file():
        raise FileNotFoundError(f"no bundled model named {name!r}")
    return Path(str(res))


def fmo_from_file(
    path: str | Path | None = None,
    temperature: float | None = None,
    cutoff_fs: float | None = None,
) -> ModelSpec:
    """Load a seven-site FMO model with one Drude-Lorentz bath per site.

    ``path`` defaults to the bundled Ishizaki-Fleming dataset, whose largest
    coupling is checked against :data:`FMO_LARGEST_COUPLING` (2 % tolerance).
    ``temperature`` (K) and ``cutoff_fs`` override the file values.
    """
    bundled = path is None
    data = _read_json(bundled_model_path("fmo") if bundled else path)
    spec = model_from_dict(data, temperature=temperature, cutoff_fs=cutoff_fs)
    if spec.dim != 7:
        raise ValueError(f"FMO model must have 7 sites, got {spec.dim}")
    h = spec.system.hamiltonian
    if np.max(np.abs(h.imag)) > 0 or not np.allclose(h, h.T):
        raise ValueError("FMO Hamiltonian must be real symmetric")
    if bundled:
        h12 = abs(h[0, 1])
        if abs(h12 - FMO_LARGEST_COUPLING) > 0.02 * FMO_LARGEST_COUPLING:
            raise ValueError(f"bundled FMO |H_12| = {h12:.4g} rad/ps, expected {FMO_LARGEST_COUPLING}")
    return spec


def load_model(source: str | Path | dict, **overrides) -> ModelSpec:
    """Load a model from a bundled name, a JSON file or an already parsed dict.

    Keyword overrides ``eta``, ``temperature`` and ``cutoff_fs`` replace the
    corresponding bath parameters.
    """
    if isinstance(source, dict):
        return model_from_dict(source, **overrides)
    if str(source) in BUNDLED_MODELS:
        if source == "fmo":
            return fmo_from_file(None, overrides.get("temperature"), overrides.get("cutoff_fs"))
        source = bundled_model_path(str(source))
    return model_from_dict(_read_json(source), **overrides)


def _read_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# model-file parsing


def _complex_matrix(entries, name: str) -> np.ndarray:
    arr = np.asarray(entries, dtype=float)
    if arr.shape[-1] != 2:
        raise ValueError(f"{name}: entries must be [re, im] pairs")
    z = arr[..., 0] + 1j * arr[..., 1]
    if z.ndim == 1:
        d = int(round(np.sqrt(z.size)))
        if d * d != z.size:
            raise ValueError(f"{name}: flat entry list is not a square matrix")
        z = z.reshape(d, d)
    if z.ndim != 2 or z.shape[0] != z.shape[1]:
        raise ValueError(f"{name}: matrix must be square")
    return z


def _hamiltonian(block: dict) -> np.ndarray:
    h = _complex_matrix(block["entries"], "hamiltonian")
    unit = block.get("unit", "rad_per_ps")
    if unit == "per_cm":
        return h * float(block.get("cm_to_rad_per_ps", CM_TO_RAD_PS))
    if unit != "rad_per_ps":
        raise ValueError(f"unknown Hamiltonian unit {unit!r}")
    return h


def _spectral(bath: dict) -> SpectralDensity:
    variant = bath.get("variant")
    if variant == "ohmic_gaussian":
        return OhmicGaussian(float(bath.get("eta", 1.0)), float(bath["lambda"]), float(bath["omega_c"]))
    if variant == "drude_lorentz":
        if "gamma" in bath:
            gamma = float(bath["gamma"])
        else:
            gamma = fs_to_rate(float(bath["cutoff_fs"]))
        return DrudeLorentz(float(bath["lambda"]), gamma)
    raise ValueError(f"unknown bath variant {variant!r}")


def _fit_response(spectral, thermal, opts: dict) -> ExponentialSumResponse:
    times = np.linspace(0.0, float(opts.get("t_end", 5.0)), int(opts.get("points", 251)))
    d, d1 = sample_response(spectral, thermal, times)
    return fit_response_to_exponentials(times, d, d1, int(opts.get("n_real", 4)), int(opts.get("n_imag", 4)))


def _response(bath: dict, spectral: SpectralDensity, thermal: ThermalParams) -> ExponentialSumResponse:
    opts = bath.get("response", {"kind": "exponent_plus_delta"})
    kind = opts.get("kind")
    if kind == "exponent_plus_delta":
        if not isinstance(spectral, DrudeLorentz):
            raise ValueError("exponent_plus_delta response requires a Drude-Lorentz bath")
        return drude_lorentz_response(spectral.lam, spectral.gamma, thermal)
    if kind == "exponential_sum":
        resp = ExponentialSumResponse.from_dict(opts)
        if opts.get("per_unit_eta", False):
            resp = resp.scaled(float(bath.get("eta", 1.0)))
        return resp
    if kind == "fit":
        return _fit_response(spectral, thermal, opts)
    raise ValueError(f"unknown response kind {kind!r}")


def model_from_dict(
    data: dict,
    eta: float | None = None,
    temperature: float | None = None,
    cutoff_fs: float | None = None,
) -> ModelSpec:
    """Build a :class:`ModelSpec` from a parsed model file."""
    h = _hamiltonian(data["hamiltonian"])
    d = h.shape[0]
    coupling = data.get("coupling", "site_projectors")
    if coupling == "site_projectors":
        vs = [np.diag(np.eye(d)[k]).astype(complex) for k in range(d)]
    else:
        vs = [_complex_matrix(m, "coupling") for m in coupling]

    baths = data.get("baths")
    if not baths:
        raise ValueError("model file needs at least one bath")
    if len(baths) not in (1, len(vs)) or any(b != baths[0] for b in baths):
        raise ValueError("all baths must share one specification")
    bath = dict(baths[0])
    if eta is not None:
        bath["eta"] = eta
    if temperature is not None:
        bath["temperature_K"] = temperature
    if cutoff_fs is not None:
        bath.pop("gamma", None)
        bath["cutoff_fs"] = cutoff_fs
    spectral = _spectral(bath)
    thermal = ThermalParams(float(bath["temperature_K"]))
    system = SystemModel(h, tuple(vs), _response(bath, spectral, thermal))

    init = data.get("initial", {"site": 0})
    if "matrix" in init:
        rho0 = _complex_matrix(init["matrix"], "initial")
    else:
        rho0 = initial_site_state(system, init["site"])
    horizon = data.get("criterion_horizon_ps", "inf")
    horizon = np.inf if horizon in ("inf", None) else float(horizon)
    meta = {k: v for k, v in bath.items() if k != "response"}
    meta["response_kind"] = bath.get("response", {}).get("kind", "exponent_plus_delta")
    return ModelSpec(system, spectral, thermal, rho0, data.get("label", ""), horizon, meta)
