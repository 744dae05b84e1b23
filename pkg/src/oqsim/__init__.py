"""Open quantum system dynamics with perturbative generators, HEOM and weak-coupling criteria.

Units: time in ps, energies and rates in rad/ps, hbar = 1.
"""

from .bath import (
    DrudeLorentz,
    ExponentialSumResponse,
    OhmicGaussian,
    Tabulated,
    ThermalParams,
    drude_lorentz_response,
    fit_response_to_exponentials,
)
from .criterion import CriterionReport, criterion_report, full_criterion, simplified_criterion
from .generators import SystemModel, Trajectory, physicality_check, propagate_pmat, propagate_tcl
from .heom import HEOMConfig, converge_heom, propagate_heom
from .liouville import trace_distance
from .models import ModelSpec, fmo_from_file, load_model, spin_boson
from .propagation import StepperConfig, integrate

__all__ = [
    "CriterionReport",
    "DrudeLorentz",
    "ExponentialSumResponse",
    "HEOMConfig",
    "ModelSpec",
    "OhmicGaussian",
    "StepperConfig",
    "SystemModel",
    "Tabulated",
    "ThermalParams",
    "Trajectory",
    "converge_heom",
    "criterion_report",
    "drude_lorentz_response",
    "fit_response_to_exponentials",
    "fmo_from_file",
    "full_criterion",
    "integrate",
    "load_model",
    "physicality_check",
    "propagate_heom",
    "propagate_pmat",
    "propagate_tcl",
    "simplified_criterion",
    "spin_boson",
    "trace_distance",
]

__version__ = "0.1.0"
