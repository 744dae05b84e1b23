import json

import numpy as np
import pytest

from oqsim.bath import CM_TO_RAD_PS, DrudeLorentz, evaluate_spectral_density, reorganization_energy
from oqsim.criterion import full_criterion, simplified_criterion
from oqsim.generators import propagate_tcl
from oqsim.liouville import trace_distance
from oqsim.models import (
    FMO_LARGEST_COUPLING,
    PUBLISHED_OHMIC_RESPONSE,
    bundled_model_path,
    fmo_from_file,
    fs_to_rate,
    initial_site_state,
    load_model,
    model_from_dict,
    spin_boson,
)


@pytest.fixture(scope="module")
def fmo():
    return fmo_from_file()


@pytest.fixture(scope="module")
def fmo_data():
    return json.loads(bundled_model_path("fmo").read_text())


# spin-boson ---------------------------------------------------------------


def test_spin_boson_defaults():
    sb = spin_boson()
    e = sb.system.basis.energies
    assert e[1] - e[0] == pytest.approx(np.pi / 2, rel=1e-14)
    assert sb.dim == 2 and len(sb.system.couplings) == 1
    assert np.array_equal(sb.system.couplings[0], np.diag([1.0, -1.0]))
    assert sb.thermal.temperature == 50.0


@pytest.mark.parametrize("eta", [1.0, 10.0])
def test_spin_boson_reorganization_energy(eta):
    lam = reorganization_energy(spin_boson(eta=eta).spectral_density)
    assert lam == pytest.approx(eta * 0.01485 * np.sqrt(np.pi) / 2, rel=1e-12)
    assert lam / eta == pytest.approx(0.01316, abs=5e-6)


def test_spin_boson_eta_scales_spectral_density_only():
    one, ten = spin_boson(eta=1.0), spin_boson(eta=10.0)
    w = np.linspace(0, 8, 41)
    assert np.allclose(evaluate_spectral_density(ten.spectral_density, w), 10 * evaluate_spectral_density(one.spectral_density, w), rtol=1e-15)
    assert np.array_equal(one.system.hamiltonian, ten.system.hamiltonian)
    assert ten.system.response.evaluate(0.7)[0] == pytest.approx(10 * one.system.response.evaluate(0.7)[0], rel=1e-14)


def test_spin_boson_published_response():
    assert spin_boson().system.response == PUBLISHED_OHMIC_RESPONSE
    with pytest.raises(ValueError):
        spin_boson(response="other")
    with pytest.raises(ValueError):
        spin_boson(eta=-1)


def test_bundled_spin_boson_file_matches_preset():
    a, b = load_model("spin_boson"), spin_boson()
    assert np.allclose(a.system.hamiltonian, b.system.hamiltonian, atol=1e-15)
    assert a.system.response.evaluate(0.4) == pytest.approx(b.system.response.evaluate(0.4), rel=1e-12)
    assert a.criterion_horizon == b.criterion_horizon == 5.0
    assert load_model("spin_boson", eta=10.0).system.response.evaluate(0.4)[0] == pytest.approx(10 * b.system.response.evaluate(0.4)[0])


# FMO ----------------------------------------------------------------------


def test_fmo_largest_coupling(fmo):
    h = fmo.system.hamiltonian
    off = np.abs(h - np.diag(np.diag(h)))
    assert off.max() == abs(h[0, 1])
    assert abs(h[0, 1]) == pytest.approx(FMO_LARGEST_COUPLING, rel=0.02)


def test_fmo_structure(fmo):
    assert fmo.dim == 7 and len(fmo.system.couplings) == 7
    for k, v in enumerate(fmo.system.couplings):
        assert np.array_equal(v, np.diag(np.eye(7)[k]))
    assert isinstance(fmo.spectral_density, DrudeLorentz)
    assert reorganization_energy(fmo.spectral_density) == pytest.approx(6.59, rel=1e-8)
    assert fmo.spectral_density.gamma == pytest.approx(fs_to_rate(50.0)) == pytest.approx(20.0)
    assert fmo.thermal.temperature == 77.0
    assert np.isinf(fmo.criterion_horizon)


def test_fmo_unit_conversion(fmo, fmo_data):
    rows = fmo_data["hamiltonian"]["entries"]
    assert fmo.system.hamiltonian[0, 0].real == pytest.approx(rows[0][0][0] * CM_TO_RAD_PS)
    assert fmo_data["hamiltonian"]["cm_to_rad_per_ps"] == CM_TO_RAD_PS


def test_fmo_overrides(fmo):
    hot = fmo_from_file(temperature=300.0, cutoff_fs=166.0)
    assert hot.thermal.temperature == 300.0
    assert hot.spectral_density.gamma == pytest.approx(1000 / 166)
    assert np.array_equal(hot.system.hamiltonian, fmo.system.hamiltonian)


def test_fmo_asymmetric_rejected(tmp_path, fmo_data):
    data = json.loads(json.dumps(fmo_data))
    data["hamiltonian"]["entries"][0][1][0] += 1.0
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ValueError):
        fmo_from_file(path)


def test_fmo_wrong_size_rejected(tmp_path, fmo_data):
    data = json.loads(json.dumps(fmo_data))
    data["hamiltonian"]["entries"] = [row[:6] for row in data["hamiltonian"]["entries"][:6]]
    path = tmp_path / "six.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ValueError):
        fmo_from_file(path)


def test_diagonal_hamiltonian_has_no_upsilon(tmp_path, fmo_data):
    data = json.loads(json.dumps(fmo_data))
    rows = data["hamiltonian"]["entries"]
    for i, row in enumerate(rows):
        for j in range(len(row)):
            if i != j:
                row[j] = [0.0, 0.0]
    path = tmp_path / "diag.json"
    path.write_text(json.dumps(data))
    spec = fmo_from_file(path)
    assert np.all(simplified_criterion(spec, np.inf)["sums"] == 0)
    assert simplified_criterion(spec, 1.0)["max"] == 0


def test_flat_entry_list_and_explicit_coupling():
    data = {
        "hamiltonian": {"unit": "rad_per_ps", "entries": [[0, 0], [1, 0], [1, 0], [0, 0]]},
        "baths": [{"variant": "drude_lorentz", "lambda": 1.0, "cutoff_fs": 100, "temperature_K": 300}],
        "coupling": [[[[1, 0], [0, 0]], [[0, 0], [-1, 0]]]],
        "initial": {"matrix": [[[0.5, 0], [0.5, 0]], [[0.5, 0], [0.5, 0]]]},
        "criterion_horizon_ps": 2.0,
    }
    spec = model_from_dict(data)
    assert np.array_equal(spec.system.hamiltonian, np.array([[0, 1], [1, 0]]))
    assert spec.criterion_horizon == 2.0
    assert spec.initial_state[0, 1] == 0.5
    assert spec.system.response.delta_weight > 0


def test_model_file_errors():
    base = {
        "hamiltonian": {"unit": "rad_per_ps", "entries": [[0, 0], [1, 0], [1, 0], [0, 0]]},
        "baths": [{"variant": "drude_lorentz", "lambda": 1.0, "cutoff_fs": 100, "temperature_K": 300}],
    }
    with pytest.raises(ValueError):
        model_from_dict({**base, "baths": []})
    with pytest.raises(ValueError):
        model_from_dict({**base, "baths": [base["baths"][0], {**base["baths"][0], "lambda": 2.0}]})
    with pytest.raises(ValueError):
        model_from_dict({**base, "hamiltonian": {"unit": "eV", "entries": base["hamiltonian"]["entries"]}})
    with pytest.raises(ValueError):
        model_from_dict({**base, "baths": [{**base["baths"][0], "variant": "lorentzian"}]})
    with pytest.raises(IndexError):
        model_from_dict({**base, "initial": {"site": 2}})


# initial states ---------------------------------------------------------


def test_initial_site_states(fmo):
    r0 = initial_site_state(fmo, 0)
    r5 = initial_site_state(fmo, 5)
    assert np.trace(r0) == 1 and np.linalg.matrix_rank(r0) == 1
    assert np.allclose(r0 @ r0, r0)
    assert trace_distance(r0, r5) == pytest.approx(1.0)
    assert np.array_equal(initial_site_state(spin_boson(), 0), np.diag([1.0, 0.0]))
    with pytest.raises(IndexError):
        initial_site_state(fmo, 7)
    with pytest.raises(IndexError):
        initial_site_state(fmo, -1)
    assert np.array_equal(fmo.with_initial_site(5).initial_state, r5)


def test_uniform_energy_shift_invariance(fmo_data):
    shifted = json.loads(json.dumps(fmo_data))
    for i, row in enumerate(shifted["hamiltonian"]["entries"]):
        row[i][0] += 1234.5
    a = model_from_dict(fmo_data)
    b = model_from_dict(shifted)
    grid = np.linspace(0, 0.2, 5)
    ta = propagate_tcl(a.system, 2, a.initial_state, grid)
    tb = propagate_tcl(b.system, 2, b.initial_state, grid)
    assert max(trace_distance(x, y) for x, y in zip(ta.states, tb.states)) < 1e-7
    assert simplified_criterion(b, np.inf)["max"] == pytest.approx(simplified_criterion(a, np.inf)["max"], rel=1e-9)
    assert full_criterion(b, np.inf)["max"] == pytest.approx(full_criterion(a, np.inf)["max"], rel=1e-9)


@pytest.mark.parametrize("eta", [1.0, 10.0, 3.7])
def test_criterion_linear_in_eta(eta):
    base = spin_boson()
    spec = spin_boson(eta=eta)
    for crit in (simplified_criterion, full_criterion):
        assert crit(spec, 5.0)["max"] == pytest.approx(eta * crit(base, 5.0)["max"], rel=1e-9)
