import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qwitness.classical import RateMatrix, classical_evolve
from qwitness.models import (HADAMARD, PAULI_X, PAULI_Z, PRESETS, ConfigurationError, ProcessMap, build_preset,
                             compose_rotation, cooper_pair_box, double_quantum_dot,
                             excitation_number, fmo_closed_model, fmo_model, hadamard_process,
                             half_wave_plate, identity_process, jc_cavity, load_fmo_data,
                             photonic_witness, photonic_witness_closed_form, quarter_wave_plate,
                             rabi_period, transmon_hadamard_witness)
from qwitness.quantum import DensityMatrix, evolve, evolve_operator, population, stationary_state


def test_cpb_at_degeneracy_is_pure_tunnelling():
    h = cooper_pair_box().hamiltonian
    assert h[0, 0] == 0 and h[1, 1] == 0 and h[0, 1] != 0
    biased = cooper_pair_box(n_g=0.3).hamiltonian
    assert biased[0, 0] != 0


def test_cpb_rabi_period_and_closed_form():
    model = cooper_pair_box()
    assert abs(rabi_period(model) - 79.9) < 0.1
    ej = model.meta["E_J"]
    rho0 = DensityMatrix.basis(model.space, "1")
    for t in np.linspace(0, 160, 9):
        assert abs(population(evolve(model, rho0, t), "2") - math.sin(ej * t / 2) ** 2) < 1e-10
    with pytest.raises(ValueError):
        cooper_pair_box(E_J=(0.0, "ueV"))


def test_process_map_rejects_non_cptp():
    with pytest.raises(ValueError):
        ProcessMap((np.eye(2) * 1.1,))


def test_hadamard_process_fidelity_and_witness():
    assert abs(transmon_hadamard_witness(hadamard_process(1.0)).value - 0.5) < 1e-12
    assert transmon_hadamard_witness(identity_process()).value < 1e-15
    proc = hadamard_process(0.94)
    assert abs(proc.fidelity(HADAMARD) - 0.94) < 1e-12
    assert 0.40 <= transmon_hadamard_witness(proc).value <= 0.50


@given(st.floats(0.25, 1.0))
def test_depolarized_hadamard_witness_closed_form(fidelity):
    q = 4 * (1 - fidelity) / 3
    assert abs(transmon_hadamard_witness(hadamard_process(fidelity)).value - 0.5 * (1 - q) ** 2) < 1e-12


def test_dqd_labels_and_operators():
    model = double_quantum_dot()
    assert model.space.labels == ("1", "2", "3")
    h = model.hamiltonian
    assert h[1, 2] == 1 and h[0, 1] == 0
    rates = sorted(r for _, r in model.collapse)
    assert rates == [0.1, 4.0]


def test_dqd_stationary_state_is_positive():
    ss = stationary_state(double_quantum_dot()).populations()
    assert ss.min() > 0 and abs(ss.sum() - 1) < 1e-10


def test_dqd_without_tunnelling_is_a_rate_model():
    model = double_quantum_dot(tunnelling=0.0)
    K = RateMatrix.from_rates([[0, 0, 0.1], [4.0, 0, 0], [0, 0, 0]])
    p0 = np.array([0.2, 0.3, 0.5])
    for t in (0.1, 1.0, 7.0):
        rho = evolve(model, DensityMatrix.from_populations(model.space, p0), t)
        assert np.abs(rho.populations() - classical_evolve(K, p0, t)).max() < 1e-10


def test_jc_regimes():
    high, low = jc_cavity(quality=7e7), jc_cavity(quality=7e5)
    assert 2 * high.meta["omega_R"] > 100 * high.meta["kappa"]
    assert math.isclose(low.meta["kappa"], 2 * math.pi * 51.1e9 / 7e5 * 1e-6, rel_tol=1e-12)


def test_jc_vacuum_rabi_without_loss():
    model = jc_cavity(quality=1e30)
    wr = model.meta["omega_R"]
    rho0 = DensityMatrix.basis(model.space, "1")
    for t in np.linspace(0, 40, 9):
        assert abs(population(evolve(model, rho0, t), "1") - math.cos(wr * t / 2) ** 2) < 1e-9


def test_jc_excitation_number_never_increases():
    model = jc_cavity(quality=7e5)
    n_op = excitation_number(model)
    rho0 = DensityMatrix.basis(model.space, "1")
    values = [np.trace(n_op @ evolve(model, rho0, t).matrix).real for t in np.linspace(0, 30, 61)]
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


def test_wave_plates():
    assert np.allclose(half_wave_plate(0.0), np.diag([1, -1]))
    assert np.allclose(np.abs(half_wave_plate(math.pi / 8)), np.abs(HADAMARD))
    # a Hadamard up to a reflection: (Z - X) / sqrt(2)
    assert np.allclose(half_wave_plate(math.pi / 8), (PAULI_Z - PAULI_X) / math.sqrt(2))


@given(st.floats(-10, 10))
def test_quarter_wave_plate_unitary(theta):
    q = quarter_wave_plate(theta)
    assert np.abs(q @ q.conj().T - np.eye(2)).max() < 1e-12


@pytest.mark.parametrize("phi,theta,expected", [(0, 0, 0.0), (math.pi / 8, 0, 0.5), (math.pi / 8, math.pi / 4, 0.5)])
def test_photonic_reference_points(phi, theta, expected):
    numeric, closed = photonic_witness(phi, theta)
    assert abs(closed - expected) < 1e-12
    assert abs(numeric.value - expected) < 1e-12


@given(st.floats(0, math.pi / 4), st.floats(0, math.pi / 2))
def test_photonic_numeric_matches_closed_form(phi, theta):
    numeric, closed = photonic_witness(phi, theta)
    assert abs(numeric.value - closed) < 1e-10
    assert abs(photonic_witness_closed_form(phi, theta) - closed) == 0


def test_fmo_data_and_setup():
    data = load_fmo_data()
    h = np.array(data["hamiltonian_cm1"])
    assert h.shape == (7, 7) and np.allclose(h, h.T)
    setup = fmo_model()
    assert setup.config.bath.n_sites == 7
    assert setup.measured == 0 and setup.initial.populations()[0] == 1
    assert setup.config.Nc == 8 and setup.config.K == 0
    assert math.isclose(1 / setup.config.bath.gamma[0], 50.0)


def test_fmo_missing_data_file(tmp_path):
    with pytest.raises(ConfigurationError):
        fmo_model(data_path=tmp_path / "missing.json")


def test_fmo_decoupled_limit_is_unitary():
    from qwitness.heom import HeomSolver, heom_evolve

    setup = fmo_model(reorganization=(0.0, "cm-1"), Nc=1)
    solver = HeomSolver(setup.config)
    state = heom_evolve(solver.initial_state(setup.initial.matrix), solver, 100.0)
    closed = evolve_operator(fmo_closed_model(), setup.initial.matrix, 100.0)
    assert np.abs(state.rho - closed).max() < 1e-8


def test_presets_registry():
    assert list(PRESETS) == ["cpb", "transmon", "dqd", "fmo77", "fmo300", "jc-hiq", "jc-loq", "photonic"]
    for name, preset in PRESETS.items():
        built = build_preset(name)
        if preset.kind == "lindblad":
            h = built.hamiltonian
            assert np.abs(h - h.conj().T).max() < 1e-12
            assert all(r >= 0 for _, r in built.collapse)
            assert built.space.labels == preset.labels
    with pytest.raises(ConfigurationError):
        build_preset("nope")
