"""Example systems: charge qubit, transmon gate, double dot, cavity QED,
light-harvesting complex and polarization optics.

Every constructor takes physical parameters with units and returns a model
in internal units (hbar = 1, angular frequencies per model time unit).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from .heom import DrudeBathSpec, HeomConfig
from .quantum import DensityMatrix, HilbertSpace, LindbladModel
from .units import UnitSystem, quantity
from .witnesses import DEFAULT_THRESHOLD, WitnessResult, witness_wq

PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=np.complex128) / math.sqrt(2)

CPB_UNITS = UnitSystem("cooper-pair-box", "ps")
JC_UNITS = UnitSystem("cavity", "us")
DQD_UNITS = UnitSystem("double-dot", "")
FMO_UNITS = UnitSystem("fmo", "fs")


class ConfigurationError(ValueError):
    """A model cannot be built from the given parameters or data files."""


def _value(x, system: UnitSystem, kind: str, default_unit: str) -> float:
    v, unit = quantity(x, default_unit)
    unit = unit or default_unit
    return system.frequency(v, unit) if kind == "frequency" else system.time(v, unit)


# -- Cooper-pair box -------------------------------------------------------

def cooper_pair_box(E_J=(51.8, "ueV"), E_C=(117.0, "ueV"), n_g: float = 0.5) -> LindbladModel:
    """Two charge states coupled by Josephson tunnelling, no dissipation.

    ``H = E_C (1 - 2 n_g) / 2 (|2><2| - |1><1|) - E_J / 2 (|1><2| + |2><1|)``
    in rad/ps. At ``n_g = 0.5`` the charging term vanishes and ``E_C`` has
    no effect.
    """
    ej = _value(E_J, CPB_UNITS, "frequency", "ueV")
    ec = _value(E_C, CPB_UNITS, "frequency", "ueV")
    if ej <= 0:
        raise ValueError("E_J must be positive")
    space = HilbertSpace.numbered(2)
    bias = ec * (1 - 2 * n_g) / 2
    h = np.array([[-bias, -ej / 2], [-ej / 2, bias]], dtype=np.complex128)
    return LindbladModel(space, h, (), name="cpb",
                         meta={"E_J": ej, "E_C": ec, "n_g": n_g, "time_unit": "ps"})


def rabi_period(model: LindbladModel) -> float:
    """``2 pi / E_J`` for the Cooper-pair box, in its time unit."""
    return 2 * math.pi / model.meta["E_J"]


# -- transmon gate ---------------------------------------------------------

@dataclass(frozen=True)
class ProcessMap:
    """Completely positive trace-preserving map in Kraus form."""

    kraus: tuple

    def __post_init__(self):
        ops = tuple(np.array(k, dtype=np.complex128) for k in self.kraus)
        if not ops:
            raise ValueError("a process needs at least one Kraus operator")
        d = ops[0].shape[0]
        if any(k.shape != (d, d) for k in ops):
            raise ValueError("Kraus operators must be square and of equal size")
        total = sum(k.conj().T @ k for k in ops)
        if np.max(np.abs(total - np.eye(d))) > 1e-10:
            raise ValueError("Kraus operators are not trace preserving")
        object.__setattr__(self, "kraus", ops)

    @property
    def dim(self) -> int:
        return self.kraus[0].shape[0]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return sum(k @ rho @ k.conj().T for k in self.kraus)

    def then(self, other: "ProcessMap") -> "ProcessMap":
        """``other`` applied after ``self``."""
        return ProcessMap(tuple(b @ a for b in other.kraus for a in self.kraus))

    def fidelity(self, unitary: np.ndarray) -> float:
        """Process fidelity with a target unitary, ``sum |tr(U^dag K)|^2 / d^2``."""
        u = np.asarray(unitary)
        return float(sum(abs(np.trace(u.conj().T @ k)) ** 2 for k in self.kraus) / self.dim ** 2)


def hadamard_process(fidelity: float = 1.0) -> ProcessMap:
    """Hadamard followed by depolarizing noise with the requested process fidelity.

    The channel ``rho -> (1 - q) rho + q I / 2`` has process fidelity
    ``1 - 3 q / 4`` with the identity, so ``q = 4 (1 - F) / 3``.
    """
    if not 0.25 <= fidelity <= 1:
        raise ValueError("process fidelity of a depolarized unitary lies in [1/4, 1]")
    q = 4 * (1 - fidelity) / 3
    ops = [math.sqrt(1 - 3 * q / 4) * HADAMARD]
    ops += [math.sqrt(q / 4) * p @ HADAMARD for p in (PAULI_X, PAULI_Y, PAULI_Z)]
    return ProcessMap(tuple(ops))


def identity_process(d: int = 2) -> ProcessMap:
    return ProcessMap((np.eye(d),))


def transmon_hadamard_witness(process: ProcessMap, threshold: float = DEFAULT_THRESHOLD) -> WitnessResult:
    """Gate-sequence form of the population witness for a qubit starting in |0>.

    One application gives ``p_n`` and the propagator column ``Omega_0n`` (from
    basis-state inputs); two applications give ``<0>`` after the second gate.
    """
    if process.dim != 2:
        raise ValueError("the transmon witness needs a qubit process")
    zero = np.diag([1.0, 0.0]).astype(np.complex128)
    once = process.apply(zero)
    twice = process.apply(once)
    p = once.diagonal().real
    omega0 = np.array([process.apply(np.diag(np.eye(2)[n]).astype(np.complex128))[0, 0].real
                       for n in range(2)])
    return witness_wq(twice[0, 0].real, p, omega0, threshold, m=0)


# -- double quantum dot ----------------------------------------------------

def double_quantum_dot(tunnelling: float = 1.0, rate_in: float = 4.0, rate_out: float = 0.1) -> LindbladModel:
    """Single electron crossing two dots between leads at large bias.

    Basis labels 1, 2, 3 are empty, left-occupied and right-occupied.
    ``H = Delta (|L><R| + |R><L|)``; an electron enters the left dot from the
    source at ``rate_in`` and leaves the right dot to the drain at
    ``rate_out``. Parameters are in one arbitrary common unit.
    """
    if rate_in < 0 or rate_out < 0:
        raise ValueError("rates must be nonnegative")
    space = HilbertSpace.numbered(3)
    empty, left, right = 0, 1, 2
    h = np.zeros((3, 3), dtype=np.complex128)
    h[left, right] = h[right, left] = tunnelling
    fill = np.zeros((3, 3))
    fill[left, empty] = 1
    drain = np.zeros((3, 3))
    drain[empty, right] = 1
    return LindbladModel(space, h, ((fill, rate_in), (drain, rate_out)), name="dqd",
                         meta={"Delta": tunnelling, "Gamma_L": rate_in, "Gamma_R": rate_out,
                               "time_unit": ""})


# -- cavity QED ------------------------------------------------------------

def jc_cavity(omega_R=(47.0, "kHz"), omega_0=(51.1, "GHz"), quality: float = 7e7) -> LindbladModel:
    """Atom-cavity vacuum Rabi oscillation in the one-excitation subspace.

    Labels 1, 2, 3 are ``|e,0>``, ``|g,1>`` and ``|g,0>``; photons leak out
    of the cavity at ``kappa = omega_0 / Q``. Time unit: microseconds.
    """
    if quality <= 0:
        raise ValueError("quality factor must be positive")
    wr = _value(omega_R, JC_UNITS, "frequency", "kHz")
    w0 = _value(omega_0, JC_UNITS, "frequency", "GHz")
    kappa = w0 / quality
    space = HilbertSpace.numbered(3)
    h = np.zeros((3, 3), dtype=np.complex128)
    h[0, 1] = h[1, 0] = wr / 2
    loss = np.zeros((3, 3))
    loss[2, 1] = 1
    return LindbladModel(space, h, ((loss, kappa),), name="jc",
                         meta={"omega_R": wr, "omega_0": w0, "Q": quality, "kappa": kappa,
                               "time_unit": "us"})


def excitation_number(model: LindbladModel) -> np.ndarray:
    """Total excitation operator for the truncated cavity model."""
    return np.diag([1.0, 1.0, 0.0]).astype(np.complex128)


# -- polarization optics ---------------------------------------------------

def _check_unitary(u: np.ndarray) -> np.ndarray:
    if np.max(np.abs(u @ u.conj().T - np.eye(u.shape[0]))) > 1e-12:
        raise ArithmeticError("wave plate matrix lost unitarity")
    return u


def half_wave_plate(angle: float) -> np.ndarray:
    """Half-wave plate at ``angle`` in the (H, V) basis."""
    c, s = math.cos(2 * angle), math.sin(2 * angle)
    return _check_unitary(np.array([[c, -s], [-s, -c]], dtype=np.complex128))


def quarter_wave_plate(angle: float) -> np.ndarray:
    """Quarter-wave plate at ``angle`` in the (H, V) basis."""
    c, s = math.cos(2 * angle), math.sin(2 * angle)
    return _check_unitary(np.array([[1j - c, s], [s, 1j + c]], dtype=np.complex128) / math.sqrt(2))


def compose_rotation(hwp_angle: float, qwp_angle: float) -> np.ndarray:
    """Half-wave plate followed by a quarter-wave plate."""
    return quarter_wave_plate(qwp_angle) @ half_wave_plate(hwp_angle)


def photonic_witness_closed_form(hwp_angle, qwp_angle):
    """Closed-form witness for the rotation-prepared state; broadcasts over arrays."""
    p, t = np.asarray(hwp_angle, dtype=float), np.asarray(qwp_angle, dtype=float)
    bracket = (10 + 2 * np.cos(4 * t) + 2 * np.cos(4 * t - 8 * p)
               + np.cos(8 * t - 8 * p) + np.cos(8 * p))
    return np.abs(1 - bracket / 16)


def photonic_witness(hwp_angle: float, qwp_angle: float, measured: int = 0,
                     threshold: float = DEFAULT_THRESHOLD) -> tuple[WitnessResult, float]:
    """Population witness with wave-plate settings in place of times.

    The input is ``R^dag |m><m| R``, so after the rotation the detector sees
    ``m`` with certainty, while the classical estimate chains the
    populations of the input through ``|<m|R|n>|^2``. Returns the numeric
    result and the closed-form value.
    """
    space = HilbertSpace(("H", "V"))
    r = compose_rotation(hwp_angle, qwp_angle)
    proj = space.projector(space.labels[measured])
    rho0 = DensityMatrix(space, r.conj().T @ proj @ r)
    after = r @ rho0.matrix @ r.conj().T
    expectation = after[measured, measured].real
    omega_column = np.abs(r[measured, :]) ** 2
    result = witness_wq(expectation, rho0.populations(), omega_column, threshold,
                        m=space.labels[measured], t0=hwp_angle, tau=qwp_angle)
    return result, float(photonic_witness_closed_form(hwp_angle, qwp_angle))


# -- light-harvesting complex ---------------------------------------------

FMO_DATA = "fmo_seven_site.json"


def load_fmo_data(path: str | Path | None = None) -> dict:
    """Site energies and couplings (cm^-1) plus bath defaults."""
    try:
        if path is None:
            text = resources.files("qwitness.data").joinpath(FMO_DATA).read_text()
        else:
            text = Path(path).read_text()
    except (FileNotFoundError, ModuleNotFoundError) as exc:
        raise ConfigurationError(f"FMO Hamiltonian data not found: {exc}") from exc
    data = json.loads(text)
    h = np.array(data["hamiltonian_cm1"], dtype=float)
    if h.shape != (data["sites"],) * 2:
        raise ConfigurationError("FMO Hamiltonian shape does not match the site count")
    return data


@dataclass(frozen=True)
class FmoSetup:
    """HEOM configuration plus the chosen initial state and measured site."""

    config: HeomConfig
    space: HilbertSpace
    initial: DensityMatrix
    measured: int
    meta: dict = field(default_factory=dict)


def fmo_model(temperature=(77.0, "K"), reorganization=(35.0, "cm-1"), bath_time=(50.0, "fs"),
              Nc: int = 8, K: int = 0, initial_site: int = 1, measured_site: int = 1,
              dt=(0.5, "fs"), data_path: str | Path | None = None) -> FmoSetup:
    """Seven-pigment excitation transfer with one Drude bath per site.

    Time unit: femtoseconds. The mean site energy is removed from the
    Hamiltonian, which changes no population but keeps the fixed-step
    integrator accurate.
    """
    data = load_fmo_data(data_path)
    temp, _ = quantity(temperature, "K")
    lam = _value(reorganization, FMO_UNITS, "frequency", "cm-1")
    tb = _value(bath_time, FMO_UNITS, "time", "fs")
    step = _value(dt, FMO_UNITS, "time", "fs")
    if temp <= 0 or tb <= 0 or lam < 0 or step <= 0:
        raise ValueError("FMO parameters must be positive")
    n = data["sites"]
    h_cm = np.array(data["hamiltonian_cm1"], dtype=float)
    h_cm -= np.eye(n) * np.trace(h_cm) / n
    h = FMO_UNITS.frequency(1.0, "cm-1") * h_cm
    space = HilbertSpace.numbered(n)
    bath = DrudeBathSpec((lam,) * n, (1.0 / tb,) * n, FMO_UNITS.hbar_beta(temp))
    config = HeomConfig(h, bath, Nc=Nc, K=K, dt=step)
    return FmoSetup(config, space, DensityMatrix.basis(space, initial_site), space.index(measured_site),
                    meta={"temperature_K": temp, "lambda_cm1": quantity(reorganization, "cm-1")[0],
                          "gamma_inv_fs": tb, "Nc": Nc, "K": K, "dt_fs": step, "time_unit": "fs"})


def fmo_closed_model(data_path: str | Path | None = None) -> LindbladModel:
    """The seven sites without any bath, for the decoupled limit."""
    data = load_fmo_data(data_path)
    n = data["sites"]
    h_cm = np.array(data["hamiltonian_cm1"], dtype=float)
    h_cm -= np.eye(n) * np.trace(h_cm) / n
    return LindbladModel(HilbertSpace.numbered(n), FMO_UNITS.frequency(1.0, "cm-1") * h_cm,
                         name="fmo-closed", meta={"time_unit": "fs"})


# -- preset registry -------------------------------------------------------

@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    kind: str  # "lindblad", "heom", "process" or "photonic"
    build: Callable[..., object]
    parameters: dict = field(default_factory=dict)
    labels: tuple = ("1", "2")
    units: UnitSystem = DQD_UNITS


PRESETS: dict[str, Preset] = {p.name: p for p in (
    Preset("cpb", "Cooper-pair box at charge degeneracy, E_J = 51.8 ueV (closed two-level)",
           "lindblad", cooper_pair_box,
           {"E_J": {"value": 51.8, "unit": "ueV"}, "E_C": {"value": 117.0, "unit": "ueV"}, "n_g": 0.5},
           ("1", "2"), CPB_UNITS),
    Preset("transmon", "Depolarized Hadamard gate on a transmon, 94% process fidelity",
           "process", hadamard_process, {"fidelity": 0.94}, ("0", "1")),
    Preset("dqd", "Double quantum dot between leads, Gamma_L = 4, Gamma_R = 0.1, Delta = 1",
           "lindblad", double_quantum_dot, {"tunnelling": 1.0, "rate_in": 4.0, "rate_out": 0.1},
           ("1", "2", "3"), DQD_UNITS),
    Preset("fmo77", "Seven-site FMO complex, HEOM at 77 K (Nc = 8, K = 0)", "heom", fmo_model,
           {"temperature": {"value": 77.0, "unit": "K"}}, tuple("1234567"), FMO_UNITS),
    Preset("fmo300", "Seven-site FMO complex, HEOM at 300 K (Nc = 8, K = 0)", "heom", fmo_model,
           {"temperature": {"value": 300.0, "unit": "K"}}, tuple("1234567"), FMO_UNITS),
    Preset("jc-hiq", "Atom in a cavity with Q = 7e7 (underdamped vacuum Rabi)", "lindblad", jc_cavity,
           {"omega_R": {"value": 47.0, "unit": "kHz"}, "omega_0": {"value": 51.1, "unit": "GHz"},
            "quality": 7e7}, ("1", "2", "3"), JC_UNITS),
    Preset("jc-loq", "Atom in a cavity with Q = 7e5 (lossy cavity)", "lindblad", jc_cavity,
           {"omega_R": {"value": 47.0, "unit": "kHz"}, "omega_0": {"value": 51.1, "unit": "GHz"},
            "quality": 7e5}, ("1", "2", "3"), JC_UNITS),
    Preset("photonic", "Polarization qubit rotated by a half- and a quarter-wave plate",
           "photonic", compose_rotation, {}, ("H", "V")),
)}


def build_preset(name: str, overrides: dict | None = None):
    """Instantiate a preset, with ``overrides`` replacing default parameters."""
    try:
        preset = PRESETS[name]
    except KeyError:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    params = dict(preset.parameters)
    params.update(overrides or {})
    if preset.kind == "photonic":
        return None
    try:
        return preset.build(**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for preset {name!r}: {exc}") from exc
