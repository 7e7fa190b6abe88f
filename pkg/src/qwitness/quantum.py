"""Finite-dimensional states, Lindblad evolution and two-time correlators.

Conventions: hbar = 1, Hamiltonians in angular-frequency units, density
matrices stored row-major so that ``vec(A X B) = kron(A, B.T) @ vec(X)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg

from .numerics import OdeProblem, as_matrix, expm, integrate

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-9
POSITIVITY_TOL = -1e-8


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.complex128)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class HilbertSpace:
    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(s) for s in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise ValueError("a Hilbert space needs at least two basis states")
        if len(set(labels)) != len(labels):
            raise ValueError(f"basis labels must be unique: {labels}")

    @classmethod
    def numbered(cls, d: int, start: int = 1) -> "HilbertSpace":
        return cls(tuple(str(i) for i in range(start, start + d)))

    @property
    def dim(self) -> int:
        return len(self.labels)

    def index(self, label) -> int:
        """Position of a basis state given by its label."""
        key = str(label)
        try:
            return self.labels.index(key)
        except ValueError:
            raise IndexError(f"no basis state {label!r} in {self.labels}") from None

    def ket(self, label) -> np.ndarray:
        v = np.zeros(self.dim, dtype=np.complex128)
        v[self.index(label)] = 1
        return v

    def projector(self, label) -> np.ndarray:
        q = np.zeros((self.dim, self.dim), dtype=np.complex128)
        i = self.index(label)
        q[i, i] = 1
        return q


@dataclass(frozen=True)
class DensityMatrix:
    space: HilbertSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = _frozen(as_matrix(self.matrix, "density matrix"))
        object.__setattr__(self, "matrix", m)
        d = self.space.dim
        if m.shape != (d, d):
            raise ValueError(f"density matrix shape {m.shape} does not match dimension {d}")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1) > TRACE_TOL:
            raise ValueError(f"density matrix trace {np.trace(m).real:.12g} != 1")
        if np.linalg.eigvalsh((m + m.conj().T) / 2).min() < POSITIVITY_TOL:
            raise ValueError("density matrix is not positive semidefinite")

    @classmethod
    def basis(cls, space: HilbertSpace, label) -> "DensityMatrix":
        return cls(space, space.projector(label))

    @classmethod
    def pure(cls, space: HilbertSpace, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=np.complex128)
        psi = psi / np.linalg.norm(psi)
        return cls(space, np.outer(psi, psi.conj()))

    @classmethod
    def maximally_mixed(cls, space: HilbertSpace) -> "DensityMatrix":
        return cls(space, np.eye(space.dim) / space.dim)

    @classmethod
    def from_populations(cls, space: HilbertSpace, p) -> "DensityMatrix":
        return cls(space, np.diag(np.asarray(p, dtype=float)))

    def populations(self) -> np.ndarray:
        return np.clip(self.matrix.diagonal().real, 0.0, 1.0)


@dataclass(frozen=True)
class LindbladModel:
    """Hamiltonian plus weighted collapse operators.

    ``collapse`` is a sequence of ``(operator, rate)`` pairs; each contributes
    ``rate * (L rho L^+ - {L^+ L, rho} / 2)``.
    """

    space: HilbertSpace
    hamiltonian: np.ndarray
    collapse: tuple = ()
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        d = self.space.dim
        h = _frozen(as_matrix(self.hamiltonian, "hamiltonian"))
        if h.shape != (d, d):
            raise ValueError(f"hamiltonian shape {h.shape} does not match dimension {d}")
        if np.max(np.abs(h - h.conj().T)) > 1e-12:
            raise ValueError("hamiltonian is not Hermitian")
        terms = []
        for op, rate in self.collapse:
            op = _frozen(as_matrix(op, "collapse operator"))
            if op.shape != (d, d):
                raise ValueError("collapse operator has wrong shape")
            rate = float(rate)
            if rate < 0:
                raise ValueError(f"collapse rate must be nonnegative, got {rate}")
            terms.append((op, rate))
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "collapse", tuple(terms))

    @property
    def dim(self) -> int:
        return self.space.dim

    @cached_property
    def liouvillian(self) -> np.ndarray:
        """Superoperator acting on row-major ``vec(rho)``."""
        d = self.dim
        eye = np.eye(d)
        h = self.hamiltonian
        sup = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
        for op, rate in self.collapse:
            if rate == 0:
                continue
            ld = op.conj().T @ op
            sup += rate * (np.kron(op, op.conj()) - 0.5 * np.kron(ld, eye) - 0.5 * np.kron(eye, ld.T))
        sup.setflags(write=False)
        return sup

    def rhs(self, rho: np.ndarray) -> np.ndarray:
        """Right-hand side of the master equation for a matrix ``rho``."""
        h = self.hamiltonian
        out = -1j * (h @ rho - rho @ h)
        for op, rate in self.collapse:
            ld = op.conj().T @ op
            out += rate * (op @ rho @ op.conj().T - 0.5 * (ld @ rho + rho @ ld))
        return out

    def superpropagator(self, duration: float) -> np.ndarray:
        return expm(self.liouvillian * duration)


@dataclass(frozen=True)
class Propagator:
    """Column-stochastic matrix ``omega[m, n]`` = P(m at t0 + tau | n at t0)."""

    space: HilbertSpace
    tau: float
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if m.shape != (self.space.dim,) * 2:
            raise ValueError("propagator shape does not match the space")
        if m.min() < -1e-8 or m.max() > 1 + 1e-8:
            raise ValueError("propagator entries outside [0, 1]")
        if np.max(np.abs(m.sum(axis=0) - 1)) > 1e-8:
            raise ValueError("propagator columns do not sum to one")

    def __getitem__(self, mn):
        return self.matrix[mn]


def evolve_operator(model: LindbladModel, x, duration: float, method: str = "expm",
                    rtol: float = 1e-10, atol: float = 1e-13) -> np.ndarray:
    """Apply the Lindblad flow for ``duration`` to an arbitrary matrix.

    Works for non-Hermitian inputs too, which the regression procedure needs.
    """
    x = np.asarray(x, dtype=np.complex128)
    if duration < 0:
        raise ValueError("duration must be nonnegative")
    if duration == 0:
        return x.copy()
    d = model.dim
    if method == "expm":
        return (model.superpropagator(duration) @ x.reshape(-1)).reshape(d, d)
    if method == "rk45":
        problem = OdeProblem(lambda t, y: model.rhs(y), x, 0.0, float(duration), rtol=rtol, atol=atol)
        return integrate(problem, "rk45")
    raise ValueError(f"unknown method {method!r}")


def evolve(model: LindbladModel, rho: DensityMatrix, duration: float, method: str = "expm",
           **kwargs) -> DensityMatrix:
    out = evolve_operator(model, rho.matrix, duration, method=method, **kwargs)
    # remove the anti-Hermitian part left by round-off
    return DensityMatrix(rho.space, (out + out.conj().T) / 2)


def population(rho: DensityMatrix, n) -> float:
    i = rho.space.index(n) if not isinstance(n, (int, np.integer)) else int(n)
    if not 0 <= i < rho.space.dim:
        raise IndexError(f"state index {n} out of range")
    p = float(rho.matrix[i, i].real)
    if p < -1e-10 or p > 1 + 1e-10:
        raise ValueError(f"population {p} outside [0, 1]")
    return min(max(p, 0.0), 1.0)


def dephase(rho: DensityMatrix) -> DensityMatrix:
    """Non-selective measurement in the basis: drop every off-diagonal entry."""
    return DensityMatrix(rho.space, np.diag(rho.matrix.diagonal()))


def propagator_markov(model: LindbladModel, tau: float) -> Propagator:
    """Prepare each basis state, evolve for ``tau`` and read populations."""
    d = model.dim
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    sup = np.eye(d * d) if tau == 0 else model.superpropagator(tau)
    # column n of Omega is diag(evolve(|n><n|)); pick the relevant rows/cols
    diag_idx = np.arange(d) * (d + 1)
    omega = sup[np.ix_(diag_idx, diag_idx)].real
    return Propagator(model.space, float(tau), np.clip(omega, 0.0, 1.0))


def two_time_correlator(model: LindbladModel, rho0: DensityMatrix, m, n, t0: float, t: float) -> complex:
    """``<Q_m(t) Q_n(t0)>`` via the quantum regression procedure."""
    if not t >= t0 >= 0:
        raise ValueError("need t >= t0 >= 0")
    sp = model.space
    rho_t0 = evolve_operator(model, rho0.matrix, t0)
    x = rho_t0 @ sp.projector(n)
    x = evolve_operator(model, x, t - t0)
    return complex(np.trace(sp.projector(m) @ x))


def stationary_state(model: LindbladModel) -> DensityMatrix:
    """Null vector of the Liouvillian, normalised to unit trace."""
    d = model.dim
    ns = scipy.linalg.null_space(model.liouvillian, rcond=1e-10)
    if ns.shape[1] != 1:
        raise ValueError(f"stationary state is not unique (null space dimension {ns.shape[1]})")
    rho = ns[:, 0].reshape(d, d)
    rho = rho / np.trace(rho)
    return DensityMatrix(model.space, (rho + rho.conj().T) / 2)


def settling_time(model: LindbladModel, rho0: DensityMatrix, tolerance: float,
                  step: float | None = None, horizon: float | None = None) -> float:
    """Earliest sampled time after which ``max|rho(t) - rho_ss|`` stays below ``tolerance``.

    The state is sampled every ``step`` up to ``horizon``; both default to
    multiples of the slowest relaxation time of the Liouvillian.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    target = stationary_state(model).matrix
    rates = -np.linalg.eigvals(model.liouvillian).real
    slow = rates[rates > 1e-10 * max(1.0, rates.max())]
    if slow.size == 0:
        raise ValueError("the model does not relax to a stationary state")
    slowest = 1.0 / slow.min()
    fastest = 1.0 / rates.max()
    horizon = horizon or slowest * (np.log(1.0 / tolerance) + 20.0)
    step = step or min(fastest, slowest / 20.0)
    one = model.superpropagator(step)
    x = rho0.matrix.reshape(-1)
    settled = 0.0
    n = int(np.ceil(horizon / step))
    for k in range(1, n + 1):
        if np.abs(x.reshape(target.shape) - target).max() >= tolerance:
            settled = k * step
        x = one @ x
    if np.abs(x.reshape(target.shape) - target).max() >= tolerance:
        raise ValueError(f"state is not within {tolerance:g} of stationarity by t = {horizon:g}")
    return settled
