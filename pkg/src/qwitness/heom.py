"""Hierarchical equations of motion for independent Drude baths on each site.

Hierarchy members are stored as one ``(M + 1, d, d)`` complex array ordered by
tier, with the last slot permanently zero so that links to members beyond the
truncation tier can be gathered without branching.

Units: hbar = 1, energies as angular frequencies per internal time unit
(femtoseconds for the FMO presets).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numba
import numpy as np

from .numerics import rk4_step

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6
DEFAULT_MEMORY_LIMIT = 4 * 2 ** 30  # bytes


class HeomError(RuntimeError):
    pass


class ConditionalStateUndefined(HeomError):
    """Selective projection onto an outcome whose probability is ~0."""


@dataclass(frozen=True)
class DrudeBathSpec:
    """Per-site Drude bath in internal units.

    Parameters
    ----------
    reorganization : array_like
        lambda_j as angular frequency (lambda / hbar).
    gamma : array_like
        Drude decay constants gamma_j (inverse time).
    hbar_beta : float
        hbar / (k_B T) in internal time units.
    """

    reorganization: tuple
    gamma: tuple
    hbar_beta: float

    def __post_init__(self):
        lam = tuple(float(x) for x in np.atleast_1d(self.reorganization))
        gam = tuple(float(x) for x in np.atleast_1d(self.gamma))
        if len(gam) == 1 and len(lam) > 1:
            gam = gam * len(lam)
        if len(lam) != len(gam):
            raise ValueError("reorganization and gamma need one entry per site")
        object.__setattr__(self, "reorganization", lam)
        object.__setattr__(self, "gamma", gam)
        # lambda -> 0 is allowed as the decoupled limit
        if min(lam) < 0 or min(gam) <= 0 or self.hbar_beta <= 0:
            raise ValueError("bath parameters must be positive")

    @property
    def n_sites(self) -> int:
        return len(self.reorganization)


@dataclass(frozen=True)
class BathCoefficients:
    """Exponential expansion ``C_j(t) = sum_m c[j, m] exp(-mu[j, m] t)``.

    ``boundary[j]`` is the residual ``sum_{m > K} c[j, m] / mu[j, m]`` that
    enters the Ishizaki-Tanimura terminator.
    """

    c: np.ndarray
    mu: np.ndarray
    boundary: np.ndarray

    @property
    def K(self) -> int:
        return self.c.shape[1] - 1


def _cot(x: float) -> float:
    s = math.sin(x)
    if abs(s) < 1e-12 * max(1.0, abs(x)):
        raise ValueError(f"cot is singular at beta*hbar*gamma/2 = {x:.6g} (multiple of pi)")
    return math.cos(x) / s


def matsubara_residual(lam: float, gamma: float, hbar_beta: float) -> float:
    """Closed form of ``sum_{m>=1} c_m / mu_m`` for a Drude bath.

    Equals ``(2 lam / (hbar_beta * gamma)) * (1 - y cot y)`` with
    ``y = gamma * hbar_beta / 2``.
    """
    y = gamma * hbar_beta / 2
    return 2 * lam / (hbar_beta * gamma) * (1 - y * _cot(y))


def bath_coefficients(spec: DrudeBathSpec, K: int = 0) -> BathCoefficients:
    if K < 0:
        raise ValueError("K must be >= 0")
    n = spec.n_sites
    c = np.zeros((n, K + 1), dtype=np.complex128)
    mu = np.zeros((n, K + 1))
    boundary = np.zeros(n)
    hb = spec.hbar_beta
    for j, (lam, gam) in enumerate(zip(spec.reorganization, spec.gamma)):
        c[j, 0] = gam * lam * (_cot(hb * gam / 2) - 1j)
        mu[j, 0] = gam
        residual = matsubara_residual(lam, gam, hb)
        for m in range(1, K + 1):
            nu = 2 * math.pi * m / hb
            c[j, m] = 4 * lam * gam / hb * nu / (nu ** 2 - gam ** 2)
            mu[j, m] = nu
            residual -= c[j, m].real / nu
        boundary[j] = residual
    return BathCoefficients(c, mu, boundary)


@dataclass(frozen=True)
class HeomConfig:
    """System Hamiltonian, coupling sites and truncation.

    ``sites[j]`` is the basis index that bath ``j`` couples to through
    ``Q_j = |j><j|``.
    """

    hamiltonian: np.ndarray
    bath: DrudeBathSpec
    Nc: int = 8
    K: int = 0
    sites: tuple | None = None
    dt: float = 0.5
    memory_limit: int = DEFAULT_MEMORY_LIMIT

    def __post_init__(self):
        h = np.array(self.hamiltonian, dtype=np.complex128)
        h.setflags(write=False)
        object.__setattr__(self, "hamiltonian", h)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError("hamiltonian must be square")
        if np.max(np.abs(h - h.conj().T)) > 1e-12:
            raise ValueError("hamiltonian is not Hermitian")
        if self.Nc < 1 or self.K < 0:
            raise ValueError("need Nc >= 1 and K >= 0")
        sites = tuple(range(self.bath.n_sites)) if self.sites is None else tuple(int(s) for s in self.sites)
        if len(sites) != self.bath.n_sites:
            raise ValueError("one coupling site per bath")
        if len(set(sites)) != len(sites) or max(sites) >= h.shape[0]:
            raise ValueError("coupling sites must be distinct basis indices")
        object.__setattr__(self, "sites", sites)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]


@dataclass(frozen=True)
class Hierarchy:
    """Enumerated labels with precomputed neighbour tables.

    ``up[i, l]`` is the member with label ``n + e_l`` and ``down[i, l]`` the one
    with ``n - e_l``; both point at the zero slot ``size`` when the neighbour
    does not exist (beyond ``Nc`` or a negative entry).
    """

    labels: np.ndarray
    up: np.ndarray
    down: np.ndarray
    n_sites: int
    K: int
    Nc: int

    @property
    def size(self) -> int:
        return self.labels.shape[0]

    @property
    def n_modes(self) -> int:
        return self.labels.shape[1]

    def mode(self, j: int, m: int) -> int:
        return j * (self.K + 1) + m

    def tiers(self) -> np.ndarray:
        return self.labels.sum(axis=1)


def hierarchy_size(n_sites: int, K: int, Nc: int) -> int:
    return math.comb(n_sites * (K + 1) + Nc, Nc)


def build_hierarchy(d: int, n_sites: int, Nc: int, K: int = 0,
                    memory_limit: int = DEFAULT_MEMORY_LIMIT) -> Hierarchy:
    """Enumerate every label with tier <= Nc and link neighbours.

    Raises ``MemoryError`` if the state plus RK4 workspace would exceed
    ``memory_limit`` bytes.
    """
    L = n_sites * (K + 1)
    size = hierarchy_size(n_sites, K, Nc)
    # state, 4 stages, 2 temporaries
    required = 7 * (size + 1) * d * d * 16
    if required > memory_limit:
        raise MemoryError(
            f"hierarchy with {size} members of {d}x{d} needs ~{required / 2**20:.1f} MiB, "
            f"limit is {memory_limit / 2**20:.1f} MiB")
    labels = np.zeros((size, L), dtype=np.int64)
    i = 0
    for tier in range(Nc + 1):
        for combo in combinations_with_replacement(range(L), tier):
            for mode in combo:
                labels[i, mode] += 1
            i += 1
    assert i == size
    rank = {lab.tobytes(): k for k, lab in enumerate(labels)}
    up = np.full((size, L), size, dtype=np.int64)
    down = np.full((size, L), size, dtype=np.int64)
    for k, lab in enumerate(labels):
        for mode in range(L):
            lab[mode] += 1
            up[k, mode] = rank.get(lab.tobytes(), size)
            lab[mode] -= 2
            if lab[mode] >= 0:
                down[k, mode] = rank[lab.tobytes()]
            lab[mode] += 1
    labels.setflags(write=False)
    up.setflags(write=False)
    down.setflags(write=False)
    return Hierarchy(labels, up, down, n_sites, K, Nc)


@numba.njit(cache=True)
def _derivative_kernel(x, out, H, decay, mask, first, second, first_coef, second_coef, site, sign):
    """Forward (sign = 1) or adjoint (sign = -1) hierarchy derivative.

    Member ``i`` couples to ``first[i, l]`` with the real coefficient
    ``first_coef[i, l]`` and to ``second[i, l]`` with ``second_coef[i, l]``
    on the row side (its conjugate on the column side). The caller swaps the
    link tables and supplies adjoint coefficients for the backward run.
    """
    M, L = first.shape
    d = x.shape[1]
    ih = -1j * sign
    for i in range(M):
        g = decay[i]
        for a in range(d):
            for b in range(d):
                acc = 0j
                for k in range(d):
                    acc += H[a, k] * x[i, k, b] - x[i, a, k] * H[k, b]
                out[i, a, b] = ih * acc - (g + mask[a, b]) * x[i, a, b]
        for l in range(L):
            s = site[l]
            u = first[i, l]
            w = second[i, l]
            f = ih * first_coef[i, l]
            r = ih * second_coef[i, l]
            rc = ih * np.conj(second_coef[i, l])
            for b in range(d):
                out[i, s, b] += f * x[u, s, b] + r * x[w, s, b]
            for a in range(d):
                out[i, a, s] -= f * x[u, a, s] + rc * x[w, a, s]


@dataclass(frozen=True)
class HierarchyState:
    """Physical density matrix (member 0) plus auxiliary matrices at ``time``."""

    hierarchy: Hierarchy
    adms: np.ndarray
    time: float = 0.0

    @property
    def rho(self) -> np.ndarray:
        return self.adms[0]

    def populations(self) -> np.ndarray:
        return self.adms[0].diagonal().real.copy()


class HeomSolver:
    """Derivative, adjoint and fixed-step RK4 propagation for one configuration."""

    def __init__(self, config: HeomConfig, hierarchy: Hierarchy | None = None,
                 backend: str = "numba"):
        if backend not in ("numba", "numpy"):
            raise ValueError(f"unknown backend {backend!r}")
        self.backend = backend
        self.config = config
        self.coeffs = bath_coefficients(config.bath, config.K)
        self.hierarchy = hierarchy or build_hierarchy(config.dim, config.bath.n_sites, config.Nc,
                                                      config.K, config.memory_limit)
        h = self.hierarchy
        d = config.dim
        K1 = config.K + 1
        self.H = config.hamiltonian
        # modes are ordered (site j, matsubara m) -> j * K1 + m
        self.mode_site = np.repeat(np.asarray(config.sites), K1)
        self.mode_c = self.coeffs.c.reshape(-1)
        self.mode_mu = self.coeffs.mu.reshape(-1)
        self.decay = (h.labels * self.mode_mu).sum(axis=1)[:, None, None]
        # labels as multiplicative weights, padded with a zero row
        self.weights = np.vstack([h.labels, np.zeros((1, h.n_modes), dtype=np.int64)]).astype(float)
        delta = np.zeros(d)
        delta[list(config.sites)] = self.coeffs.boundary
        mask = delta[:, None] + delta[None, :]
        np.fill_diagonal(mask, 0.0)
        # sum_j delta_j [Q_j, [Q_j, X]] == mask * X elementwise
        self.boundary_mask = mask
        self._modes_by_m = [np.arange(m, h.n_modes, K1) for m in range(K1)]
        self._all_sites = tuple(config.sites) == tuple(range(d))
        # Members are stored rescaled by 1 / sqrt(prod_l n_l! s_l^n_l) with
        # s_l = |c_l|, which keeps forward and adjoint hierarchies of order one.
        # Raising then carries sqrt((n + 1) s) and lowering sqrt(n / s) c.
        scale = np.abs(self.mode_c)
        scale[scale == 0] = 1.0
        n = self.weights[: h.size]
        self._raise_fwd = np.ascontiguousarray(np.sqrt((n + 1) * scale))
        self._lower_fwd = np.ascontiguousarray(np.sqrt(n / scale) * self.mode_c)
        # adjoint: conjugated coefficient of the transposed link
        self._raise_adj = np.ascontiguousarray(np.sqrt(n * scale))
        self._lower_adj = np.ascontiguousarray(np.sqrt((n + 1) / scale) * self.mode_c.conj())
        self._H = np.ascontiguousarray(self.H)
        self._decay = np.ascontiguousarray(self.decay[:, 0, 0])
        self._site = np.ascontiguousarray(self.mode_site, dtype=np.int64)

    @property
    def size(self) -> int:
        return self.hierarchy.size

    def zeros(self) -> np.ndarray:
        return np.zeros((self.size + 1, self.config.dim, self.config.dim), dtype=np.complex128)

    def initial_state(self, rho0) -> HierarchyState:
        """Product state with the thermal bath: all auxiliaries zero."""
        x = self.zeros()
        x[0] = np.asarray(rho0, dtype=np.complex128)
        return HierarchyState(self.hierarchy, x, 0.0)

    def derivative(self, x: np.ndarray) -> np.ndarray:
        """Time derivative of the padded (rescaled) hierarchy array ``x``."""
        h = self.hierarchy
        return self._apply(x, 1.0, h.up, h.down, self._raise_fwd, self._lower_fwd)

    def adjoint_derivative(self, a: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`derivative` under ``<A, X> = sum conj(A) * X``."""
        h = self.hierarchy
        # raising and lowering links trade places
        return self._apply(a, -1.0, h.down, h.up, self._raise_adj, self._lower_adj)

    def _apply(self, x, sign, first, second, first_coef, second_coef):
        out = np.empty_like(x)
        M = self.hierarchy.size
        out[M] = 0
        if self.backend == "numba":
            _derivative_kernel(x, out, self._H, self._decay, self.boundary_mask, first, second,
                               first_coef, second_coef, self._site, sign)
            return out
        H = self.H
        xs = x[:M]
        o = out[:M]
        ih = -1j * sign
        np.matmul(H, xs, out=o)
        o -= xs @ H
        o *= ih
        o -= self.decay * xs
        o -= self.boundary_mask * xs
        for modes in self._modes_by_m:
            sites = self.mode_site[modes]
            f = first[:, modes]
            w = second[:, modes]
            fc = (ih * first_coef[:, modes])[:, :, None]
            rc = (ih * second_coef[:, modes])[:, :, None]
            cc = (ih * second_coef[:, modes].conj())[:, :, None]
            rows = fc * x[f, sites[None, :], :] + rc * x[w, sites[None, :], :]
            cols = -(fc * x[f, :, sites[None, :]] + cc * x[w, :, sites[None, :]])
            self._scatter(o, sites, rows, cols)
        return out

    def _scatter(self, o, sites, rows, cols):
        # rows[i, l] is added to row sites[l] of o[i], cols[i, l] to column sites[l]
        if self._all_sites:
            o += rows
            o += np.swapaxes(cols, 1, 2)
        else:
            o[:, sites, :] += rows
            o[:, :, sites] += np.swapaxes(cols, 1, 2)

    def _check(self, x: np.ndarray, t: float):
        big = np.abs(x).max(axis=(1, 2))
        if not np.all(np.isfinite(big)) or big.max() > DIVERGENCE_LIMIT:
            k = int(np.nanargmax(np.where(np.isfinite(big), big, np.inf)))
            tier = int(self.hierarchy.labels[min(k, self.size - 1)].sum())
            raise HeomError(f"hierarchy diverged at t = {t:.6g} (member {k}, tier {tier})")

    def _steps(self, duration: float, dt: float | None) -> tuple[int, float]:
        dt = self.config.dt if dt is None else dt
        if duration < 0:
            raise ValueError("duration must be nonnegative")
        if duration == 0:
            return 0, dt
        n = max(1, int(math.ceil(duration / dt - 1e-9)))
        return n, duration / n

    def evolve(self, state: HierarchyState, duration: float, dt: float | None = None,
               check_every: int = 50) -> HierarchyState:
        nsteps, h = self._steps(duration, dt)
        x = state.adms.copy()
        t = state.time
        f = lambda _t, y: self.derivative(y)
        for k in range(nsteps):
            x = rk4_step(f, t, x, h)
            t = state.time + (k + 1) * h
            if (k + 1) % check_every == 0:
                self._check(x, t)
        if nsteps:
            self._check(x, t)
        return HierarchyState(state.hierarchy, x, state.time + duration)

    def trajectory(self, state: HierarchyState, nsteps: int, dt: float | None = None,
                   keep_every: int = 1, keep_states: bool = False, state_steps=None):
        """Fixed-step run recording the physical matrix after every ``keep_every`` steps.

        Returns ``(times, rhos, diagonals)``. ``diagonals`` holds the diagonal
        of every hierarchy member, which is all the conditional propagators
        need; it is recorded at the kept steps when ``keep_states`` is set, or
        only at the step indices in ``state_steps`` (in that order) if given.
        """
        dt = self.config.dt if dt is None else dt
        x = state.adms.copy()
        f = lambda _t, y: self.derivative(y)
        wanted = None if state_steps is None else {int(k) for k in state_steps}
        times = [state.time]
        rhos = [x[0].copy()]
        diags = {}

        def record(k):
            if wanted is not None:
                if k in wanted:
                    diags[k] = np.einsum("kii->ki", x).copy()
            elif keep_states and k % keep_every == 0:
                diags[k] = np.einsum("kii->ki", x).copy()

        record(0)
        for k in range(1, nsteps + 1):
            x = rk4_step(f, 0.0, x, dt)
            if k % 50 == 0:
                self._check(x, state.time + k * dt)
            if k % keep_every == 0:
                times.append(state.time + k * dt)
                rhos.append(x[0].copy())
            record(k)
        if wanted is not None:
            out = np.array([diags[int(k)] for k in state_steps])
        elif keep_states:
            out = np.array([diags[k] for k in sorted(diags)])
        else:
            out = None
        return np.array(times), np.array(rhos), out

    def adjoint_trajectory(self, observable, nsteps: int, dt: float | None = None,
                           keep_every: int = 1, steps=None) -> np.ndarray:
        """Diagonals of ``exp(tau L)^dagger`` applied to ``observable`` on member 0.

        For a hierarchy ``Y``, ``tr(O Y_0(tau)) = sum conj(A(tau)) * Y``; only
        the diagonals are kept since every conditional initial state used here
        is diagonal in the site basis. ``steps`` restricts the output to the
        given step indices.
        """
        dt = self.config.dt if dt is None else dt
        a = self.zeros()
        a[0] = np.asarray(observable, dtype=np.complex128).conj().T
        f = lambda _t, y: self.adjoint_derivative(y)
        wanted = None if steps is None else {int(k) for k in steps}
        kept = {}

        def record(k):
            if (wanted is None and k % keep_every == 0) or (wanted is not None and k in wanted):
                kept[k] = np.einsum("kii->ki", a).copy()

        record(0)
        for k in range(1, nsteps + 1):
            a = rk4_step(f, 0.0, a, dt)
            if k % 50 == 0:
                self._check(a, k * dt)
            record(k)
        order = sorted(kept) if steps is None else [int(k) for k in steps]
        return np.array([kept[k] for k in order])


def heom_derivative(state: HierarchyState, solver: HeomSolver) -> np.ndarray:
    return solver.derivative(state.adms)


def heom_evolve(state: HierarchyState, solver: HeomSolver, duration: float,
                dt: float | None = None) -> HierarchyState:
    return solver.evolve(state, duration, dt)


def heom_dephase(state: HierarchyState, outcome: int | None = None, threshold: float = 1e-10,
                 include_auxiliaries: bool = False) -> HierarchyState:
    """Measurement at the current time.

    Without ``outcome`` the coherences of the physical matrix are dropped
    (and of every auxiliary matrix too if ``include_auxiliaries``). With an
    ``outcome`` n every member is replaced by ``Q_n X Q_n / p_n`` so the
    bath correlations conditioned on the result are carried forward.
    """
    x = state.adms.copy()
    if outcome is None:
        idx = np.arange(x.shape[1])
        targets = x if include_auxiliaries else x[:1]
        diag = targets[:, idx, idx].copy()
        targets[:] = 0
        targets[:, idx, idx] = diag
        return HierarchyState(state.hierarchy, x, state.time)
    p = x[0, outcome, outcome].real
    if p <= threshold:
        raise ConditionalStateUndefined(
            f"p_{outcome}(t0) = {p:.3g} is below {threshold:.1e}; conditional state undefined")
    out = np.zeros_like(x)
    out[:, outcome, outcome] = x[:, outcome, outcome] / p
    return HierarchyState(state.hierarchy, out, state.time)


def heom_propagator(state: HierarchyState, solver: HeomSolver, n: int, m: int, tau: float,
                    dt: float | None = None) -> float:
    """Omega_mn(t0 + tau, t0) with the bath state retained at t0."""
    cond = heom_dephase(state, outcome=n)
    if tau == 0:
        return float(m == n)
    later = solver.evolve(cond, tau, dt)
    return float(later.adms[0, m, m].real)


@dataclass
class WitnessSweep:
    """Output of :func:`wq_sweep` on a regular (t0, tau) grid.

    ``omega[i, k, n]`` is Omega_mn(t0_i + tau_k, t0_i); ``expectation[i, k]``
    is <Q_m(t0_i + tau_k)> and ``populations[i]`` is p(t0_i).
    """

    m: int
    t0: np.ndarray
    tau: np.ndarray
    populations: np.ndarray
    expectation: np.ndarray
    omega: np.ndarray
    meta: dict = field(default_factory=dict)


def wq_sweep(solver: HeomSolver, rho0, m: int, t0_steps, tau_steps, dt: float | None = None,
             threshold: float = 1e-10) -> WitnessSweep:
    """Everything Witness 1 needs on a grid of step indices.

    One forward run provides p(t0), <Q_m(t)> and the hierarchy diagonals at
    each t0; one adjoint run from ``Q_m`` provides the dual hierarchy at each
    tau. Conditional propagators follow by inner products.
    """
    dt = solver.config.dt if dt is None else dt
    t0_steps = np.asarray(t0_steps, dtype=int)
    tau_steps = np.asarray(tau_steps, dtype=int)
    nfwd = int(t0_steps.max() + tau_steps.max())
    state = solver.initial_state(rho0)
    log.info("forward HEOM run: %d steps, %d members", nfwd, solver.size)
    times, rhos, diags = solver.trajectory(state, nfwd, dt, state_steps=t0_steps)
    d = solver.config.dim
    obs = np.zeros((d, d))
    obs[m, m] = 1
    log.info("adjoint HEOM run: %d steps", int(tau_steps.max()))
    adj = solver.adjoint_trajectory(obs, int(tau_steps.max()), dt, steps=tau_steps)
    pops = rhos.diagonal(axis1=1, axis2=2).real
    p0 = pops[t0_steps]  # (nt0, d)
    expectation = pops[t0_steps[:, None] + tau_steps[None, :], m]
    # <A(tau), P_n Y(t0) P_n> / p_n
    raw = np.einsum("kjn,ijn->ikn", adj.conj(), diags)
    with np.errstate(divide="ignore", invalid="ignore"):
        omega = np.where(p0[:, None, :] > threshold, raw.real / p0[:, None, :], np.nan)
    return WitnessSweep(m, t0_steps * dt, tau_steps * dt, p0, expectation, omega,
                        meta={"dt": dt, "Nc": solver.config.Nc, "K": solver.config.K,
                              "members": solver.size})
