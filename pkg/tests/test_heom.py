import itertools
import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from qwitness.heom import (BathCoefficients, ConditionalStateUndefined, DrudeBathSpec, HeomConfig,
                           HeomError, HeomSolver, bath_coefficients, build_hierarchy,
                           heom_dephase, heom_derivative, heom_evolve, heom_propagator,
                           hierarchy_size, matsubara_residual, wq_sweep)
from qwitness.quantum import HilbertSpace, LindbladModel, evolve_operator


def dimer_config(lam=0.3, gamma=1.0, hbar_beta=0.8, Nc=4, K=0, sites=None, coupling=0.5):
    h = np.array([[0.4, coupling], [coupling, -0.4]])
    n_sites = 2 if sites is None else len(sites)
    bath = DrudeBathSpec((lam,) * n_sites, (gamma,), hbar_beta)
    return HeomConfig(h, bath, Nc=Nc, K=K, sites=sites, dt=0.01)


def dense_generator(config):
    """Unscaled hierarchy generator written out member by member."""
    coeffs = bath_coefficients(config.bath, config.K)
    d = config.dim
    modes = [(j, m) for j in range(config.bath.n_sites) for m in range(config.K + 1)]
    labels = [n for n in itertools.product(range(config.Nc + 1), repeat=len(modes)) if sum(n) <= config.Nc]
    index = {n: i for i, n in enumerate(labels)}
    size = len(labels) * d * d
    gen = np.zeros((size, size), dtype=complex)
    eye = np.eye(d)

    def left(a):
        return np.kron(a, eye)

    def right(a):
        return np.kron(eye, a.T)

    H = config.hamiltonian
    Q = []
    for s in config.sites:
        q = np.zeros((d, d))
        q[s, s] = 1
        Q.append(q)
    for n, i in index.items():
        blk = slice(i * d * d, (i + 1) * d * d)
        diag = -1j * (left(H) - right(H))
        diag -= sum(n[k] * coeffs.mu[j, m] for k, (j, m) in enumerate(modes)) * np.eye(d * d)
        for j in range(config.bath.n_sites):
            comm = left(Q[j]) - right(Q[j])
            diag -= coeffs.boundary[j] * comm @ comm
        gen[blk, blk] += diag
        for k, (j, m) in enumerate(modes):
            up = list(n)
            up[k] += 1
            up = tuple(up)
            if up in index:
                u = index[up]
                gen[blk, u * d * d:(u + 1) * d * d] += -1j * (left(Q[j]) - right(Q[j]))
            if n[k] > 0:
                down = list(n)
                down[k] -= 1
                w = index[tuple(down)]
                c = coeffs.c[j, m]
                gen[blk, w * d * d:(w + 1) * d * d] += -1j * n[k] * (c * left(Q[j]) - np.conj(c) * right(Q[j]))
    return gen, len(labels)


@pytest.mark.parametrize("K,sites", [(0, None), (1, None), (1, (1,))])
def test_matches_dense_oracle(K, sites):
    config = dimer_config(Nc=3, K=K, sites=sites)
    gen, members = dense_generator(config)
    solver = HeomSolver(config)
    assert solver.size == members
    rho0 = np.array([[1, 0], [0, 0]], dtype=complex)
    x0 = np.zeros(gen.shape[0], dtype=complex)
    x0[:4] = rho0.reshape(-1)
    t = 1.5
    exact = (scipy.linalg.expm(gen * t) @ x0)[:4].reshape(2, 2)
    state = heom_evolve(solver.initial_state(rho0), solver, t, dt=0.005)
    assert np.abs(state.rho - exact).max() < 1e-9


@pytest.mark.parametrize("backend", ["numba", "numpy"])
def test_adjoint_identity(backend, rng):
    config = dimer_config(Nc=3, K=1)
    solver = HeomSolver(config, backend=backend)
    x = rng.normal(size=solver.zeros().shape) + 1j * rng.normal(size=solver.zeros().shape)
    a = rng.normal(size=x.shape) + 1j * rng.normal(size=x.shape)
    x[-1] = a[-1] = 0
    lhs = np.vdot(a, solver.derivative(x))
    rhs = np.vdot(solver.adjoint_derivative(a), x)
    assert abs(lhs - rhs) < 1e-12 * abs(lhs)


def test_backends_agree(rng):
    config = dimer_config(Nc=4, K=1, sites=(1,))
    fast, slow = HeomSolver(config), HeomSolver(config, backend="numpy")
    x = rng.normal(size=fast.zeros().shape) + 0j
    x[-1] = 0
    assert np.abs(fast.derivative(x) - slow.derivative(x)).max() < 1e-13
    assert np.abs(fast.adjoint_derivative(x) - slow.adjoint_derivative(x)).max() < 1e-13


def test_physical_trace_is_conserved():
    solver = HeomSolver(dimer_config())
    state = heom_evolve(solver.initial_state(np.diag([1.0, 0.0])), solver, 3.0)
    assert abs(np.trace(state.rho) - 1) < 1e-12
    assert abs(np.trace(heom_derivative(state, solver)[0])) < 1e-12


def test_step_halving_converges():
    solver = HeomSolver(dimer_config())
    rho0 = np.diag([1.0, 0.0])
    a = heom_evolve(solver.initial_state(rho0), solver, 2.0, dt=0.04).rho
    b = heom_evolve(solver.initial_state(rho0), solver, 2.0, dt=0.02).rho
    c = heom_evolve(solver.initial_state(rho0), solver, 2.0, dt=0.01).rho
    assert np.abs(b - c).max() < np.abs(a - b).max() / 10


def test_decoupled_bath_gives_unitary_dynamics():
    config = dimer_config(lam=0.0, Nc=2)
    solver = HeomSolver(config)
    rho0 = np.diag([1.0, 0.0]).astype(complex)
    state = heom_evolve(solver.initial_state(rho0), solver, 2.5, dt=0.005)
    closed = LindbladModel(HilbertSpace.numbered(2), config.hamiltonian)
    assert np.abs(state.rho - evolve_operator(closed, rho0, 2.5)).max() < 1e-10


@given(st.floats(0.01, 2.0), st.floats(0.05, 3.0), st.floats(0.1, 5.0))
def test_terminator_matches_brute_force_matsubara_sum(lam, gamma, hbar_beta):
    y = gamma * hbar_beta / 2
    if abs(math.sin(y)) < 1e-3 or any(abs(2 * math.pi * k / hbar_beta - gamma) < 1e-3 for k in range(1, 50)):
        return
    total = 0.0
    for m in range(1, 200_000):
        nu = 2 * math.pi * m / hbar_beta
        total += 4 * lam * gamma / hbar_beta / (nu ** 2 - gamma ** 2)
    # tail of sum 1/(nu^2 - g^2) ~ hbar_beta / (4 pi^2 M)
    total += 4 * lam * gamma / hbar_beta * hbar_beta ** 2 / (4 * math.pi ** 2 * 200_000)
    assert math.isclose(matsubara_residual(lam, gamma, hbar_beta), total, rel_tol=1e-6, abs_tol=1e-12)


def test_explicit_matsubara_terms_reduce_boundary():
    spec = DrudeBathSpec((0.3,), (1.0,), 0.8)
    b0 = bath_coefficients(spec, 0).boundary[0]
    b2 = bath_coefficients(spec, 2)
    explicit = sum(b2.c[0, m].real / b2.mu[0, m] for m in (1, 2))
    assert math.isclose(b0, b2.boundary[0] + explicit, rel_tol=1e-12)


def test_cot_pole_is_reported():
    with pytest.raises(ValueError):
        bath_coefficients(DrudeBathSpec((0.1,), (1.0,), 2 * math.pi), 0)


def test_hierarchy_counts():
    assert hierarchy_size(7, 0, 8) == 6435
    h = build_hierarchy(2, 2, 3, 1)
    assert h.size == math.comb(4 + 3, 3)
    tiers = h.tiers()
    assert tiers.max() == 3 and tiers[0] == 0


def test_hierarchy_memory_limit():
    with pytest.raises(MemoryError, match="members"):
        build_hierarchy(7, 7, 12, 1, memory_limit=10_000)


def test_divergence_is_reported():
    config = HeomConfig(np.diag([0.0, 1.0]), DrudeBathSpec((0.3,), (1.0,), 0.8), Nc=2, sites=(0,))
    solver = HeomSolver(config)
    state = solver.initial_state(np.diag([1.0, 0.0]))
    with pytest.raises(HeomError):
        solver.evolve(state, 50.0, dt=5.0, check_every=1)


def test_dephase_modes():
    solver = HeomSolver(dimer_config(Nc=2))
    rho0 = np.array([[0.5, 0.5], [0.5, 0.5]], dtype=complex)
    state = heom_evolve(solver.initial_state(rho0), solver, 1.0)
    plain = heom_dephase(state)
    assert abs(plain.rho[0, 1]) == 0 and np.allclose(plain.adms[1:], state.adms[1:])
    full = heom_dephase(state, include_auxiliaries=True)
    assert np.all(full.adms[:, 0, 1] == 0)
    cond = heom_dephase(state, outcome=0)
    assert math.isclose(cond.rho[0, 0].real, 1.0) and cond.rho[1, 1] == 0
    with pytest.raises(ConditionalStateUndefined):
        heom_dephase(solver.initial_state(np.diag([1.0, 0.0])), outcome=1)


def test_dephasing_commutes_with_linearity():
    solver = HeomSolver(dimer_config(Nc=2))
    r1 = np.array([[0.7, 0.2], [0.2, 0.3]], dtype=complex)
    r2 = np.array([[0.4, -0.1j], [0.1j, 0.6]], dtype=complex)
    s1 = heom_evolve(solver.initial_state(r1), solver, 0.7)
    s2 = heom_evolve(solver.initial_state(r2), solver, 0.7)
    mix = heom_evolve(solver.initial_state(0.3 * r1 + 0.7 * r2), solver, 0.7)
    lhs = heom_dephase(mix, include_auxiliaries=True).adms
    rhs = 0.3 * heom_dephase(s1, include_auxiliaries=True).adms + 0.7 * heom_dephase(s2, include_auxiliaries=True).adms
    assert np.abs(lhs - rhs).max() < 1e-12


def test_sweep_agrees_with_forward_conditional_propagator():
    solver = HeomSolver(dimer_config(Nc=3, K=1))
    rho0 = np.diag([1.0, 0.0]).astype(complex)
    sweep = wq_sweep(solver, rho0, 0, [40, 90], [30, 70], dt=0.01)
    state = heom_evolve(solver.initial_state(rho0), solver, 0.9, dt=0.01)
    for n in range(2):
        direct = heom_propagator(state, solver, n, 0, 0.7, dt=0.01)
        assert abs(sweep.omega[1, 1, n] - direct) < 1e-12
    assert abs(sweep.expectation[1, 1] - heom_evolve(solver.initial_state(rho0), solver, 1.6, dt=0.01).rho[0, 0].real) < 1e-12


def test_high_temperature_fast_bath_matches_lindblad_dephasing():
    lam, gamma, hbar_beta = 0.02, 40.0, 0.02
    h = np.array([[0.5, 1.0], [1.0, -0.5]])
    config = HeomConfig(h, DrudeBathSpec((lam, lam), (gamma,), hbar_beta), Nc=4, dt=0.002)
    solver = HeomSolver(config)
    rho0 = np.diag([1.0, 0.0]).astype(complex)
    state = heom_evolve(solver.initial_state(rho0), solver, 3.0)
    rate = 2 * (2 * lam / (hbar_beta * gamma))
    ops = tuple((np.diag(np.eye(2)[j]), rate) for j in range(2))
    lind = evolve_operator(LindbladModel(HilbertSpace.numbered(2), h, ops), rho0, 3.0)
    assert np.abs(state.rho - lind).max() < 0.02


def test_config_validation():
    with pytest.raises(ValueError):
        HeomConfig(np.array([[0, 1], [0, 0]]), DrudeBathSpec((0.1,), (1.0,), 1.0), sites=(0,))
    with pytest.raises(ValueError):
        HeomConfig(np.eye(2), DrudeBathSpec((0.1,), (1.0,), 1.0), sites=(5,))
    with pytest.raises(ValueError):
        DrudeBathSpec((-0.1,), (1.0,), 1.0)
