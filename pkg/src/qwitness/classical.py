"""Classical stochastic null models.

Markov chains on the measured states, and hidden-state chains whose visible
marginal is non-Markovian. Generators act on column vectors of
probabilities: ``dp/dt = K p`` with columns of ``K`` summing to zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import expm
from .quantum import HilbertSpace, LindbladModel


@dataclass(frozen=True)
class RateMatrix:
    generator: np.ndarray

    def __post_init__(self):
        k = np.array(self.generator, dtype=float)
        k.setflags(write=False)
        object.__setattr__(self, "generator", k)
        if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] < 2:
            raise ValueError("rate matrix must be square with d >= 2")
        off = k - np.diag(np.diag(k))
        if off.min() < 0:
            raise ValueError("off-diagonal rates must be nonnegative")
        if np.max(np.abs(k.sum(axis=0))) > 1e-12 * max(1.0, np.abs(k).max()):
            raise ValueError("columns of the rate matrix must sum to zero")

    @classmethod
    def from_rates(cls, rates) -> "RateMatrix":
        """Build from off-diagonal rates ``rates[m, n]`` (n -> m); diagonal ignored."""
        r = np.array(rates, dtype=float)
        np.fill_diagonal(r, 0.0)
        return cls(r - np.diag(r.sum(axis=0)))

    @property
    def dim(self) -> int:
        return self.generator.shape[0]

    def propagator(self, t: float) -> np.ndarray:
        return expm(self.generator * t).real

    def stationary(self) -> np.ndarray:
        w, v = np.linalg.eig(self.generator)
        p = v[:, np.argmin(np.abs(w))].real
        return p / p.sum()


def classical_evolve(K: RateMatrix, p0, t: float) -> np.ndarray:
    p0 = np.asarray(p0, dtype=float)
    if p0.min() < -1e-12 or abs(p0.sum() - 1) > 1e-10:
        raise ValueError("p0 must be a probability distribution")
    if t == 0:
        return p0.copy()
    return K.propagator(t) @ p0


def random_rate_matrix(d: int, seed: int) -> RateMatrix:
    """Off-diagonal rates uniform in (0, 1], deterministic per seed."""
    if d < 2:
        raise ValueError("d must be >= 2")
    rng = np.random.default_rng(seed)
    # 1 - U[0, 1) lies in (0, 1]
    return RateMatrix.from_rates(1.0 - rng.random((d, d)))


def random_distribution(d: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).dirichlet(np.ones(d))


def rate_matrix_to_lindblad(K: RateMatrix, space: HilbertSpace | None = None) -> LindbladModel:
    """Quantum jump model with the same population dynamics and no coherence.

    Jump ``|m><n|`` at rate ``K[m, n]``; with H = 0 diagonal states stay
    diagonal, so this is a classical process living inside the quantum code.
    """
    d = K.dim
    space = space or HilbertSpace.numbered(d)
    terms = []
    for m in range(d):
        for n in range(d):
            if m != n and K.generator[m, n] > 0:
                op = np.zeros((d, d))
                op[m, n] = 1
                terms.append((op, K.generator[m, n]))
    return LindbladModel(space, np.zeros((d, d)), tuple(terms), name="classical-rates")


def classical_two_time(K: RateMatrix, p0, m: int, n: int, t0: float, t: float) -> float:
    """P(state m at t and state n at t0) for a Markov chain."""
    p_t0 = classical_evolve(K, p0, t0)
    start = np.zeros(K.dim)
    start[n] = p_t0[n]
    return float(classical_evolve_unnormalised(K, start, t - t0)[m])


def classical_evolve_unnormalised(K: RateMatrix, v, t: float) -> np.ndarray:
    return K.propagator(t) @ np.asarray(v, dtype=float) if t else np.array(v, dtype=float)


@dataclass(frozen=True)
class HiddenStateModel:
    """Markov chain on (visible, hidden) pairs, indexed ``v * hidden + x``.

    Only the visible label is measured; the hidden label plays the part of a
    classically correlated reservoir.
    """

    visible: int
    hidden: int
    joint: RateMatrix
    initial: np.ndarray

    def __post_init__(self):
        p = np.array(self.initial, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "initial", p)
        if self.joint.dim != self.visible * self.hidden:
            raise ValueError("joint generator must act on visible * hidden states")
        if p.shape != (self.joint.dim,) or p.min() < 0 or abs(p.sum() - 1) > 1e-12:
            raise ValueError("initial joint distribution is invalid")

    def joint_at(self, t: float) -> np.ndarray:
        return classical_evolve(self.joint, self.initial, t)

    def marginal(self, joint: np.ndarray) -> np.ndarray:
        return joint.reshape(self.visible, self.hidden).sum(axis=1)

    def visible_populations(self, t: float) -> np.ndarray:
        return self.marginal(self.joint_at(t))

    def hidden_initial(self) -> np.ndarray:
        return self.initial.reshape(self.visible, self.hidden).sum(axis=0)


class ConditionalUndefined(ValueError):
    pass


def hidden_propagator(model: HiddenStateModel, n: int, m: int, t0: float, tau: float,
                      correlation_aware: bool = True, threshold: float = 1e-10) -> float:
    """P(visible m at t0 + tau | visible n at t0).

    Correlation-aware: Bayes-condition the joint distribution at ``t0`` on
    the outcome, keeping the hidden marginal. Naive: restart the hidden label
    from its ``t = 0`` distribution, as an experimenter who re-prepares the
    system without the reservoir would.
    """
    joint = model.joint_at(t0).reshape(model.visible, model.hidden)
    p_n = joint[n].sum()
    if p_n <= threshold:
        raise ConditionalUndefined(f"p_{n}(t0) = {p_n:.3g}; conditional propagator undefined")
    start = np.zeros((model.visible, model.hidden))
    if correlation_aware:
        start[n] = joint[n] / p_n
    else:
        start[n] = model.hidden_initial()
    later = classical_evolve(model.joint, start.reshape(-1), tau)
    return float(model.marginal(later)[m])


def hidden_propagator_matrix(model: HiddenStateModel, t0: float, tau: float,
                             correlation_aware: bool = True) -> np.ndarray:
    d = model.visible
    return np.array([[hidden_propagator(model, n, m, t0, tau, correlation_aware)
                      for n in range(d)] for m in range(d)])


def caveat_model(flow: float = 5.0, tick: float = 6.0, stages: int = 6) -> HiddenStateModel:
    """Visible flow whose direction is set by a hidden clock.

    The hidden label is a chain of ``stages`` states advanced at rate
    ``tick``. While the clock runs, the visible state hops 0 -> 1 at rate
    ``flow``; once it reaches the last stage the flow reverses to 1 -> 0.
    The visible marginal therefore depends on how long ago the process
    started, and propagators inferred from early and late time windows
    disagree although nothing quantum is involved. This is a constructed
    example, not one taken from the literature.
    """
    h = stages
    rates = np.zeros((2 * h, 2 * h))
    for x in range(h - 1):
        rates[1 * h + x, 0 * h + x] = flow
        for v in (0, 1):
            rates[v * h + x + 1, v * h + x] = tick
    rates[0 * h + h - 1, 1 * h + h - 1] = flow
    p0 = np.zeros(2 * h)
    p0[0] = 1.0
    return HiddenStateModel(2, h, RateMatrix.from_rates(rates), p0)


# time windows (base, tau, offset of the second set) used with caveat_model
CAVEAT_WINDOWS = {"base": 0.35, "tau": 0.45, "offset_first": 0, "offset_second": 1}
