"""Coherence witnesses built from populations, propagators and correlators.

All witnesses return :class:`WitnessResult`. Values are reported raw; the
threshold only decides the boolean ``detected`` flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .numerics import determinant, lu_solve

DEFAULT_THRESHOLD = 1e-6
SINGULAR_THRESHOLD = 1e-10


class UndeterminedPropagator(ValueError):
    """The population matrix of a time-domain set is (nearly) singular."""

    def __init__(self, det: float, scale: float, reason: str = "population matrix is near-singular"):
        super().__init__(f"{reason}: |det| = {det:.3e} (scale {scale:.3e})")
        self.det = det
        self.scale = scale


@dataclass
class WitnessResult:
    witness: str
    value: float
    threshold: float
    detected: bool = False
    components: dict = field(default_factory=dict)
    m: object = None
    n: object = None
    t0: float | None = None
    tau: float | None = None
    status: str = ""
    note: str = ""

    def __post_init__(self):
        if not self.status:
            self.status = "detected" if self.detected else "not detected"

    def to_record(self) -> dict:
        def plain(v):
            if isinstance(v, complex):
                return {"re": v.real, "im": v.imag}
            if isinstance(v, np.generic):
                return v.item()
            if isinstance(v, np.ndarray):
                return [plain(x) for x in v.tolist()]
            if isinstance(v, (list, tuple)):
                return [plain(x) for x in v]
            return v

        return {
            "witness": self.witness,
            "m": self.m,
            "n": self.n,
            "t0": self.t0,
            "tau": self.tau,
            "value": float(self.value),
            "detected": bool(self.detected),
            "status": self.status,
            "components": {k: plain(v) for k, v in self.components.items()},
            "threshold": self.threshold,
        }


def witness_wqq(correlator: complex, p_n: float, omega_mn: float,
                threshold: float = DEFAULT_THRESHOLD, **where) -> WitnessResult:
    """|<Q_m(t) Q_n(t0)> - p_n(t0) Omega_mn(t, t0)|.

    Diagnostic only: the first projective measurement destroys the coherence
    this is sensitive to, so it cannot be measured directly.
    """
    classical = p_n * omega_mn
    value = abs(complex(correlator) - classical)
    return WitnessResult("wqq", value, threshold, value > threshold,
                         {"correlator": complex(correlator), "classical": classical},
                         note="not directly measurable", **where)


def witness_wq(expectation: float, populations: Sequence[float], omega_column: Sequence[float],
               threshold: float = DEFAULT_THRESHOLD, **where) -> WitnessResult:
    """|<Q_m(t)> - sum_n p_n(t0) Omega_mn(t, t0)|."""
    p = np.asarray(populations, dtype=float)
    w = np.asarray(omega_column, dtype=float)
    if p.shape != w.shape or p.ndim != 1:
        raise ValueError(f"populations {p.shape} and propagator column {w.shape} must be matching vectors")
    classical = float(p @ w)
    value = abs(float(expectation) - classical)
    return WitnessResult("wq", value, threshold, value > threshold,
                         {"expectation": float(expectation), "classical_sum": classical}, **where)


@dataclass
class PartialSum:
    running_sum: float
    detected: bool
    terms_consumed: int
    partial_sums: list
    expectation: float
    threshold: float

    def to_result(self, **where) -> WitnessResult:
        value = max(self.running_sum - self.expectation, 0.0)
        return WitnessResult("wq-partial", value, self.threshold, self.detected,
                             {"expectation": self.expectation, "running_sum": self.running_sum,
                              "terms_consumed": self.terms_consumed}, **where)


def witness_wq_partial(expectation: float, terms: Iterable[float],
                       threshold: float = DEFAULT_THRESHOLD) -> PartialSum:
    """Accumulate ``p_n(t0) Omega_mn`` terms, stopping at the first violation.

    Every term is a probability product and hence nonnegative, so once the
    running sum exceeds ``<Q_m(t)>`` no later term can undo the detection.
    """
    total = 0.0
    sums = []
    for k, term in enumerate(terms, start=1):
        if term < -1e-12:
            raise ValueError(f"term {k} is negative ({term})")
        total += max(float(term), 0.0)
        sums.append(total)
        if total > expectation + threshold:
            return PartialSum(total, True, k, sums, float(expectation), threshold)
    return PartialSum(total, False, len(sums), sums, float(expectation), threshold)


@dataclass(frozen=True)
class TimeDomainSet:
    """``d`` pairs ``(t0[j, k], t[j, k])`` sharing the difference ``tau``."""

    label: int
    pairs: tuple

    def __post_init__(self):
        pairs = tuple((float(a), float(b)) for a, b in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        if not pairs:
            raise ValueError("a time-domain set needs at least one pair")
        taus = [b - a for a, b in pairs]
        if max(taus) - min(taus) > 1e-9 * max(1.0, abs(taus[0])):
            raise ValueError("all pairs in a time-domain set must share tau")
        if len(set(pairs)) != len(pairs):
            raise ValueError("time pairs must be distinct")

    @property
    def tau(self) -> float:
        return self.pairs[0][1] - self.pairs[0][0]

    @property
    def t0s(self) -> list[float]:
        return [a for a, _ in self.pairs]

    @property
    def ts(self) -> list[float]:
        return [b for _, b in self.pairs]

    @classmethod
    def regular(cls, label: int, base: float, tau: float, d: int, offset: float) -> "TimeDomainSet":
        """Pairs with ``t0[k] = (k + offset) * base`` for ``k = 1..d``."""
        return cls(label, tuple(((k + offset) * base, (k + offset) * base + tau) for k in range(1, d + 1)))


@dataclass(frozen=True)
class PopulationRecord:
    """Populations at ``t0`` and the expectation ``<Q_m>`` at ``t = t0 + tau``."""

    t0: float
    t: float
    populations: tuple
    expectation: float

    def __post_init__(self):
        p = tuple(float(x) for x in self.populations)
        object.__setattr__(self, "populations", p)
        if min(p) < -1e-8 or max(p) > 1 + 1e-8:
            raise ValueError("populations must lie in [0, 1]")
        if abs(sum(p) - 1) > 1e-8:
            raise ValueError(f"populations sum to {sum(p)}, not 1")


def population_matrix(records: Sequence[PopulationRecord]) -> tuple[np.ndarray, np.ndarray]:
    """``P[k, n] = p_n(t0[k])`` and ``Q[k] = <Q_m(t[k])>``."""
    P = np.array([r.populations for r in records], dtype=float)
    Q = np.array([r.expectation for r in records], dtype=float)
    if P.shape[0] != P.shape[1]:
        raise ValueError(f"need d records for a d-level system, got {P.shape[0]} for d = {P.shape[1]}")
    return P, Q


def _hadamard_bound(P: np.ndarray) -> float:
    return float(np.prod(np.linalg.norm(P, axis=1)))


def column_replaced(P: np.ndarray, Q: np.ndarray, n: int) -> np.ndarray:
    out = np.array(P, dtype=float)
    out[:, n] = Q
    return out


@dataclass
class PropagatorSolution:
    omega: np.ndarray
    det: float
    column_dets: np.ndarray
    lu_omega: np.ndarray
    condition: float


def solve_propagator_vector(P, Q, singular_threshold: float = SINGULAR_THRESHOLD,
                            agree_tol: float = 1e-8) -> PropagatorSolution:
    """Solve ``P Omega = Q`` by Cramer's rule, cross-checked with an LU solve."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    d = P.shape[0]
    scale = _hadamard_bound(P)
    det_p = determinant(P).real
    if scale == 0 or abs(det_p) <= singular_threshold * scale:
        raise UndeterminedPropagator(abs(det_p), scale)
    col = np.array([determinant(column_replaced(P, Q, n)).real for n in range(d)])
    omega = col / det_p
    lu = lu_solve(P, Q).real
    cond = float(np.linalg.cond(P))
    if np.max(np.abs(omega - lu)) > agree_tol * max(1.0, np.max(np.abs(lu))):
        raise UndeterminedPropagator(abs(det_p), scale,
                                     f"Cramer and LU solutions disagree (condition number {cond:.3e})")
    return PropagatorSolution(omega, det_p, col, lu, cond)


def witness_womega(records_j: Sequence[PopulationRecord], records_jp: Sequence[PopulationRecord],
                   n: int, threshold: float = DEFAULT_THRESHOLD,
                   singular_threshold: float = SINGULAR_THRESHOLD, **where) -> WitnessResult:
    """Compare propagator elements inferred from two time-domain sets.

    ``value = |det(P_j^(n)) det(P_j') - det(P_j'^(n)) det(P_j)|`` from
    populations only. ``detected`` compares ``value`` against ``threshold``
    times the determinant scale: ``|det P_j det P_j'|`` when both sets are
    regular, with a singular set's determinant replaced by its Hadamard
    bound. Both sets singular gives status "inconclusive".
    """
    P1, Q1 = population_matrix(records_j)
    P2, Q2 = population_matrix(records_jp)
    if P1.shape != P2.shape:
        raise ValueError("both time-domain sets need the same dimension")
    taus = {round(r.t - r.t0, 12) for r in (*records_j, *records_jp)}
    if max(taus) - min(taus) > 1e-9 * max(1.0, max(abs(x) for x in taus)):
        raise ValueError("both time-domain sets must share tau")
    det1 = determinant(P1).real
    det2 = determinant(P2).real
    det1n = determinant(column_replaced(P1, Q1, n)).real
    det2n = determinant(column_replaced(P2, Q2, n)).real
    value = abs(det1n * det2 - det2n * det1)
    h1, h2 = _hadamard_bound(P1), _hadamard_bound(P2)
    sing1 = abs(det1) <= singular_threshold * h1
    sing2 = abs(det2) <= singular_threshold * h2
    components = {"det_Pj": det1, "det_Pjp": det2, "det_Pj_n": det1n, "det_Pjp_n": det2n}
    if sing1 and sing2:
        components["normalized"] = float("nan")
        return WitnessResult("womega", value, threshold, False, components, n=n,
                             status="inconclusive", note="both population matrices are singular", **where)
    scale = (h1 if sing1 else abs(det1)) * (h2 if sing2 else abs(det2))
    normalized = value / scale
    components["normalized"] = normalized
    if not (sing1 or sing2):
        components["omega_j"] = det1n / det1
        components["omega_jp"] = det2n / det2
    return WitnessResult("womega", value, threshold, normalized > threshold, components, n=n, **where)
