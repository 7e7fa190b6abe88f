"""Dense complex linear algebra and ODE integration.

Matrices are plain ``numpy.ndarray`` objects of dtype ``complex128``; the
helpers here only add the shape/finiteness checks the rest of the package
relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg


class IntegrationError(RuntimeError):
    """Raised when the adaptive integrator cannot make progress."""

    def __init__(self, message: str, t_reached: float, last_step: float):
        super().__init__(f"{message} (t reached = {t_reached:.6g}, last step = {last_step:.3g})")
        self.t_reached = t_reached
        self.last_step = last_step


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Return ``m`` as a finite 2-D complex array or raise ``ValueError``."""
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return a


def _square(m, name: str) -> np.ndarray:
    a = as_matrix(m, name)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    return a


def mat_mul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def lu_decompose(m) -> tuple[np.ndarray, np.ndarray, int]:
    """LU factorisation with partial pivoting.

    Returns
    -------
    lu : ndarray
        Packed factors; the strict lower triangle holds ``L`` (unit diagonal
        implied) and the upper triangle holds ``U``.
    perm : ndarray
        Row permutation such that ``m[perm] == L @ U``.
    parity : int
        ``+1`` or ``-1``, the sign of the permutation.
    """
    lu = _square(m, "m").copy()
    n = lu.shape[0]
    perm = np.arange(n)
    parity = 1
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            perm[[k, p]] = perm[[p, k]]
            parity = -parity
        pivot = lu[k, k]
        if pivot == 0:
            continue
        lu[k + 1:, k] /= pivot
        lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return lu, perm, parity


def determinant(m) -> complex:
    lu, _, parity = lu_decompose(m)
    return complex(parity * np.prod(np.diag(lu)))


def lu_solve(m, b) -> np.ndarray:
    """Solve ``m x = b`` using :func:`lu_decompose`."""
    lu, perm, _ = lu_decompose(m)
    n = lu.shape[0]
    y = np.asarray(b, dtype=np.complex128)[perm].copy()
    for i in range(n):
        y[i] -= lu[i, :i] @ y[:i]
    for i in range(n - 1, -1, -1):
        if lu[i, i] == 0:
            raise np.linalg.LinAlgError("singular matrix")
        y[i] = (y[i] - lu[i, i + 1:] @ y[i + 1:]) / lu[i, i]
    return y


def expm(m) -> np.ndarray:
    # Pade scaling-and-squaring (Al-Mohy & Higham) from scipy.
    return scipy.linalg.expm(_square(m, "m"))


@dataclass(frozen=True)
class OdeProblem:
    """Initial value problem ``dy/dt = f(t, y)`` on ``[t_start, t_end]``.

    ``y0`` may be any complex array; the derivative map must return an
    array of the same shape.
    """

    derivative: Callable[[float, np.ndarray], np.ndarray]
    y0: np.ndarray
    t_start: float
    t_end: float
    rtol: float = 1e-9
    atol: float = 1e-12

    def __post_init__(self):
        if self.t_end < self.t_start:
            raise ValueError("t_end must be >= t_start")
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class IntegrationStats:
    accepted: int = 0
    rejected: int = 0
    evaluations: int = 0
    steps: list = field(default_factory=list)


# Dormand-Prince 5(4) tableau
_DP_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_DP_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_DP_E = _DP_B5 - _DP_B4


def integrate(problem: OdeProblem, method: str = "rk45", dt: float | None = None,
              min_step: float = 1e-14, stats: IntegrationStats | None = None) -> np.ndarray:
    """Integrate ``problem`` and return the state at ``t_end``.

    ``method="rk45"`` is adaptive Dormand-Prince with the error-per-step
    controlled by ``rtol``/``atol``. ``method="rk4"`` takes fixed steps of
    size ``dt`` (the last step is shortened to land on ``t_end``), which makes
    results bitwise reproducible.
    """
    y = np.array(problem.y0, dtype=np.complex128)
    t0, t1 = float(problem.t_start), float(problem.t_end)
    if t1 == t0:
        return y
    f = problem.derivative
    if stats is None:
        stats = IntegrationStats()

    if method == "rk4":
        if dt is None or dt <= 0:
            raise ValueError("rk4 needs a positive dt")
        nsteps = max(1, int(np.ceil((t1 - t0) / dt - 1e-9)))
        h = (t1 - t0) / nsteps
        t = t0
        for _ in range(nsteps):
            y = rk4_step(f, t, y, h)
            t += h
            stats.accepted += 1
            stats.evaluations += 4
        return y

    if method != "rk45":
        raise ValueError(f"unknown method {method!r}")

    rtol, atol = problem.rtol, problem.atol
    span = t1 - t0
    h = dt if dt is not None else _initial_step(f, t0, y, rtol, atol, span)
    t = t0
    k1 = f(t, y)
    stats.evaluations += 1
    while t < t1:
        if h < min_step:
            raise IntegrationError("step size underflow", t, h)
        h = min(h, t1 - t)
        ks = [k1]
        for i in range(1, 7):
            yi = y + h * sum(a * k for a, k in zip(_DP_A[i], ks))
            ks.append(f(t + _DP_C[i] * h, yi))
        stats.evaluations += 6
        y_new = y + h * sum(b * k for b, k in zip(_DP_B5, ks) if b != 0)
        err_vec = h * sum(e * k for e, k in zip(_DP_E, ks) if e != 0)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.sqrt(np.mean(np.abs(err_vec / scale) ** 2)))
        if err <= 1.0:
            t = t + h if t + h < t1 else t1
            y = y_new
            k1 = ks[6]
            stats.accepted += 1
            factor = 5.0 if err == 0 else min(5.0, 0.9 * err ** -0.2)
        else:
            stats.rejected += 1
            factor = max(0.2, 0.9 * err ** -0.2)
        h *= factor
    return y


def rk4_step(f, t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, y)
    k2 = f(t + h / 2, y + (h / 2) * k1)
    k3 = f(t + h / 2, y + (h / 2) * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def _initial_step(f, t0, y0, rtol, atol, span):
    # Hairer, Norsett & Wanner, Solving ODEs I, II.4
    scale = atol + rtol * np.abs(y0)
    f0 = f(t0, y0)
    d0 = np.sqrt(np.mean(np.abs(y0 / scale) ** 2))
    d1 = np.sqrt(np.mean(np.abs(f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + h0 * f0
    d2 = np.sqrt(np.mean(np.abs((f(t0 + h0, y1) - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, span)
