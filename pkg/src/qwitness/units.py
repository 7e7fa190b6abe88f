"""Unit conversion to the internal convention (hbar = 1, angular frequencies).

Each model picks a time unit; energies and frequencies are converted to
radians per that time unit. Frequencies quoted in Hz/kHz/GHz are cyclic
and pick up a factor of 2 pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import constants as const

# seconds per unit
TIME_UNITS = {
    "s": 1.0,
    "ms": 1e-3,
    "us": 1e-6,
    "ns": 1e-9,
    "ps": 1e-12,
    "fs": 1e-15,
}

# angular frequency in rad/s per unit
FREQUENCY_UNITS = {
    "rad/s": 1.0,
    "Hz": 2 * math.pi,
    "kHz": 2 * math.pi * 1e3,
    "MHz": 2 * math.pi * 1e6,
    "GHz": 2 * math.pi * 1e9,
    "eV": const.e / const.hbar,
    "meV": 1e-3 * const.e / const.hbar,
    "ueV": 1e-6 * const.e / const.hbar,
    # wavenumber: omega = 2 pi c * (100 * k[cm^-1])
    "cm-1": 2 * math.pi * const.c * 100.0,
}

DIMENSIONLESS = {"", "1", "arb"}


@dataclass(frozen=True)
class UnitSystem:
    """Internal units for one model, fixed by its time unit."""

    name: str
    time_unit: str

    def __post_init__(self):
        if self.time_unit not in TIME_UNITS and self.time_unit not in DIMENSIONLESS:
            raise ValueError(f"unknown time unit {self.time_unit!r}")

    @property
    def seconds(self) -> float:
        return TIME_UNITS.get(self.time_unit, 1.0)

    def frequency(self, value: float, unit: str) -> float:
        """Angular frequency in rad per internal time unit."""
        if unit in DIMENSIONLESS:
            return float(value)
        try:
            return value * FREQUENCY_UNITS[unit] * self.seconds
        except KeyError:
            raise ValueError(f"unknown frequency/energy unit {unit!r}") from None

    def frequency_to(self, value: float, unit: str) -> float:
        if unit in DIMENSIONLESS:
            return float(value)
        return value / (FREQUENCY_UNITS[unit] * self.seconds)

    def time(self, value: float, unit: str) -> float:
        if unit in DIMENSIONLESS:
            return float(value)
        try:
            return value * TIME_UNITS[unit] / self.seconds
        except KeyError:
            raise ValueError(f"unknown time unit {unit!r}") from None

    def time_to(self, value: float, unit: str) -> float:
        if unit in DIMENSIONLESS:
            return float(value)
        return value * self.seconds / TIME_UNITS[unit]

    def hbar_beta(self, temperature_k: float) -> float:
        """hbar / (k_B T) in internal time units."""
        if temperature_k <= 0:
            raise ValueError("temperature must be positive")
        return const.hbar / (const.k * temperature_k) / self.seconds


def quantity(value, unit: str | None = None) -> tuple[float, str]:
    """Normalise ``{"value": v, "unit": u}``, ``(v, u)`` or a bare number."""
    if isinstance(value, dict):
        return float(value["value"]), str(value.get("unit", ""))
    if isinstance(value, (tuple, list)):
        return float(value[0]), str(value[1])
    return float(value), unit or ""
