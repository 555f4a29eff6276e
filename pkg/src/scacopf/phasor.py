"""Steady-state AC circuit quantities in phasor form.

A sinusoid ``sqrt(2) * A * cos(w t + phi)`` maps to the phasor ``A exp(i phi)``.
Magnitudes are RMS values throughout; the ``sqrt(2)`` amplitude factor never
appears in stored quantities.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Union


class InvalidElementError(ValueError):
    pass


def _normalize_phase(phase: float) -> float:
    wrapped = math.atan2(math.sin(phase), math.cos(phase))
    # atan2 returns [-pi, pi]; fold -pi onto pi so the range is (-pi, pi]
    return math.pi if wrapped == -math.pi else wrapped


@dataclass(frozen=True)
class Phasor:
    magnitude: float
    phase: float = 0.0

    def __post_init__(self):
        if self.magnitude < 0:
            raise ValueError(f"phasor magnitude must be nonnegative, got {self.magnitude}")
        object.__setattr__(self, "phase", _normalize_phase(self.phase))

    @classmethod
    def from_complex(cls, z: complex) -> "Phasor":
        return cls(abs(z), cmath.phase(z) if z != 0 else 0.0)

    def to_complex(self) -> complex:
        return cmath.rect(self.magnitude, self.phase)

    def __complex__(self) -> complex:
        return self.to_complex()


def phasor_transform(rms: float, phase: float) -> Phasor:
    """Phasor of the waveform ``sqrt(2) * rms * cos(w t + phase)``."""
    return Phasor(rms, phase)


def waveform(p: Phasor, omega: float, t: float) -> float:
    """Inverse transform: instantaneous value of the sinusoid at time ``t``."""
    return (p.to_complex() * math.sqrt(2.0) * cmath.exp(1j * omega * t)).real


@dataclass(frozen=True)
class Resistor:
    R: float


@dataclass(frozen=True)
class Inductor:
    L: float


@dataclass(frozen=True)
class Capacitor:
    C: float


ElementKind = Union[Resistor, Inductor, Capacitor]


def admittance(kind: ElementKind, omega: float) -> complex:
    """Complex admittance ``G + iB`` of a passive element at angular frequency ``omega``."""
    if not omega > 0:
        raise InvalidElementError(f"angular frequency must be positive, got {omega}")
    if isinstance(kind, Resistor):
        if not kind.R > 0:
            raise InvalidElementError(f"resistance must be positive, got {kind.R}")
        return complex(1.0 / kind.R, 0.0)
    if isinstance(kind, Inductor):
        if not kind.L > 0:
            raise InvalidElementError(f"inductance must be positive, got {kind.L}")
        return complex(0.0, -1.0 / (omega * kind.L))
    if isinstance(kind, Capacitor):
        if not kind.C > 0:
            raise InvalidElementError(f"capacitance must be positive, got {kind.C}")
        return complex(0.0, omega * kind.C)
    raise InvalidElementError(f"unknown element kind {kind!r}")


def parallel_admittance(elements, omega: float) -> complex:
    return sum((admittance(e, omega) for e in elements), 0j)


def series_admittance(elements, omega: float) -> complex:
    return 1.0 / sum(1.0 / admittance(e, omega) for e in elements)


def _as_complex(x) -> complex:
    return x.to_complex() if isinstance(x, Phasor) else complex(x)


def complex_power(v, i) -> complex:
    """``v * conj(i)``; real part is active power, imaginary part reactive power."""
    return _as_complex(v) * _as_complex(i).conjugate()


def instantaneous_power_components(V: float, I: float, alpha: float, beta: float) -> tuple[float, float]:
    """Active and reactive components of ``p(t)`` for voltage phase ``alpha`` and current phase ``beta``.

    The active part scales the constant and in-phase double-frequency terms, the
    reactive part the quadrature double-frequency term.
    """
    if V < 0 or I < 0:
        raise ValueError("RMS magnitudes must be nonnegative")
    return V * I * math.cos(alpha - beta), V * I * math.sin(alpha - beta)


def instantaneous_power(V: float, I: float, alpha: float, beta: float, omega: float, t: float) -> float:
    """``p(t) = v(t) i(t)`` evaluated directly from the two waveforms."""
    return waveform(Phasor(V, alpha), omega, t) * waveform(Phasor(I, beta), omega, t)
