"""
Front-face profiles: Schwartz functions of the blow-up variable Y used as
sink traces, threshold profiles and S-matrix basis elements.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from app.core.errors import InvalidArgument


@dataclass(frozen=True)
class GaussianProfile:
    """amplitude * exp(-((Y - shift) / width)^2 / 2 + i k Y)."""

    width: float = 1.0
    shift: float = 0.0
    amplitude: complex = 1.0
    k: float = 0.0

    def __call__(self, Y) -> np.ndarray:
        Y = np.asarray(Y, dtype=float)
        z = (Y - self.shift) / self.width
        return self.amplitude * np.exp(-0.5 * z * z + 1j * self.k * Y)

    def describe(self) -> Dict[str, Any]:
        return {"type": "gaussian", "width": self.width, "shift": self.shift,
                "amplitude": [complex(self.amplitude).real, complex(self.amplitude).imag], "k": self.k}


@dataclass(frozen=True)
class HermiteProfile:
    """sum_j c_j psi_j(Y) with psi_j the normalized Hermite functions of frequency alpha."""

    coeffs: Sequence[complex]
    alpha: float = 1.0

    def basis(self, Y, count: int) -> np.ndarray:
        Y = np.asarray(Y, dtype=float)
        out = np.zeros((count,) + Y.shape)
        if count == 0:
            return out
        xi = math.sqrt(self.alpha) * Y
        out[0] = (self.alpha / math.pi) ** 0.25 * np.exp(-0.5 * xi * xi)
        if count > 1:
            out[1] = math.sqrt(2.0) * xi * out[0]
        for j in range(1, count - 1):
            out[j + 1] = math.sqrt(2.0 / (j + 1)) * xi * out[j] - math.sqrt(j / (j + 1)) * out[j - 1]
        return out

    def __call__(self, Y) -> np.ndarray:
        c = np.asarray(self.coeffs, dtype=complex)
        return np.tensordot(c, self.basis(Y, c.size), axes=1)

    def describe(self) -> Dict[str, Any]:
        return {"type": "hermite", "alpha": self.alpha,
                "coeffs": [[complex(c).real, complex(c).imag] for c in self.coeffs]}


@dataclass(frozen=True)
class SampledProfile:
    """Cubic-spline interpolant of samples on an increasing Y grid, zero outside it."""

    Y: np.ndarray
    values: np.ndarray
    _re: CubicSpline = field(init=False, repr=False, compare=False)
    _im: CubicSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_re", CubicSpline(Y, v.real))
        object.__setattr__(self, "_im", CubicSpline(Y, v.imag))

    def __call__(self, Y) -> np.ndarray:
        Y = np.asarray(Y, dtype=float)
        out = self._re(Y) + 1j * self._im(Y)
        return np.where((Y >= self.Y[0]) & (Y <= self.Y[-1]), out, 0.0)

    def describe(self) -> Dict[str, Any]:
        return {"type": "sampled", "n": int(self.Y.size),
                "Y_range": [float(self.Y[0]), float(self.Y[-1])]}


@dataclass(frozen=True)
class ZeroProfile:
    def __call__(self, Y) -> np.ndarray:
        return np.zeros(np.shape(Y), dtype=complex)

    def describe(self) -> Dict[str, Any]:
        return {"type": "zero"}


def profile_from_dict(data: Dict[str, Any]):
    """
    Inverse of describe() for the analytic profiles (CLI input).

    Raises:
        InvalidArgument: unknown type or malformed fields
    """
    if not isinstance(data, dict):
        raise InvalidArgument(f"profile must be an object, got {type(data).__name__}")
    try:
        return _build_profile(data)
    except InvalidArgument:
        raise
    except (TypeError, ValueError, IndexError) as exc:
        raise InvalidArgument(f"malformed {data.get('type', 'gaussian')} profile: {exc}", {"profile": data})


def _build_profile(data: Dict[str, Any]):
    kind = data.get("type", "gaussian")
    if kind == "gaussian":
        amp = data.get("amplitude", 1.0)
        if isinstance(amp, (list, tuple)):
            amp = complex(amp[0], amp[1])
        return GaussianProfile(float(data.get("width", 1.0)), float(data.get("shift", 0.0)),
                               amp, float(data.get("k", 0.0)))
    if kind == "hermite":
        coeffs = [complex(c[0], c[1]) if isinstance(c, (list, tuple)) else complex(c)
                  for c in data.get("coeffs", [1.0])]
        return HermiteProfile(coeffs, float(data.get("alpha", 1.0)))
    if kind == "zero":
        return ZeroProfile()
    raise InvalidArgument(f"unknown profile type {kind!r}")
