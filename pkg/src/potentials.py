"""Spin-independent potential models U(x, t) with analytic gradients.

Every model evaluates on numpy arrays (x and t broadcast together) and declares
the times at which it is not smooth, so the phase integrator can split its
quadrature intervals there.
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from src.constants import HBAR

debug_logger = logging.getLogger("debug")

ArrayLike = Union[float, np.ndarray]


class PotentialModel:
    def value(self, x: ArrayLike, t: ArrayLike) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, x: ArrayLike, t: ArrayLike) -> np.ndarray:
        raise NotImplementedError

    def breakpoints(self) -> Tuple[float, ...]:
        return ()

    def __add__(self, other: "PotentialModel") -> "Sum":
        left = self.parts if isinstance(self, Sum) else (self,)
        right = other.parts if isinstance(other, Sum) else (other,)
        return Sum(left + right)


@dataclass(frozen=True)
class LinearGradient(PotentialModel):
    gradU: float  # J/m

    @classmethod
    def from_frequency(cls, f_hz: float, d: float) -> "LinearGradient":
        """Gradient of 2*pi*hbar*f per lattice site d."""
        return cls(2 * math.pi * HBAR * f_hz / d)

    def value(self, x, t):
        x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        return self.gradU * x

    def gradient(self, x, t):
        x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        return np.full(x.shape, self.gradU)


@dataclass(frozen=True)
class GaussianBeamAxial(PotentialModel):
    """On-axis dipole potential of a focused Gaussian beam, U = -U0 / (1 + ((x - x_focus)/z_R)^2).

    Only the axial intensity profile enters; the atoms sit on the beam axis.
    """
    U0: float       # J
    x_focus: float  # m, signed offset of the focus from the origin
    z_R: float      # m

    def __post_init__(self):
        if not self.z_R > 0:
            raise ValueError(f"Rayleigh length must be positive, got {self.z_R}")

    @classmethod
    def from_gradient(cls, gradU: float, x_focus: float, z_R: float, x0: float = 0.0) -> "GaussianBeamAxial":
        """Chooses U0 so that the axial gradient at x0 equals gradU."""
        u = (x0 - x_focus) / z_R
        if u == 0:
            raise ValueError("the gradient vanishes at the focus; pick x0 != x_focus")
        per_unit_depth = 2 * u / (z_R * (1 + u * u) ** 2)
        return cls(gradU / per_unit_depth, x_focus, z_R)

    def value(self, x, t):
        x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        u = (x - self.x_focus) / self.z_R
        return -self.U0 / (1 + u * u)

    def gradient(self, x, t):
        x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        u = (x - self.x_focus) / self.z_R
        return self.U0 * 2 * u / (self.z_R * (1 + u * u) ** 2)


@dataclass(frozen=True)
class InertialWindow(PotentialModel):
    """Lattice-frame pseudo-potential -m*a*x, active on [t_on, t_off)."""
    accel: float  # m/s^2
    t_on: float   # s
    t_off: float  # s
    mass: float   # kg

    def __post_init__(self):
        if not self.t_on < self.t_off:
            raise ValueError(f"t_on must precede t_off, got [{self.t_on}, {self.t_off})")
        if not self.mass > 0:
            raise ValueError("mass must be positive")

    def _active(self, t: np.ndarray) -> np.ndarray:
        return (t >= self.t_on) & (t < self.t_off)

    def value(self, x, t):
        x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        return np.where(self._active(t), -self.mass * self.accel * x, 0.0)

    def gradient(self, x, t):
        x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        return np.where(self._active(t), -self.mass * self.accel, 0.0)

    def breakpoints(self):
        return (self.t_on, self.t_off)


@dataclass(frozen=True)
class Sum(PotentialModel):
    parts: Tuple[PotentialModel, ...]

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise ValueError("Sum needs at least one potential")

    def value(self, x, t):
        return sum(p.value(x, t) for p in self.parts)

    def gradient(self, x, t):
        return sum(p.gradient(x, t) for p in self.parts)

    def breakpoints(self):
        return tuple(sorted({b for p in self.parts for b in p.breakpoints()}))


def _as_output(result: np.ndarray) -> ArrayLike:
    return float(result) if np.ndim(result) == 0 else result


def potential_value(pot: PotentialModel, x: ArrayLike, t: ArrayLike = 0.0) -> ArrayLike:
    return _as_output(pot.value(x, t))


def potential_gradient(pot: PotentialModel, x: ArrayLike, t: ArrayLike = 0.0) -> ArrayLike:
    return _as_output(pot.gradient(x, t))


@dataclass(frozen=True)
class Linearization:
    gradient: LinearGradient
    intercept: float      # U at x0 of the fitted line, J
    max_deviation: float  # J


def linearize_gaussian_axial(pot: GaussianBeamAxial, x0: float, window: float, points: int = 1001) -> Linearization:
    """Least-squares line through U over [x0 - window/2, x0 + window/2]."""
    if not isinstance(pot, GaussianBeamAxial):
        raise TypeError(f"linearize_gaussian_axial needs a GaussianBeamAxial, got {type(pot).__name__}")
    if not window > 0:
        raise ValueError("window must be positive")

    dx = np.linspace(-window / 2, window / 2, points)
    u_center = float(pot.value(x0, 0.0))
    du = pot.value(x0 + dx, 0.0) - u_center
    slope, offset = np.polyfit(dx, du, 1)
    residual = du - (slope * dx + offset)
    max_deviation = float(np.max(np.abs(residual)))
    debug_logger.debug(f"Linearized Gaussian axial potential over {window:g} m: slope {slope:.6e} J/m, "
                       f"max deviation {max_deviation:.3e} J")
    return Linearization(LinearGradient(float(slope)), u_center + float(offset), max_deviation)
