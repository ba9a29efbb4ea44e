"""Arm trajectories of a block sequence and the interferometric phase they accumulate.

Phases come from two independent routes: Gauss-Legendre quadrature of
(1/hbar) * integral of [U(x_L, t) - U(x_R, t)] dt along the piecewise-linear paths, and
the closed-form diamond, hold and acceleration expressions. The tests pin the
two against each other.
"""

import csv
import io
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from src.constants import HBAR
from src.potentials import InertialWindow, LinearGradient, PotentialModel, Sum
from src.sequence_core import (
    US,
    BlockKind,
    GeometryError,
    LatticeConfig,
    Sequence,
    TimingParams,
    check_acceleration_guard,
    require_valid,
    walk_arms,
)

debug_logger = logging.getLogger("debug")

QUADRATURE_ORDER = 16

# --- Paths ---

@dataclass(frozen=True)
class Segment:
    t0: float  # s
    t1: float
    xL0: float  # m
    xL1: float
    xR0: float
    xR1: float
    spinL: int
    spinR: int
    block_index: int

    @property
    def duration(self) -> float:
        return self.t1 - self.t0

    @property
    def separations(self) -> Tuple[float, float]:
        return self.xL0 - self.xR0, self.xL1 - self.xR1


@dataclass(frozen=True)
class PathPair:
    segments: Tuple[Segment, ...]
    total_duration: float

    def boundary_times(self) -> np.ndarray:
        return np.array([s.t0 for s in self.segments] + [self.total_duration])


@dataclass(frozen=True)
class SpacetimeArea:
    area: float  # m*s


def compute_paths(seq: Sequence, lat: Optional[LatticeConfig] = None, x_origin: float = 0.0) -> PathPair:
    """Both arms start at x_origin; the left arm carries the up label first."""
    require_valid(seq)
    lat = lat or LatticeConfig()
    half = lat.half_step
    segments = []
    for step in walk_arms(seq):
        segments.append(Segment(
            t0=step.t0_us * US, t1=step.t1_us * US,
            xL0=x_origin + step.left[0] * half, xL1=x_origin + step.left[1] * half,
            xR0=x_origin + step.right[0] * half, xR1=x_origin + step.right[1] * half,
            spinL=step.spin_left, spinR=step.spin_right, block_index=step.index,
        ))
    return PathPair(tuple(segments), segments[-1].t1)


def spacetime_area(paths: PathPair) -> SpacetimeArea:
    """Exact integral of |x_L - x_R| over the piecewise-linear segments."""
    area = 0.0
    for seg in paths.segments:
        s0, s1 = seg.separations
        if s0 * s1 >= 0:
            area += 0.5 * (abs(s0) + abs(s1)) * seg.duration
        else:
            # arms cross inside the segment: two triangles
            area += 0.5 * (s0 * s0 + s1 * s1) / (abs(s0) + abs(s1)) * seg.duration
    return SpacetimeArea(area)


def signed_area(paths: PathPair) -> float:
    """Integral of (x_L - x_R) dt; a linear gradient G gives a phase G * area / hbar."""
    return sum(0.5 * sum(seg.separations) * seg.duration for seg in paths.segments)


def max_separation(paths: PathPair) -> float:
    return max(max(abs(s) for s in seg.separations) for seg in paths.segments)

# --- Phase ---

def sequence_potential(seq: Sequence, pot: Optional[PotentialModel], lat: Optional[LatticeConfig] = None) -> PotentialModel:
    """Adds the lattice-frame pseudo-potential of every AccelWindow block to pot."""
    lat = lat or LatticeConfig()
    windows = [
        InertialWindow(step.block.accel, step.t0_us * US, step.t1_us * US, lat.mass)
        for step in walk_arms(seq)
        if step.block.kind is BlockKind.ACCEL_WINDOW
    ]
    parts = ([pot] if pot is not None else []) + windows
    if not parts:
        return LinearGradient(0.0)
    if len(parts) == 1:
        return parts[0]
    return Sum(tuple(parts))


def phase_integral(paths: PathPair, pot: PotentialModel, order: int = QUADRATURE_ORDER) -> float:
    nodes, weights = leggauss(order)
    breakpoints = np.array(pot.breakpoints())

    t_nodes: List[np.ndarray] = []
    xL_nodes: List[np.ndarray] = []
    xR_nodes: List[np.ndarray] = []
    w_nodes: List[np.ndarray] = []
    for seg in paths.segments:
        inner = breakpoints[(breakpoints > seg.t0) & (breakpoints < seg.t1)]
        edges = np.concatenate(([seg.t0], np.sort(inner), [seg.t1]))
        for a, b in zip(edges[:-1], edges[1:]):
            half = 0.5 * (b - a)
            t = half * nodes + 0.5 * (a + b)
            frac = (t - seg.t0) / seg.duration
            t_nodes.append(t)
            xL_nodes.append(seg.xL0 + (seg.xL1 - seg.xL0) * frac)
            xR_nodes.append(seg.xR0 + (seg.xR1 - seg.xR0) * frac)
            w_nodes.append(half * weights)

    t = np.concatenate(t_nodes)
    integrand = pot.value(np.concatenate(xL_nodes), t) - pot.value(np.concatenate(xR_nodes), t)
    if not np.all(np.isfinite(integrand)):
        raise FloatingPointError("potential evaluation returned non-finite values along the paths")
    phase = float(np.dot(np.concatenate(w_nodes), integrand)) / HBAR
    debug_logger.debug(f"Phase integral over {len(t_nodes)} intervals: {phase:.12g} rad")
    return phase

# --- Closed forms ---

def _check_n(n: int) -> int:
    if int(n) != n or n < 2 or n % 2:
        raise GeometryError(f"n must be an even integer >= 2, got {n}")
    return int(n)


def closed_form_diamond_phase(n: int, gradU: float, timing: Optional[TimingParams] = None, d: Optional[float] = None) -> float:
    timing = timing or TimingParams()
    d = LatticeConfig().d if d is None else d
    k = _check_n(n) // 2
    return gradU / HBAR * d * (k * k * (timing.tau_S + timing.tau_pi) - k * timing.tau_pi)


def closed_form_hold_phase(n: int, gradU: float, t_hold: float, d: Optional[float] = None) -> float:
    if t_hold < 0:
        raise ValueError(f"t_hold must be non-negative, got {t_hold}")
    d = LatticeConfig().d if d is None else d
    return gradU * (_check_n(n) // 2) * d * t_hold / HBAR


def closed_form_acceleration_phase(n: int, mass: float, a: float, t_acc: float, d: Optional[float] = None) -> float:
    check_acceleration_guard(a)
    if t_acc < 0:
        raise ValueError(f"t_acc must be non-negative, got {t_acc}")
    d = LatticeConfig().d if d is None else d
    return mass * a * (_check_n(n) // 2) * d * t_acc / HBAR


def gradient_equivalent_acceleration(gradU: float, mass: float, g0: float) -> float:
    """Force per mass in units of g0."""
    if not mass > 0:
        raise ValueError("mass must be positive")
    return gradU / mass / g0

# --- Export ---

def paths_to_csv(paths: PathPair) -> str:
    """Positions at every block boundary: t_s, xL_m, xR_m, spinL."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["t_s", "xL_m", "xR_m", "spinL"])
    for seg in paths.segments:
        writer.writerow([f"{seg.t0:.12g}", f"{seg.xL0:.12g}", f"{seg.xR0:.12g}", "up" if seg.spinL > 0 else "down"])
    last = paths.segments[-1]
    writer.writerow([f"{last.t1:.12g}", f"{last.xL1:.12g}", f"{last.xR1:.12g}", "up" if last.spinL > 0 else "down"])
    return buffer.getvalue()
