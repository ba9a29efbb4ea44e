"""Monte Carlo single-atom Ramsey records.

Each atom is detected in the down state with probability
p(phi) = (1 - gamma)/2 * [1 + C cos(Phi + phi)]. Random numbers come from
counter-based Philox streams keyed by (seed, scenario, sweep point, grid point
[, shot]), so a record never depends on which thread drew it or in what order.
"""

import csv
import hashlib
import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import List, Optional, Sequence as Seq, Tuple, Union

import numpy as np

from src.decoherence import DecoherenceParams, echo_time, predict_contrast
from src.potentials import PotentialModel
from src.sequence_core import LatticeConfig, Sequence, TimingParams
from src.spacetime_paths import compute_paths, phase_integral, sequence_potential, spacetime_area

debug_logger = logging.getLogger("debug")


def wrap_phase(x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Maps onto the principal branch (-pi, pi]."""
    wrapped = math.pi - np.mod(math.pi - np.asarray(x, dtype=float), 2 * math.pi)
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped

# --- Random streams ---

def scenario_key(name: str) -> int:
    """Stable 64-bit key for a scenario name."""
    return int.from_bytes(hashlib.blake2b(name.encode("utf-8"), digest_size=8).digest(), "little")


class RngStream:
    """A Philox generator owned by one (seed, key) pair."""

    def __init__(self, seed: int, key: Tuple[int, ...] = ()):
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        self.generator = np.random.Generator(np.random.Philox(np.random.SeedSequence(self.seed, spawn_key=self.key)))

    def uniform(self) -> float:
        return float(self.generator.random())

    def binomial(self, shots: int, p: float) -> int:
        return int(self.generator.binomial(shots, p))


def bernoulli_outcome(p: float, stream: RngStream) -> int:
    if not 0 <= p <= 1:
        raise ValueError(f"probability must lie in [0, 1], got {p}")
    return int(stream.uniform() < p)

# --- Fringe model and data ---

@dataclass(frozen=True)
class FringeModel:
    Phi: float
    C: float
    gamma: float

    def __post_init__(self):
        if not math.isfinite(self.Phi):
            raise ValueError(f"Phi must be finite, got {self.Phi}")
        if not 0 <= self.C <= 1:
            raise ValueError(f"contrast must lie in [0, 1], got {self.C}")
        if not 0 <= self.gamma <= 1:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")

    def probability(self, phi: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        p = 0.5 * (1 - self.gamma) * (1 + self.C * np.cos(self.Phi + np.asarray(phi, dtype=float)))
        p = np.clip(p, 0.0, 1.0)
        return float(p) if np.ndim(p) == 0 else p


@dataclass(frozen=True)
class FringeData:
    phi_grid: Tuple[float, ...]
    successes: Tuple[int, ...]
    shots: Tuple[int, ...]
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "phi_grid", tuple(float(x) for x in self.phi_grid))
        object.__setattr__(self, "successes", tuple(int(x) for x in self.successes))
        object.__setattr__(self, "shots", tuple(int(x) for x in self.shots))
        if not len(self.phi_grid) == len(self.successes) == len(self.shots):
            raise ValueError("phi_grid, successes and shots must have equal length")
        for s, n in zip(self.successes, self.shots):
            if n <= 0 or s < 0 or s > n:
                raise ValueError(f"invalid count {s}/{n}")

    def __len__(self) -> int:
        return len(self.phi_grid)

    @property
    def proportions(self) -> np.ndarray:
        return np.asarray(self.successes, dtype=float) / np.asarray(self.shots, dtype=float)

    @property
    def total_shots(self) -> int:
        return sum(self.shots)

    def to_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["phi_rad", "successes", "shots"])
            for phi, s, n in zip(self.phi_grid, self.successes, self.shots):
                writer.writerow([f"{phi:.12g}", s, n])

    @classmethod
    def from_csv(cls, path: str, seed: int = 0) -> "FringeData":
        with open(path, "r", encoding="utf-8", newline="") as f:
            rows = list(csv.DictReader(f))
        return cls(
            tuple(float(r["phi_rad"]) for r in rows),
            tuple(int(r["successes"]) for r in rows),
            tuple(int(r["shots"]) for r in rows),
            seed,
        )


def uniform_phase_grid(points: int) -> np.ndarray:
    if points < 1:
        raise ValueError("need at least one phase point")
    return np.arange(points) * (2 * math.pi / points)

# --- Simulation ---

def simulate_point(model: FringeModel, phi: float, shots: int, stream: RngStream) -> int:
    return stream.binomial(shots, model.probability(phi))


def _shots_list(shots_per_point: Union[int, Seq[int]], points: int) -> List[int]:
    if isinstance(shots_per_point, (int, np.integer)):
        shots = [int(shots_per_point)] * points
    else:
        shots = [int(n) for n in shots_per_point]
    if len(shots) != points or any(n <= 0 for n in shots):
        raise ValueError("shots per point must be positive and match the phase grid")
    return shots


def simulate_fringe(model: FringeModel, phi_grid: Seq[float], shots_per_point: Union[int, Seq[int]], seed: int,
                    scenario: str = "", sweep_index: int = 0) -> FringeData:
    phi_grid = [float(x) for x in phi_grid]
    shots = _shots_list(shots_per_point, len(phi_grid))
    key = scenario_key(scenario)
    successes = [
        simulate_point(model, phi, n, RngStream(seed, (key, sweep_index, i)))
        for i, (phi, n) in enumerate(zip(phi_grid, shots))
    ]
    return FringeData(tuple(phi_grid), tuple(successes), tuple(shots), seed)


def simulate_binary_record(model: FringeModel, phi: float, shots: int, seed: int,
                           scenario: str = "", sweep_index: int = 0, point_index: int = 0) -> np.ndarray:
    """Per-atom 0/1 detections at one probe phase, one stream per shot."""
    key = scenario_key(scenario)
    p = model.probability(phi)
    return np.array(
        [bernoulli_outcome(p, RngStream(seed, (key, sweep_index, point_index, shot))) for shot in range(shots)],
        dtype=np.int8,
    )

# --- Experiment pipeline ---

@dataclass(frozen=True)
class MeasurementPlan:
    phi_grid: Tuple[float, ...]
    shots: int
    seed: int
    scenario: str = "default"
    sweep_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "phi_grid", tuple(float(x) for x in self.phi_grid))


@dataclass(frozen=True)
class TruthRecord:
    phi_rad: float
    phi_wrapped_rad: float
    contrast: float
    gamma: float
    n_shifts: int
    area_m_s: float
    t_echo_s: float

    def to_dict(self) -> dict:
        return asdict(self)


def run_experiment(seq: Sequence, pot: Optional[PotentialModel], dec: DecoherenceParams, plan: MeasurementPlan,
                   lat: Optional[LatticeConfig] = None,
                   timing: Optional[TimingParams] = None) -> Tuple[FringeData, TruthRecord]:
    lat = lat or LatticeConfig()
    if timing is not None and timing != seq.timing:
        seq = replace(seq, timing=timing)

    paths = compute_paths(seq, lat)
    phi = phase_integral(paths, sequence_potential(seq, pot, lat))
    contrast = predict_contrast(seq, dec)
    truth = TruthRecord(
        phi_rad=phi,
        phi_wrapped_rad=wrap_phase(phi),
        contrast=contrast,
        gamma=dec.gamma_loss,
        n_shifts=seq.n_shifts,
        area_m_s=spacetime_area(paths).area,
        t_echo_s=echo_time(seq),
    )
    data = simulate_fringe(FringeModel(phi, contrast, dec.gamma_loss), plan.phi_grid, plan.shots, plan.seed,
                           plan.scenario, plan.sweep_index)
    debug_logger.debug(f"[{plan.scenario}#{plan.sweep_index}] truth phi={phi:.9g} rad, C={contrast:.6f}, "
                       f"{data.total_shots} atoms")
    return data, truth
