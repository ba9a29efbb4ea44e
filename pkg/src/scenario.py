"""Scenario files: YAML description of one simulated measurement campaign.

A scenario names the lattice, timing, potential and decoherence constants, the
measurement plan, a sweep over interferometer geometries and the analysis to
run on the fitted fringes. Physical quantities carry their unit in the key.
"""

import itertools
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import yaml

from src.constants import AMU
from src.decoherence import DecoherenceParams
from src.measurement_mc import uniform_phase_grid
from src.potentials import GaussianBeamAxial, LinearGradient, PotentialModel
from src.sequence_core import (
    GeometryKind,
    GeometrySpec,
    LatticeConfig,
    Sequence,
    TimingParams,
    build_geometry,
    load_sequence_file,
)

debug_logger = logging.getLogger("debug")

ANALYSES = ("none", "gradient", "contrast_decay", "hold_slopes", "hold_contrast", "accel_slopes")
POTENTIALS = ("none", "linear", "gaussian_axial")
OUTPUTS = ("truth", "fringes", "fits", "summary")


class ConfigError(ValueError):
    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


# --- Raw access helpers ---

def _section(raw: Dict[str, Any], name: str, required: bool = True) -> Dict[str, Any]:
    value = raw.get(name)
    if value is None:
        if required:
            raise ConfigError("missing required key", name)
        return {}
    if not isinstance(value, dict):
        raise ConfigError("expected a mapping", name)
    return value


def _get(section: Dict[str, Any], prefix: str, key: str, default: Any = None, required: bool = False) -> Any:
    if key not in section or section[key] is None:
        if required:
            raise ConfigError("missing required key", f"{prefix}.{key}")
        return default
    return section[key]


def _number(section: Dict[str, Any], prefix: str, key: str, default: Optional[float] = None,
            required: bool = False) -> Optional[float]:
    value = _get(section, prefix, key, default, required)
    if value is None:
        return None
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {value!r}", f"{prefix}.{key}") from None
    if not math.isfinite(value):
        raise ConfigError("must be finite", f"{prefix}.{key}")
    return value


def _number_list(section: Dict[str, Any], prefix: str, key: str) -> List[float]:
    value = section.get(key)
    if value is None:
        return []
    if not isinstance(value, list):
        value = [value]
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"expected a list of numbers, got {value!r}", f"{prefix}.{key}") from None

# --- Scenario ---

@dataclass(frozen=True)
class SweepPoint:
    index: int
    n_shifts: int
    label: str
    value: float
    sequence: Sequence
    spec: Optional[GeometrySpec] = None
    t_hold_us: float = 0.0
    accel_g: float = 0.0


@dataclass
class Scenario:
    name: str
    seed: int
    lattice: LatticeConfig
    timing: TimingParams
    potential: Optional[PotentialModel]
    decoherence: DecoherenceParams
    phase_points: int
    shots_per_point: int
    analysis: str
    geometry: Optional[GeometryKind] = None
    n_shifts: List[int] = field(default_factory=list)
    t_hold_us: List[float] = field(default_factory=list)
    accel_g: List[float] = field(default_factory=list)
    t_acc_us: float = 0.0
    sequence_file: Optional[str] = None
    outputs: Dict[str, bool] = field(default_factory=lambda: {k: True for k in OUTPUTS})
    description: str = ""
    source_path: Optional[str] = None

    @property
    def phi_grid(self):
        return uniform_phase_grid(self.phase_points)

    @property
    def true_gradient(self) -> Optional[float]:
        """Spatial gradient of the static potential at the origin, J/m."""
        if self.potential is None:
            return 0.0
        return float(self.potential.gradient(0.0, 0.0))

    def points(self) -> List[SweepPoint]:
        if self.sequence_file is not None:
            seq = load_sequence_file(self.sequence_file)
            return [SweepPoint(0, seq.n_shifts, os.path.basename(self.sequence_file), 0.0, seq)]

        holds = self.t_hold_us or [0.0]
        accels = self.accel_g or [0.0]
        points = []
        for index, (n, t_hold, accel_g) in enumerate(itertools.product(self.n_shifts, holds, accels)):
            spec = GeometrySpec(self.geometry, n, t_hold_us=t_hold, accel=accel_g * self.lattice.g0,
                                t_acc_us=self.t_acc_us)
            if self.t_hold_us:
                label, value = f"t_hold_us={t_hold:g}", t_hold
            elif self.accel_g:
                label, value = f"accel_g={accel_g:g}", accel_g
            else:
                label, value = f"n={n}", float(n)
            points.append(SweepPoint(index, n, label, value, build_geometry(spec, self.timing), spec, t_hold, accel_g))
        return points

# --- Loading ---

def _lattice(raw: Dict[str, Any]) -> LatticeConfig:
    sec = _section(raw, "lattice", required=False)
    defaults = LatticeConfig()
    try:
        return LatticeConfig(
            wavelength=_number(sec, "lattice", "wavelength_nm", defaults.wavelength * 1e9) * 1e-9,
            rayleigh=_number(sec, "lattice", "rayleigh_length_mm", defaults.rayleigh * 1e3) * 1e-3,
            mass=_number(sec, "lattice", "mass_amu", defaults.mass / AMU) * AMU,
            g0=_number(sec, "lattice", "g0_m_s2", defaults.g0),
        )
    except ValueError as e:
        raise ConfigError(str(e), "lattice") from None


def _timing(raw: Dict[str, Any]) -> TimingParams:
    sec = _section(raw, "timing", required=False)
    defaults = TimingParams()
    try:
        return TimingParams(
            tau_S_us=_number(sec, "timing", "tau_S_us", defaults.tau_S_us),
            tau_pi_us=_number(sec, "timing", "tau_pi_us", defaults.tau_pi_us),
            tau_pi2_us=_number(sec, "timing", "tau_pi2_us"),
        )
    except ValueError as e:
        raise ConfigError(str(e), "timing") from None


def _potential(raw: Dict[str, Any], lattice: LatticeConfig) -> Optional[PotentialModel]:
    sec = _section(raw, "potential")
    kind = _get(sec, "potential", "kind", required=True)
    if kind not in POTENTIALS:
        raise ConfigError(f"unknown potential kind {kind!r}, expected one of {POTENTIALS}", "potential.kind")
    if kind == "none":
        return None
    if kind == "linear":
        if "gradient_J_per_m" in sec:
            return LinearGradient(_number(sec, "potential", "gradient_J_per_m"))
        f_hz = _number(sec, "potential", "gradient_hz_per_site", required=True)
        return LinearGradient.from_frequency(f_hz, lattice.d)

    x_focus = _number(sec, "potential", "x_focus_um", required=True) * 1e-6
    try:
        if "U0_J" in sec:
            return GaussianBeamAxial(_number(sec, "potential", "U0_J"), x_focus, lattice.rayleigh)
        f_hz = _number(sec, "potential", "gradient_hz_per_site", required=True)
        x0 = _number(sec, "potential", "x0_um", 0.0) * 1e-6
        return GaussianBeamAxial.from_gradient(LinearGradient.from_frequency(f_hz, lattice.d).gradU,
                                               x_focus, lattice.rayleigh, x0)
    except ValueError as e:
        raise ConfigError(str(e), "potential") from None


def _decoherence(raw: Dict[str, Any]) -> DecoherenceParams:
    sec = _section(raw, "decoherence", required=False)
    if sec.get("ideal"):
        return DecoherenceParams.ideal()
    defaults = DecoherenceParams()
    keys = ("kappa_idle", "f_shift", "kappa_extra", "T_hold_gauss_us", "gamma_loss", "C0")
    try:
        return DecoherenceParams(**{k: _number(sec, "decoherence", k, getattr(defaults, k)) for k in keys})
    except ValueError as e:
        raise ConfigError(str(e), "decoherence") from None


def _positive_int(sec: Dict[str, Any], prefix: str, key: str) -> int:
    value = _get(sec, prefix, key, required=True)
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ConfigError(f"expected a positive integer, got {value!r}", f"{prefix}.{key}")
    return value


def scenario_from_dict(raw: Any, source_path: Optional[str] = None) -> Scenario:
    """Builds a Scenario, checking required keys in document order."""
    if not isinstance(raw, dict):
        raw = {}
    head = _section(raw, "scenario")
    name = _get(head, "scenario", "name", required=True)
    seed = _get(head, "scenario", "seed", required=True)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"expected a non-negative integer, got {seed!r}", "scenario.seed")

    lattice = _lattice(raw)
    timing = _timing(raw)
    potential = _potential(raw, lattice)
    decoherence = _decoherence(raw)

    meas = _section(raw, "measurement")
    phase_points = _positive_int(meas, "measurement", "phase_points")
    shots_per_point = _positive_int(meas, "measurement", "shots_per_point")

    sweep = _section(raw, "sweep")
    base_dir = os.path.dirname(os.path.abspath(source_path)) if source_path else os.getcwd()
    sequence_file = _get(sweep, "sweep", "sequence_file")
    geometry = None
    n_shifts: List[int] = []
    if sequence_file is not None:
        sequence_file = os.path.normpath(os.path.join(base_dir, sequence_file))
        if not os.path.isfile(sequence_file):
            raise ConfigError(f"file not found: {sequence_file}", "sweep.sequence_file")
    else:
        kind = _get(sweep, "sweep", "geometry", required=True)
        try:
            geometry = GeometryKind(kind)
        except ValueError:
            raise ConfigError(f"unknown geometry {kind!r}", "sweep.geometry") from None
        n_shifts = _get(sweep, "sweep", "n_shifts", required=True)
        if not isinstance(n_shifts, list):
            n_shifts = [n_shifts]
        if not n_shifts or not all(isinstance(n, int) and not isinstance(n, bool) for n in n_shifts):
            raise ConfigError("expected a non-empty list of integers", "sweep.n_shifts")

    analysis_sec = _section(raw, "analysis")
    analysis = _get(analysis_sec, "analysis", "kind", required=True)
    if analysis not in ANALYSES:
        raise ConfigError(f"unknown analysis {analysis!r}, expected one of {ANALYSES}", "analysis.kind")

    out_sec = _section(raw, "outputs", required=False)
    outputs = {k: bool(out_sec.get(k, True)) for k in OUTPUTS}

    scenario = Scenario(
        name=str(name),
        seed=seed,
        lattice=lattice,
        timing=timing,
        potential=potential,
        decoherence=decoherence,
        phase_points=phase_points,
        shots_per_point=shots_per_point,
        analysis=analysis,
        geometry=geometry,
        n_shifts=n_shifts,
        t_hold_us=_number_list(sweep, "sweep", "t_hold_us"),
        accel_g=_number_list(sweep, "sweep", "accel_g"),
        t_acc_us=_number(sweep, "sweep", "t_acc_us", 0.0),
        sequence_file=sequence_file,
        outputs=outputs,
        description=str(head.get("description", "")),
        source_path=source_path,
    )
    debug_logger.debug(f"Loaded scenario '{scenario.name}' (seed {scenario.seed}, analysis {scenario.analysis}).")
    return scenario


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}") from None
    return scenario_from_dict(raw, path)
