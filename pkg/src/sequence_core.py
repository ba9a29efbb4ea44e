import logging
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import ClassVar, Iterator, List, Optional, Tuple, Union

import numpy as np

from src.constants import (
    CRITICAL_ACCELERATION,
    CS133_MASS,
    G0,
    LATTICE_WAVELENGTH,
    RAYLEIGH_LENGTH,
    TAU_PI_US,
    TAU_SHIFT_US,
)

debug_logger = logging.getLogger("debug")

US = 1e-6

# --- Errors ---

class SequenceSyntaxError(ValueError):
    """Raised by the DSL parser; carries the position of the offending token."""

    def __init__(self, message: str, line: int, column: int, token_index: Optional[int] = None):
        self.line = line
        self.column = column
        self.token_index = token_index
        where = f"line {line}, column {column}"
        if token_index is not None:
            where += f" (token {token_index})"
        super().__init__(f"{message} at {where}")


class GeometryError(ValueError):
    pass


class GuardExceededError(GeometryError):
    """Acceleration at or above the Landau-Zener guard."""


class InvalidSequenceError(ValueError):
    def __init__(self, violations: List["Violation"]):
        self.violations = list(violations)
        super().__init__("; ".join(v.message for v in self.violations))


def check_acceleration_guard(accel: float) -> None:
    if not abs(accel) < CRITICAL_ACCELERATION:
        raise GuardExceededError(
            f"|a| = {abs(accel):g} m/s^2 exceeds the Landau-Zener guard of {CRITICAL_ACCELERATION:g} m/s^2"
        )

# --- Configuration types ---

@dataclass(frozen=True)
class TimingParams:
    """Block durations in microseconds; the `tau_*` properties give seconds."""
    tau_S_us: float = TAU_SHIFT_US
    tau_pi_us: float = TAU_PI_US
    tau_pi2_us: Optional[float] = None

    def __post_init__(self):
        if self.tau_pi2_us is None:
            object.__setattr__(self, "tau_pi2_us", self.tau_pi_us / 2)
        for name in ("tau_S_us", "tau_pi_us", "tau_pi2_us"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value}")

    @property
    def tau_S(self) -> float:
        return self.tau_S_us * US

    @property
    def tau_pi(self) -> float:
        return self.tau_pi_us * US

    @property
    def tau_pi2(self) -> float:
        return self.tau_pi2_us * US

    def is_default(self) -> bool:
        return self == TimingParams()


@dataclass(frozen=True)
class LatticeConfig:
    wavelength: float = LATTICE_WAVELENGTH
    rayleigh: float = RAYLEIGH_LENGTH
    mass: float = CS133_MASS
    g0: float = G0

    def __post_init__(self):
        for name in ("wavelength", "rayleigh", "mass", "g0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"LatticeConfig.{name} must be positive")

    @property
    def d(self) -> float:
        """Lattice spacing, always half the lattice wavelength."""
        return self.wavelength / 2

    @property
    def half_step(self) -> float:
        return self.d / 2

# --- Blocks ---

class BlockKind(Enum):
    SPLIT = "Q"
    SHIFT = "S"
    PI_PULSE = "P"
    IDLE = "I"
    ACCEL_WINDOW = "A"


def _require_finite(value: float, name: str) -> None:
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")


def _require_positive(value: float, name: str) -> None:
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be strictly positive, got {value}")


@dataclass(frozen=True)
class Split:
    """pi/2 pulse; phase-neutral, lasts tau_pi2."""
    probe_phase: float = 0.0
    kind: ClassVar[BlockKind] = BlockKind.SPLIT

    def __post_init__(self):
        _require_finite(self.probe_phase, "probe_phase")

    def duration_us(self, timing: TimingParams) -> float:
        return timing.tau_pi2_us


@dataclass(frozen=True)
class Shift:
    direction: int
    kind: ClassVar[BlockKind] = BlockKind.SHIFT

    def __post_init__(self):
        if self.direction not in (1, -1):
            raise ValueError(f"Shift direction must be +1 or -1, got {self.direction}")

    def duration_us(self, timing: TimingParams) -> float:
        return timing.tau_S_us


@dataclass(frozen=True)
class PiPulse:
    kind: ClassVar[BlockKind] = BlockKind.PI_PULSE

    def duration_us(self, timing: TimingParams) -> float:
        return timing.tau_pi_us


@dataclass(frozen=True)
class Idle:
    duration: float  # microseconds
    kind: ClassVar[BlockKind] = BlockKind.IDLE

    def __post_init__(self):
        _require_positive(self.duration, "Idle duration")

    def duration_us(self, timing: TimingParams) -> float:
        return self.duration


@dataclass(frozen=True)
class AccelWindow:
    accel: float     # m/s^2, lattice frame
    duration: float  # microseconds
    kind: ClassVar[BlockKind] = BlockKind.ACCEL_WINDOW

    def __post_init__(self):
        _require_finite(self.accel, "accel")
        _require_positive(self.duration, "AccelWindow duration")

    def duration_us(self, timing: TimingParams) -> float:
        return self.duration


Block = Union[Split, Shift, PiPulse, Idle, AccelWindow]


@dataclass(frozen=True)
class Sequence:
    blocks: Tuple[Block, ...]
    timing: TimingParams = field(default_factory=TimingParams)

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))

    def __len__(self) -> int:
        return len(self.blocks)

    def count(self, kind: BlockKind) -> int:
        return sum(1 for b in self.blocks if b.kind is kind)

    @property
    def n_shifts(self) -> int:
        return self.count(BlockKind.SHIFT)

    def durations_us(self) -> List[float]:
        return [b.duration_us(self.timing) for b in self.blocks]

    @property
    def total_duration(self) -> float:
        return sum(self.durations_us()) * US

    def kinds(self) -> List[BlockKind]:
        return [b.kind for b in self.blocks]

# --- Arm bookkeeping ---

UP, DOWN = 1, -1


@dataclass(frozen=True)
class ArmStep:
    """One block's effect on both arms, positions in integer half-steps (d/2)."""
    index: int
    block: Block
    t0_us: float
    t1_us: float
    left: Tuple[int, int]
    right: Tuple[int, int]
    spin_left: int
    spin_right: int


def walk_arms(seq: Sequence) -> Iterator[ArmStep]:
    """Tracks both arms block by block. The left arm starts in the up state.

    A Shift moves the up-labelled arm by +direction and the down-labelled arm by
    -direction half-steps; a PiPulse exchanges the labels at its end boundary.
    """
    p_left, p_right = 0, 0
    spin_left, spin_right = UP, DOWN
    t_us = 0.0
    for index, block in enumerate(seq.blocks):
        t1_us = t_us + block.duration_us(seq.timing)
        n_left, n_right = p_left, p_right
        if block.kind is BlockKind.SHIFT:
            n_left += block.direction * spin_left
            n_right += block.direction * spin_right
        yield ArmStep(index, block, t_us, t1_us, (p_left, n_left), (p_right, n_right), spin_left, spin_right)
        if block.kind is BlockKind.PI_PULSE:
            spin_left, spin_right = spin_right, spin_left
        p_left, p_right = n_left, n_right
        t_us = t1_us

# --- DSL ---

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_TOKEN_PATTERNS = [
    (re.compile(rf"^Q\(({_NUM})\)$"), "Q"),
    (re.compile(r"^S\+$"), "S+"),
    (re.compile(r"^S-$"), "S-"),
    (re.compile(r"^P$"), "P"),
    (re.compile(rf"^I\(({_NUM})\)$"), "I"),
    (re.compile(rf"^A\(({_NUM}),({_NUM})\)$"), "A"),
]
_HEADER_KEYS = {"tau_S": "tau_S_us", "tau_pi": "tau_pi_us", "tau_pi2": "tau_pi2_us"}


def _parse_header(fields: List[Tuple[str, int]], line_no: int) -> TimingParams:
    values = {}
    for text, column in fields:
        key, sep, raw = text.partition("=")
        if not sep or key not in _HEADER_KEYS:
            raise SequenceSyntaxError(f"unknown timing field '{text}'", line_no, column)
        if not re.fullmatch(_NUM, raw):
            raise SequenceSyntaxError(f"invalid number '{raw}' for {key}", line_no, column)
        value = float(raw)
        if not value > 0:
            raise SequenceSyntaxError(f"non-positive duration {key}={raw}", line_no, column)
        values[_HEADER_KEYS[key]] = value
    return TimingParams(**values)


def _parse_token(text: str, line_no: int, column: int, index: int) -> Block:
    for pattern, tag in _TOKEN_PATTERNS:
        match = pattern.match(text)
        if not match:
            continue
        if tag == "Q":
            return Split(float(match.group(1)))
        if tag == "S+":
            return Shift(+1)
        if tag == "S-":
            return Shift(-1)
        if tag == "P":
            return PiPulse()
        if tag == "I":
            duration = float(match.group(1))
            if not duration > 0:
                raise SequenceSyntaxError(f"non-positive duration in '{text}'", line_no, column, index)
            return Idle(duration)
        accel, duration = float(match.group(1)), float(match.group(2))
        if not duration > 0:
            raise SequenceSyntaxError(f"non-positive duration in '{text}'", line_no, column, index)
        return AccelWindow(accel, duration)
    raise SequenceSyntaxError(f"unknown token '{text}'", line_no, column, index)


def parse_sequence(text: str) -> Sequence:
    """Parses the flat token DSL.

    Grammar: an optional `timing tau_S=<us> tau_pi=<us> [tau_pi2=<us>]` header
    line, then whitespace-separated tokens `Q(<rad>)`, `S+`, `S-`, `P`,
    `I(<us>)`, `A(<m/s^2>,<us>)`. `#` starts a line comment.
    """
    timing = None
    blocks: List[Block] = []
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0]
        words = [(m.group(0), m.start() + 1) for m in re.finditer(r"\S+", line)]
        if not words:
            continue
        if words[0][0] == "timing":
            if blocks:
                raise SequenceSyntaxError("timing header after the first block", line_no, words[0][1])
            if timing is not None:
                raise SequenceSyntaxError("duplicate timing header", line_no, words[0][1])
            timing = _parse_header(words[1:], line_no)
            continue
        for word, column in words:
            blocks.append(_parse_token(word, line_no, column, len(blocks) + 1))
    seq = Sequence(tuple(blocks), timing or TimingParams())
    debug_logger.debug(f"Parsed sequence with {len(seq)} blocks ({seq.n_shifts} shifts).")
    return seq


def _fmt(value: float) -> str:
    value = float(value)
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _block_token(block: Block) -> str:
    if block.kind is BlockKind.SPLIT:
        return f"Q({_fmt(block.probe_phase)})"
    if block.kind is BlockKind.SHIFT:
        return "S+" if block.direction > 0 else "S-"
    if block.kind is BlockKind.PI_PULSE:
        return "P"
    if block.kind is BlockKind.IDLE:
        return f"I({_fmt(block.duration)})"
    return f"A({_fmt(block.accel)},{_fmt(block.duration)})"


def serialize_sequence(seq: Sequence) -> str:
    body = " ".join(_block_token(b) for b in seq.blocks)
    if seq.timing.is_default():
        return body
    t = seq.timing
    header = f"timing tau_S={_fmt(t.tau_S_us)} tau_pi={_fmt(t.tau_pi_us)}"
    if t.tau_pi2_us != t.tau_pi_us / 2:
        header += f" tau_pi2={_fmt(t.tau_pi2_us)}"
    return f"{header}\n{body}"


def load_sequence_file(path: str) -> Sequence:
    with open(path, "r", encoding="utf-8") as f:
        return parse_sequence(f.read())

# --- Validation ---

@dataclass(frozen=True)
class Violation:
    index: Optional[int]
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: Tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> List[str]:
        return [v.code for v in self.violations]


def validate_sequence(seq: Sequence) -> ValidationReport:
    """Returns every violation: Ramsey pair, inner splits, guards, recombination."""
    if not seq.blocks:
        return ValidationReport((Violation(None, "empty", "sequence has no blocks"),))

    violations: List[Violation] = []
    first, last = seq.blocks[0], seq.blocks[-1]
    if first.kind is not BlockKind.SPLIT or first.probe_phase != 0:
        violations.append(Violation(0, "missing_ramsey_open", "block 0: sequence must open with Q(0)"))
    if len(seq.blocks) < 2 or last.kind is not BlockKind.SPLIT:
        violations.append(Violation(len(seq.blocks) - 1, "missing_ramsey_close",
                                    f"block {len(seq.blocks) - 1}: sequence must close with Q(phase)"))
    for i, block in enumerate(seq.blocks):
        if block.kind is BlockKind.SPLIT and 0 < i < len(seq.blocks) - 1:
            violations.append(Violation(i, "inner_split", f"block {i}: split pulse inside the interferometer body"))
        elif block.kind is BlockKind.ACCEL_WINDOW and not abs(block.accel) < CRITICAL_ACCELERATION:
            violations.append(Violation(
                i, "guard_exceeded",
                f"block {i}: |a| = {abs(block.accel):g} m/s^2 exceeds the Landau-Zener guard of "
                f"{CRITICAL_ACCELERATION:g} m/s^2"))

    final = None
    for final in walk_arms(seq):
        pass
    separation = final.left[1] - final.right[1]
    if separation != 0:
        sites = abs(separation) / 2
        violations.append(Violation(
            len(seq.blocks) - 1, "unrecombined",
            f"arms end separated by {abs(separation)} half-step units "
            f"({sites:g} lattice site{'' if sites == 1 else 's'})"))
    return ValidationReport(tuple(violations))


def require_valid(seq: Sequence) -> None:
    report = validate_sequence(seq)
    if not report.ok:
        raise InvalidSequenceError(list(report.violations))

# --- Geometry generators ---

class GeometryKind(Enum):
    SINGLE_DIAMOND = "SingleDiamond"
    DOUBLE_DIAMOND = "DoubleDiamond"
    HOLD_DIAMOND = "HoldDiamond"
    ACCEL_DIAMOND = "AccelDiamond"


@dataclass(frozen=True)
class GeometrySpec:
    """Parameters of a generated interferometer.

    `orientation` is the sign of the first loop's separation x_L - x_R. It
    defaults to +1, except for AccelDiamond where -1 makes the lattice-frame
    pseudo-potential -m*a*x produce a positive phase for positive a.
    """
    kind: GeometryKind
    n_shifts: int
    t_hold_us: float = 0.0
    accel: float = 0.0
    t_acc_us: float = 0.0
    probe_phase: float = 0.0
    orientation: Optional[int] = None

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", GeometryKind(self.kind))
        n = self.n_shifts
        if not isinstance(n, (int, np.integer)) or n < 2 or n % 2:
            raise GeometryError(f"n_shifts must be an even integer >= 2, got {n}")
        if self.kind is GeometryKind.DOUBLE_DIAMOND and n % 4:
            raise GeometryError(f"DoubleDiamond needs n_shifts divisible by 4, got {n}")
        if not self.t_hold_us >= 0 or not self.t_acc_us >= 0:
            raise GeometryError("hold and acceleration times must be non-negative")
        _require_finite(self.probe_phase, "probe_phase")
        _require_finite(self.accel, "accel")
        if self.orientation is None:
            default = -1 if self.kind is GeometryKind.ACCEL_DIAMOND else 1
            object.__setattr__(self, "orientation", default)
        if self.orientation not in (1, -1):
            raise GeometryError(f"orientation must be +1 or -1, got {self.orientation}")


def _diamond_body(k: int, orientation: int, spin_left: int, apex: List[Block]) -> Tuple[List[Block], int]:
    """k shifts out and k back; pi pulses sit between same-direction shift pairs, none at the apex."""
    blocks: List[Block] = []
    for _ in range(k - 1):
        blocks.append(Shift(orientation * spin_left))
        blocks.append(PiPulse())
        spin_left = -spin_left
    blocks.append(Shift(orientation * spin_left))
    blocks.extend(apex)
    if sum(1 for b in apex if b.kind is BlockKind.PI_PULSE) % 2:
        spin_left = -spin_left
    blocks.append(Shift(-orientation * spin_left))
    for _ in range(k - 1):
        blocks.append(PiPulse())
        spin_left = -spin_left
        blocks.append(Shift(-orientation * spin_left))
    return blocks, spin_left


def _hold_apex(t_hold_us: float, timing: TimingParams) -> List[Block]:
    """Double spin echo filling t_hold, pulses centred at t_hold/4 and 3*t_hold/4."""
    if t_hold_us == 0:
        return []
    if t_hold_us < 2 * timing.tau_pi_us:
        raise GeometryError(
            f"t_hold = {t_hold_us:g} us cannot hold two pi pulses of {timing.tau_pi_us:g} us")
    edge = t_hold_us / 4 - timing.tau_pi_us / 2
    middle = t_hold_us / 2 - timing.tau_pi_us
    apex: List[Block] = []
    if edge > 0:
        apex.append(Idle(edge))
    apex.append(PiPulse())
    if middle > 0:
        apex.append(Idle(middle))
    apex.append(PiPulse())
    if edge > 0:
        apex.append(Idle(edge))
    return apex


def _accel_apex(accel: float, t_acc_us: float) -> List[Block]:
    if t_acc_us == 0:
        return []
    return [AccelWindow(accel, t_acc_us / 4), PiPulse(), AccelWindow(accel, t_acc_us / 2),
            PiPulse(), AccelWindow(accel, t_acc_us / 4)]


def build_geometry(spec: GeometrySpec, timing: Optional[TimingParams] = None) -> Sequence:
    timing = timing or TimingParams()
    k = spec.n_shifts // 2
    sigma = spec.orientation

    if spec.kind is GeometryKind.SINGLE_DIAMOND:
        body, _ = _diamond_body(k, sigma, UP, [])
    elif spec.kind is GeometryKind.DOUBLE_DIAMOND:
        first, spin = _diamond_body(k // 2, sigma, UP, [])
        second, _ = _diamond_body(k // 2, -sigma, -spin, [])
        body = first + [PiPulse()] + second
    elif spec.kind is GeometryKind.HOLD_DIAMOND:
        body, _ = _diamond_body(k, sigma, UP, _hold_apex(spec.t_hold_us, timing))
    else:
        check_acceleration_guard(spec.accel)
        body, _ = _diamond_body(k, sigma, UP, _accel_apex(spec.accel, spec.t_acc_us))

    seq = Sequence(tuple([Split(0.0)] + body + [Split(spec.probe_phase)]), timing)
    debug_logger.debug(f"Built {spec.kind.value}(n={spec.n_shifts}) with {len(seq)} blocks.")
    return seq


def random_valid_sequence(seed: int, n_body: int = 100, timing: Optional[TimingParams] = None) -> Sequence:
    """Seeded random program that always passes validate_sequence."""
    rng = np.random.default_rng(seed)
    if timing is None and rng.random() < 0.3:
        timing = TimingParams(float(rng.uniform(1, 50)), float(rng.uniform(1, 30)))
    timing = timing or TimingParams()

    blocks: List[Block] = [Split(0.0)]
    spin_left, separation = UP, 0
    for _ in range(n_body):
        choice = rng.integers(4)
        if choice == 0:
            direction = int(rng.choice([1, -1]))
            blocks.append(Shift(direction))
            separation += 2 * direction * spin_left
        elif choice == 1:
            blocks.append(PiPulse())
            spin_left = -spin_left
        elif choice == 2:
            blocks.append(Idle(float(rng.uniform(0.5, 500.0))))
        else:
            accel = float(rng.uniform(-0.9, 0.9) * CRITICAL_ACCELERATION)
            blocks.append(AccelWindow(accel, float(rng.uniform(0.5, 100.0))))
    while separation != 0:
        direction = -spin_left if separation > 0 else spin_left
        blocks.append(Shift(direction))
        separation += 2 * direction * spin_left
    blocks.append(Split(float(rng.uniform(-math.pi, math.pi))))
    return Sequence(tuple(blocks), timing)
