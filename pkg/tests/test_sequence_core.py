import os
import sys

import pytest

# Ensure the src directory is in the Python path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.sequence_core import (
    AccelWindow,
    BlockKind,
    GeometryError,
    GeometryKind,
    GeometrySpec,
    GuardExceededError,
    Idle,
    InvalidSequenceError,
    PiPulse,
    Sequence,
    SequenceSyntaxError,
    Shift,
    Split,
    TimingParams,
    build_geometry,
    load_sequence_file,
    parse_sequence,
    random_valid_sequence,
    require_valid,
    serialize_sequence,
    validate_sequence,
    walk_arms,
)

# --- Configuration ---
DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data", "sequences")
EVEN_N = list(range(2, 50, 2))


def _separations(seq):
    return [step.left[1] - step.right[1] for step in walk_arms(seq)]

# --- Parser ---

def test_parse_minimal_diamond():
    seq = parse_sequence("Q(0) S+ S- Q(1.57)")
    assert seq.blocks == (Split(0.0), Shift(1), Shift(-1), Split(1.57))
    assert seq.timing == TimingParams()


def test_parse_four_shift_program_matches_generator():
    seq = parse_sequence("Q(0) S+ P S- S+ P S- Q(0)")
    assert len(seq) == 8
    assert seq.n_shifts == 4
    assert seq.blocks == build_geometry(GeometrySpec(GeometryKind.SINGLE_DIAMOND, 4)).blocks


def test_unknown_token_reports_position():
    with pytest.raises(SequenceSyntaxError) as err:
        parse_sequence("Q(0) S+ X")
    assert err.value.token_index == 3
    assert err.value.line == 1
    assert err.value.column == 9
    assert "token 3" in str(err.value)


def test_header_and_comments():
    text = "# a comment\ntiming tau_S=20 tau_pi=10 tau_pi2=4\nQ(0) I(50) # idle\nS+ S- Q(0)\n"
    seq = parse_sequence(text)
    assert seq.timing == TimingParams(20.0, 10.0, 4.0)
    assert seq.kinds() == [BlockKind.SPLIT, BlockKind.IDLE, BlockKind.SHIFT, BlockKind.SHIFT, BlockKind.SPLIT]
    assert seq.blocks[1] == Idle(50.0)


@pytest.mark.parametrize("text", ["Q(0) I(0) Q(0)", "Q(0) A(9.8,-3) Q(0)", "timing tau_S=0 tau_pi=12\nQ(0)"])
def test_non_positive_durations_rejected(text):
    with pytest.raises(SequenceSyntaxError, match="non-positive"):
        parse_sequence(text)


def test_header_after_blocks_rejected():
    with pytest.raises(SequenceSyntaxError) as err:
        parse_sequence("Q(0)\ntiming tau_S=18 tau_pi=12")
    assert err.value.line == 2


def test_load_sequence_file():
    seq = load_sequence_file(os.path.join(DATA_DIR, "single_diamond_n12.dai"))
    assert seq.blocks == build_geometry(GeometrySpec("SingleDiamond", 12)).blocks

# --- Serializer ---

def test_serialize_ramsey_pair():
    assert serialize_sequence(Sequence((Split(0.0), Split(0.0)))) == "Q(0) Q(0)"


def test_serialize_generated_diamond():
    assert serialize_sequence(build_geometry(GeometrySpec(GeometryKind.SINGLE_DIAMOND, 2))) == "Q(0) S+ S- Q(0)"


def test_serialize_writes_header_only_for_custom_timing():
    seq = Sequence((Split(0.0), AccelWindow(49.033, 5.0), Split(0.25)), TimingParams(20.0, 8.0))
    text = serialize_sequence(seq)
    assert text.splitlines()[0] == "timing tau_S=20 tau_pi=8"
    assert parse_sequence(text) == seq


def test_random_sequences_round_trip():
    for seed in range(1000):
        seq = random_valid_sequence(seed, n_body=100)
        assert validate_sequence(seq).ok, seed
        assert parse_sequence(serialize_sequence(seq)) == seq, seed

# --- Validation ---

def test_valid_minimal_diamond():
    assert validate_sequence(parse_sequence("Q(0) S+ S- Q(0)")).ok


def test_unbalanced_shifts_reported():
    report = validate_sequence(parse_sequence("Q(0) S+ Q(0)"))
    assert report.codes() == ["unrecombined"]
    assert "2 half-step units" in report.violations[0].message
    assert "(1 lattice site)" in report.violations[0].message
    wide = validate_sequence(parse_sequence("Q(0) S+ S+ Q(0)"))
    assert "(2 lattice sites)" in wide.violations[0].message


def test_guard_violation_reported_with_index():
    seq = Sequence((Split(0.0), Shift(1), AccelWindow(6e4, 20.0), Shift(-1), Split(0.0)))
    report = validate_sequence(seq)
    assert report.codes() == ["guard_exceeded"]
    assert report.violations[0].index == 2


def test_all_violations_listed():
    seq = Sequence((Shift(1), Split(0.0), AccelWindow(-7e4, 1.0), PiPulse()))
    codes = validate_sequence(seq).codes()
    assert set(codes) == {"missing_ramsey_open", "missing_ramsey_close", "inner_split", "guard_exceeded", "unrecombined"}


def test_empty_sequence():
    assert validate_sequence(Sequence(())).codes() == ["empty"]


def test_require_valid_raises_with_violations():
    with pytest.raises(InvalidSequenceError) as err:
        require_valid(load_sequence_file(os.path.join(DATA_DIR, "unbalanced.dai")))
    assert err.value.violations[0].code == "unrecombined"


def test_block_invariants():
    with pytest.raises(ValueError):
        Shift(0)
    with pytest.raises(ValueError):
        Idle(-1.0)
    with pytest.raises(ValueError):
        TimingParams(tau_pi_us=0.0)

# --- Geometries ---

def test_single_diamond_n2_and_n4():
    assert serialize_sequence(build_geometry(GeometrySpec("SingleDiamond", 2))) == "Q(0) S+ S- Q(0)"
    seq = build_geometry(GeometrySpec("SingleDiamond", 4))
    assert seq.kinds() == [BlockKind.SPLIT, BlockKind.SHIFT, BlockKind.PI_PULSE, BlockKind.SHIFT,
                           BlockKind.SHIFT, BlockKind.PI_PULSE, BlockKind.SHIFT, BlockKind.SPLIT]


@pytest.mark.parametrize("n", EVEN_N)
def test_single_diamond_structure(n):
    seq = build_geometry(GeometrySpec(GeometryKind.SINGLE_DIAMOND, n, probe_phase=0.3))
    assert validate_sequence(seq).ok
    assert seq.n_shifts == n
    assert seq.count(BlockKind.PI_PULSE) == n - 2
    assert seq.blocks[-1] == Split(0.3)
    separations = _separations(seq)
    assert max(separations) == n  # half-steps, i.e. (n/2) d
    assert min(separations) >= 0
    # no pi pulse at the apex
    apex = separations.index(n)
    assert seq.blocks[apex + 1].kind is BlockKind.SHIFT


@pytest.mark.parametrize("n", [4, 8, 12, 24, 48])
def test_double_diamond_mirror_symmetric(n):
    seq = build_geometry(GeometrySpec(GeometryKind.DOUBLE_DIAMOND, n))
    assert validate_sequence(seq).ok
    kinds = seq.kinds()
    assert kinds == kinds[::-1]
    # separations at every block boundary, starting before the first block
    boundaries = [0] + _separations(seq)
    assert [abs(s) for s in boundaries] == [abs(s) for s in boundaries[::-1]]
    separations = boundaries[1:]
    assert max(separations) == n // 2 and min(separations) == -(n // 2)
    assert seq.count(BlockKind.PI_PULSE) == n - 3


def test_double_diamond_program_text():
    seq = build_geometry(GeometrySpec(GeometryKind.DOUBLE_DIAMOND, 4))
    assert serialize_sequence(seq) == "Q(0) S+ S- P S+ S- Q(0)"
    assert [0] + _separations(seq) == [0, 0, 2, 0, 0, -2, 0, 0]


def test_double_diamond_needs_multiple_of_four():
    with pytest.raises(GeometryError):
        GeometrySpec(GeometryKind.DOUBLE_DIAMOND, 6)


@pytest.mark.parametrize("spec_args", [(3,), (0,), (-2,)])
def test_invalid_shift_counts(spec_args):
    with pytest.raises(GeometryError):
        GeometrySpec(GeometryKind.SINGLE_DIAMOND, *spec_args)


def test_negative_hold_rejected():
    with pytest.raises(GeometryError):
        GeometrySpec(GeometryKind.HOLD_DIAMOND, 4, t_hold_us=-1.0)


def test_hold_zero_equals_single_diamond():
    hold = build_geometry(GeometrySpec(GeometryKind.HOLD_DIAMOND, 4, t_hold_us=0.0))
    assert hold.blocks == build_geometry(GeometrySpec(GeometryKind.SINGLE_DIAMOND, 4)).blocks


def test_hold_diamond_apex():
    seq = build_geometry(GeometrySpec(GeometryKind.HOLD_DIAMOND, 4, t_hold_us=400.0))
    assert serialize_sequence(seq) == "Q(0) S+ P S- I(94) P I(188) P I(94) S+ P S- Q(0)"
    assert load_sequence_file(os.path.join(DATA_DIR, "hold_echo_n4.dai")).blocks[:-1] == seq.blocks[:-1]
    assert validate_sequence(seq).ok


def test_hold_shorter_than_echo_pulses_rejected():
    with pytest.raises(GeometryError):
        build_geometry(GeometrySpec(GeometryKind.HOLD_DIAMOND, 4, t_hold_us=10.0))


def test_hold_exactly_two_pulses_has_no_idles():
    seq = build_geometry(GeometrySpec(GeometryKind.HOLD_DIAMOND, 2, t_hold_us=24.0))
    assert serialize_sequence(seq) == "Q(0) S+ P P S- Q(0)"


def test_accel_diamond():
    seq = build_geometry(GeometrySpec(GeometryKind.ACCEL_DIAMOND, 4, accel=9.8, t_acc_us=20.0))
    assert validate_sequence(seq).ok
    windows = [b for b in seq.blocks if b.kind is BlockKind.ACCEL_WINDOW]
    assert [w.duration for w in windows] == [5.0, 10.0, 5.0]
    assert all(w.accel == 9.8 for w in windows)
    # windows sit at full (negative) separation
    for step in walk_arms(seq):
        if step.block.kind is BlockKind.ACCEL_WINDOW:
            assert step.left[0] - step.right[0] == -4


def test_accel_guard():
    with pytest.raises(GuardExceededError):
        build_geometry(GeometrySpec(GeometryKind.ACCEL_DIAMOND, 4, accel=5e4, t_acc_us=20.0))


@pytest.mark.parametrize("kind", list(GeometryKind))
def test_every_generated_geometry_validates(kind):
    for n in (4, 8, 12, 20, 48):
        spec = GeometrySpec(kind, n, t_hold_us=300.0, accel=49.0, t_acc_us=20.0, probe_phase=1.0)
        assert validate_sequence(build_geometry(spec, TimingParams(18.0, 12.0))).ok
