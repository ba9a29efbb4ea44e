import math
import os
import sys

import numpy as np
import pytest

# Ensure the src directory is in the Python path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.constants import CS133_MASS, G0, HBAR
from src.potentials import GaussianBeamAxial, LinearGradient
from src.sequence_core import (
    GeometryError,
    GeometryKind,
    GeometrySpec,
    GuardExceededError,
    InvalidSequenceError,
    LatticeConfig,
    TimingParams,
    build_geometry,
    parse_sequence,
)
from src.spacetime_paths import (
    closed_form_acceleration_phase,
    closed_form_diamond_phase,
    closed_form_hold_phase,
    compute_paths,
    gradient_equivalent_acceleration,
    max_separation,
    paths_to_csv,
    phase_integral,
    sequence_potential,
    signed_area,
    spacetime_area,
)

# --- Configuration ---
LAT = LatticeConfig()
D = LAT.d
GRADIENT = LinearGradient.from_frequency(324.5, D)
EVEN_N = list(range(2, 50, 2))


def _sd(n, **kwargs):
    return build_geometry(GeometrySpec(GeometryKind.SINGLE_DIAMOND, n, **kwargs))


def _integrated(seq, pot, x_origin=0.0):
    return phase_integral(compute_paths(seq, LAT, x_origin), sequence_potential(seq, pot, LAT))

# --- Paths ---

def test_paths_start_and_end_together():
    paths = compute_paths(_sd(12), LAT, x_origin=3e-6)
    first, last = paths.segments[0], paths.segments[-1]
    assert first.xL0 == first.xR0 == 3e-6
    assert last.xL1 == pytest.approx(last.xR1, abs=1e-18)


def test_total_duration_counts_every_block():
    seq = _sd(4)
    # two splits, four shifts, two pi pulses
    expected = (2 * 6 + 4 * 18 + 2 * 12) * 1e-6
    assert compute_paths(seq).total_duration == pytest.approx(expected, rel=1e-12)
    assert seq.total_duration == pytest.approx(expected, rel=1e-12)
    assert sum(seq.durations_us()) == pytest.approx(108.0, rel=1e-12)


def test_invalid_sequence_rejected():
    with pytest.raises(InvalidSequenceError):
        compute_paths(parse_sequence("Q(0) S+ Q(0)"))


@pytest.mark.parametrize("n,expected_um", [(12, 2.598), (48, 10.392)])
def test_max_separation(n, expected_um):
    assert max_separation(compute_paths(_sd(n))) * 1e6 == pytest.approx(expected_um, abs=1e-3)


def test_minimal_diamond_area():
    paths = compute_paths(_sd(2))
    assert spacetime_area(paths).area == pytest.approx(D * 18e-6, rel=1e-12)
    assert signed_area(paths) == pytest.approx(D * 18e-6, rel=1e-12)


@pytest.mark.parametrize("n", EVEN_N)
def test_area_matches_diamond_formula(n):
    k = n // 2
    expected = D * (k * k * 30e-6 - k * 12e-6)
    paths = compute_paths(_sd(n))
    assert spacetime_area(paths).area == pytest.approx(expected, rel=1e-12)


def test_crossing_arms_area_is_unsigned():
    seq = build_geometry(GeometrySpec(GeometryKind.DOUBLE_DIAMOND, 8))
    paths = compute_paths(seq)
    assert signed_area(paths) == pytest.approx(0.0, abs=1e-24)
    assert spacetime_area(paths).area > 0


def test_paths_to_csv():
    paths = compute_paths(_sd(4))
    lines = paths_to_csv(paths).splitlines()
    assert lines[0] == "t_s,xL_m,xR_m,spinL"
    assert len(lines) == len(paths.segments) + 2
    assert lines[1].split(",")[-1] == "up"
    assert lines[-1].split(",")[0] == f"{paths.total_duration:.12g}"

# --- Phase against closed forms ---

@pytest.mark.parametrize("n", EVEN_N)
def test_single_diamond_phase_matches_closed_form(n):
    closed = closed_form_diamond_phase(n, GRADIENT.gradU)
    assert _integrated(_sd(n), GRADIENT) == pytest.approx(closed, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("n,expected", [(2, 0.036700), (12, 2.055205), (48, 34.6449)])
def test_diamond_phase_values(n, expected):
    assert closed_form_diamond_phase(n, GRADIENT.gradU) == pytest.approx(expected, rel=1e-5)


def test_largest_diamond_wraps_about_eleven_times_pi():
    assert closed_form_diamond_phase(48, GRADIENT.gradU) / math.pi == pytest.approx(11.03, abs=0.01)


def test_closed_form_rejects_odd_n():
    with pytest.raises(GeometryError):
        closed_form_diamond_phase(3, GRADIENT.gradU)


def test_phase_is_odd_in_gradient():
    seq = _sd(20)
    assert _integrated(seq, LinearGradient(-GRADIENT.gradU)) == pytest.approx(-_integrated(seq, GRADIENT), rel=1e-12)


def test_custom_timing_enters_closed_form():
    timing = TimingParams(25.0, 8.0)
    seq = build_geometry(GeometrySpec(GeometryKind.SINGLE_DIAMOND, 16), timing)
    assert _integrated(seq, GRADIENT) == pytest.approx(closed_form_diamond_phase(16, GRADIENT.gradU, timing), rel=1e-9)


@pytest.mark.parametrize("n", [4, 8, 12, 24, 48])
def test_double_diamond_cancels_linear_gradient(n):
    seq = build_geometry(GeometrySpec(GeometryKind.DOUBLE_DIAMOND, n))
    assert abs(_integrated(seq, GRADIENT)) < 1e-9


def test_double_diamond_cancels_gaussian_beam():
    pot = GaussianBeamAxial.from_gradient(GRADIENT.gradU, -600e-6, LAT.rayleigh)
    reference = abs(_integrated(_sd(24), pot, x_origin=15e-6))
    seq = build_geometry(GeometrySpec(GeometryKind.DOUBLE_DIAMOND, 24))
    assert abs(_integrated(seq, pot, x_origin=15e-6)) < 1e-3 * reference


def test_gaussian_beam_close_to_linearized_phase():
    pot = GaussianBeamAxial.from_gradient(GRADIENT.gradU, -600e-6, LAT.rayleigh)
    assert _integrated(_sd(12), pot) == pytest.approx(closed_form_diamond_phase(12, GRADIENT.gradU), rel=1e-3)

# --- Hold ---

@pytest.mark.parametrize("t_hold_us,expected", [(300.0, 1.223336), (1000.0, 4.077787)])
def test_hold_phase_values(t_hold_us, expected):
    assert closed_form_hold_phase(4, GRADIENT.gradU, t_hold_us * 1e-6) == pytest.approx(expected, rel=1e-5)


@pytest.mark.parametrize("n,t_hold_us", [(4, 100.0), (4, 600.0), (8, 300.0), (12, 1400.0)])
def test_hold_phase_is_additive(n, t_hold_us):
    seq = build_geometry(GeometrySpec(GeometryKind.HOLD_DIAMOND, n, t_hold_us=t_hold_us))
    closed = closed_form_diamond_phase(n, GRADIENT.gradU) + closed_form_hold_phase(n, GRADIENT.gradU, t_hold_us * 1e-6)
    assert _integrated(seq, GRADIENT) == pytest.approx(closed, rel=1e-9)


def test_hold_phase_rejects_negative_time():
    with pytest.raises(ValueError):
        closed_form_hold_phase(4, GRADIENT.gradU, -1e-6)

# --- Acceleration ---

@pytest.mark.parametrize("n,t_acc,expected", [(20, 100e-6, 8.88636), (4, 20e-6, 0.355455)])
def test_acceleration_phase_values(n, t_acc, expected):
    assert closed_form_acceleration_phase(n, CS133_MASS, G0, t_acc) == pytest.approx(expected, rel=1e-5)


@pytest.mark.parametrize("n,accel_g", [(4, 1.0), (12, 3.0), (20, 5.0), (20, -2.0)])
def test_accel_diamond_matches_closed_form(n, accel_g):
    seq = build_geometry(GeometrySpec(GeometryKind.ACCEL_DIAMOND, n, accel=accel_g * G0, t_acc_us=20.0))
    closed = closed_form_acceleration_phase(n, CS133_MASS, accel_g * G0, 20e-6)
    assert _integrated(seq, None) == pytest.approx(closed, rel=1e-9)


def test_accel_diamond_without_window_has_no_phase():
    seq = build_geometry(GeometrySpec(GeometryKind.ACCEL_DIAMOND, 8, accel=G0, t_acc_us=0.0))
    assert _integrated(seq, None) == 0.0


def test_acceleration_guard_in_closed_form():
    with pytest.raises(GuardExceededError):
        closed_form_acceleration_phase(4, CS133_MASS, 5e4, 20e-6)


def test_gradient_equivalent_acceleration():
    assert gradient_equivalent_acceleration(GRADIENT.gradU, CS133_MASS, G0) == pytest.approx(0.229441, rel=1e-3)
    assert GRADIENT.gradU * D / HBAR == pytest.approx(2 * math.pi * 324.5, rel=1e-12)
    with pytest.raises(ValueError):
        gradient_equivalent_acceleration(1e-25, 0.0, G0)


def test_phase_integral_rejects_non_finite_potential():
    pot = GaussianBeamAxial(np.inf, 0.0, LAT.rayleigh)
    with pytest.raises(FloatingPointError):
        _integrated(_sd(4), pot)
