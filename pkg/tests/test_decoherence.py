import math
import os
import sys

import numpy as np
import pytest

# Ensure the src directory is in the Python path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.decoherence import (
    DecoherenceParams,
    contrast_budget,
    echo_time,
    hold_echo_contrast,
    predict_contrast,
)
from src.sequence_core import GeometryKind, GeometrySpec, build_geometry, parse_sequence

PARAMS = DecoherenceParams()


def _sd(n):
    return build_geometry(GeometrySpec(GeometryKind.SINGLE_DIAMOND, n))


def test_per_shift_factor():
    assert PARAMS.per_shift_factor == pytest.approx(0.994 * 0.99 ** 2 * 0.983, rel=1e-12)
    assert PARAMS.per_shift_factor == pytest.approx(0.9576577, abs=1e-7)


def test_contrast_after_twelve_shifts():
    assert predict_contrast(_sd(12), PARAMS) == pytest.approx(0.5950094, abs=1e-6)


def test_log_contrast_linear_in_n():
    n = np.arange(2, 50, 2)
    logs = np.log([predict_contrast(_sd(int(k)), PARAMS) for k in n])
    slope, intercept = np.polyfit(n, logs, 1)
    assert slope == pytest.approx(math.log(PARAMS.per_shift_factor), rel=1e-9)
    assert intercept == pytest.approx(0.0, abs=1e-9)


def test_contrast_strictly_decreasing():
    values = [predict_contrast(_sd(n), PARAMS) for n in range(2, 50, 2)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_hold_echo_contrast():
    T = 1e-3
    assert hold_echo_contrast(0.8, 0.0, T) == 0.8
    assert hold_echo_contrast(0.8, T, T) == pytest.approx(0.8 / math.e, rel=1e-12)
    assert hold_echo_contrast(0.8, 0.5e-3, math.inf) == 0.8
    with pytest.raises(ValueError):
        hold_echo_contrast(0.8, -1e-6, T)


def test_echo_time_counts_idle_and_acceleration_only():
    assert echo_time(_sd(12)) == 0.0
    hold = build_geometry(GeometrySpec(GeometryKind.HOLD_DIAMOND, 4, t_hold_us=400.0))
    assert echo_time(hold) == pytest.approx(376e-6, rel=1e-12)
    accel = build_geometry(GeometrySpec(GeometryKind.ACCEL_DIAMOND, 4, accel=9.8, t_acc_us=20.0))
    assert echo_time(accel) == pytest.approx(20e-6, rel=1e-12)


def test_hold_sequence_contrast():
    hold = build_geometry(GeometrySpec(GeometryKind.HOLD_DIAMOND, 4, t_hold_us=400.0))
    expected = PARAMS.per_shift_factor ** 4 * math.exp(-0.376 ** 2)
    assert predict_contrast(hold, PARAMS) == pytest.approx(expected, rel=1e-12)


def test_ideal_parameters_keep_full_contrast():
    ideal = DecoherenceParams.ideal()
    assert predict_contrast(parse_sequence("Q(0) S+ I(500) S- Q(0)"), ideal) == 1.0
    assert ideal.gamma_loss == 0.0


def test_initial_contrast_scales_prediction():
    half = DecoherenceParams(C0=0.5)
    assert predict_contrast(_sd(8), half) == pytest.approx(0.5 * predict_contrast(_sd(8), PARAMS), rel=1e-12)


@pytest.mark.parametrize("kwargs", [{"kappa_idle": 1.5}, {"f_shift": 0.0}, {"gamma_loss": -0.1},
                                    {"T_hold_gauss_us": 0.0}, {"C0": 1.01}])
def test_invalid_parameters(kwargs):
    with pytest.raises(ValueError):
        DecoherenceParams(**kwargs)


def test_contrast_budget_orders_mechanisms():
    n = np.arange(2, 50, 2)
    budget = contrast_budget(n, PARAMS)
    assert np.all(budget.idle_only >= budget.fidelity_corrected)
    assert np.all(budget.fidelity_corrected >= budget.full)
    np.testing.assert_allclose(budget.full, PARAMS.per_shift_factor ** n, rtol=1e-12)
    np.testing.assert_allclose(budget.idle_only, 0.994 ** n, rtol=1e-12)
