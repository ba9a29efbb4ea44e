import logging
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from src.constants import (
    GAMMA_LOSS,
    KAPPA_EXTRA,
    KAPPA_IDLE,
    SHIFT_FIDELITY,
    T2_STAR_ECHO_US,
    T2_STAR_SERIES_US,
    T2_US,
    T_HOLD_GAUSS_US,
)
from src.sequence_core import US, BlockKind, Sequence

debug_logger = logging.getLogger("debug")


@dataclass(frozen=True)
class DecoherenceParams:
    """Phenomenological contrast model.

    Each shift step costs (1 - kappa_idle) for the pulse/idle part of the step,
    f_shift once per arm for transport and (1 - kappa_extra) for the residual
    loss. Time spent in idle or acceleration blocks decays the contrast as a
    Gaussian with constant T_hold_gauss_us. The T2 values are carried as
    metadata and enter no formula.
    """
    kappa_idle: float = KAPPA_IDLE
    f_shift: float = SHIFT_FIDELITY
    kappa_extra: float = KAPPA_EXTRA
    T_hold_gauss_us: float = T_HOLD_GAUSS_US
    gamma_loss: float = GAMMA_LOSS
    C0: float = 1.0
    T2_us: float = T2_US
    T2_star_echo_us: float = T2_STAR_ECHO_US
    T2_star_series_us: float = T2_STAR_SERIES_US

    def __post_init__(self):
        for name in ("kappa_idle", "kappa_extra", "gamma_loss", "C0"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if not 0 < self.f_shift <= 1:
            raise ValueError(f"f_shift must lie in (0, 1], got {self.f_shift}")
        if not self.T_hold_gauss_us > 0:
            raise ValueError(f"T_hold_gauss_us must be positive, got {self.T_hold_gauss_us}")

    @classmethod
    def ideal(cls) -> "DecoherenceParams":
        """No contrast loss and no atom loss."""
        return cls(kappa_idle=0.0, f_shift=1.0, kappa_extra=0.0, T_hold_gauss_us=math.inf, gamma_loss=0.0)

    @property
    def T_hold_gauss(self) -> float:
        return self.T_hold_gauss_us * US

    @property
    def per_shift_factor(self) -> float:
        return (1 - self.kappa_idle) * self.f_shift ** 2 * (1 - self.kappa_extra)


def echo_time(seq: Sequence) -> float:
    """Total Idle and AccelWindow duration in seconds."""
    return sum(b.duration for b in seq.blocks if b.kind in (BlockKind.IDLE, BlockKind.ACCEL_WINDOW)) * US


def hold_echo_contrast(C_in: float, t_echo: float, T: float) -> float:
    if t_echo < 0:
        raise ValueError(f"t_echo must be non-negative, got {t_echo}")
    return C_in * math.exp(-(t_echo / T) ** 2)


def predict_contrast(seq: Sequence, p: DecoherenceParams) -> float:
    n = seq.n_shifts
    t_echo = echo_time(seq)
    contrast = hold_echo_contrast(p.C0 * p.per_shift_factor ** n, t_echo, p.T_hold_gauss)
    debug_logger.debug(f"Predicted contrast {contrast:.6f} for n={n}, t_echo={t_echo / US:g} us")
    return contrast


@dataclass(frozen=True)
class ContrastBudget:
    """Contrast versus shift count, built up one loss mechanism at a time."""
    n: np.ndarray
    idle_only: np.ndarray
    fidelity_corrected: np.ndarray
    full: np.ndarray


def contrast_budget(n: Union[int, np.ndarray], p: DecoherenceParams) -> ContrastBudget:
    n = np.asarray(n, dtype=float)
    idle_only = p.C0 * (1 - p.kappa_idle) ** n
    fidelity_corrected = idle_only * p.f_shift ** (2 * n)
    full = fidelity_corrected * (1 - p.kappa_extra) ** n
    return ContrastBudget(n, idle_only, fidelity_corrected, full)
