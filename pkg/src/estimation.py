"""Fringe fitting, phase unwrapping and the gradient/slope regressions built on them.

fit_fringe maximizes the binomial likelihood of Ramsey counts over (Phi, C, gamma).
C and gamma are kept inside [0, 1] with the sine transform x = (1 + sin u)/2,
which reaches the bounds at finite u so noiseless full-contrast data still
converges. Iteration is Fisher scoring with Levenberg damping and a
likelihood-increase check.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence as Seq, Tuple

import numpy as np
from scipy.optimize import least_squares
from scipy.special import xlogy

from src.constants import HBAR
from src.measurement_mc import FringeData, FringeModel, wrap_phase
from src.sequence_core import LatticeConfig, TimingParams

debug_logger = logging.getLogger("debug")

STEP_TOLERANCE = 1e-10
MAX_ITERATIONS = 100
BRANCH_AMBIGUITY = 0.1  # rad
_BOUND_MARGIN = 1e-3
_P_FLOOR = 1e-300


class DegenerateGridError(ValueError):
    pass


class UnderdeterminedFitError(ValueError):
    pass

# --- Result types ---

@dataclass
class FringeFit:
    Phi_hat: float
    C_hat: float
    gamma_hat: float
    covariance: np.ndarray
    log_likelihood: float
    converged: bool
    iterations: int = 0
    degenerate: bool = False
    method: str = "mle"

    @property
    def sigmas(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def sigma_Phi(self) -> float:
        return float(self.sigmas[0])

    def to_dict(self) -> dict:
        sigmas = self.sigmas
        return {
            "Phi_hat": self.Phi_hat,
            "C_hat": self.C_hat,
            "gamma_hat": self.gamma_hat,
            "sigma_Phi": float(sigmas[0]),
            "sigma_C": float(sigmas[1]),
            "sigma_gamma": float(sigmas[2]),
            "covariance": self.covariance.tolist(),
            "log_likelihood": self.log_likelihood,
            "converged": self.converged,
            "iterations": self.iterations,
            "degenerate": self.degenerate,
            "method": self.method,
        }


@dataclass
class GradientFit:
    gradU_hat: float  # J/m
    sigma: float
    chi2_per_dof: float
    n_points: int = 0

    def in_units_of_g(self, mass: float, g0: float) -> Tuple[float, float]:
        return self.gradU_hat / mass / g0, self.sigma / mass / g0

    def to_dict(self) -> dict:
        return {"gradU_hat": self.gradU_hat, "sigma": self.sigma,
                "chi2_per_dof": self.chi2_per_dof, "n_points": self.n_points}


@dataclass
class SlopeFit:
    slope: float
    sigma: float
    intercept: float
    intercept_sigma: float
    chi2_per_dof: float

    def to_dict(self) -> dict:
        return {"slope": self.slope, "sigma": self.sigma, "intercept": self.intercept,
                "intercept_sigma": self.intercept_sigma, "chi2_per_dof": self.chi2_per_dof}


@dataclass
class UnwrapResult:
    values: np.ndarray
    flags: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def ambiguous(self) -> bool:
        return bool(np.any(self.flags))

# --- Initial guess ---

def _phase_span(phases: np.ndarray) -> float:
    """Smallest arc of the circle that contains every phase."""
    ordered = np.sort(np.mod(phases, 2 * math.pi))
    gaps = np.diff(np.concatenate((ordered, [ordered[0] + 2 * math.pi])))
    return 2 * math.pi - float(np.max(gaps))


def initial_fringe_guess(data: FringeData) -> Tuple[float, float, float]:
    phi = np.asarray(data.phi_grid)
    distinct = np.unique(np.round(np.mod(phi, 2 * math.pi), 12))
    if len(distinct) < 4 or _phase_span(distinct) <= math.pi:
        raise DegenerateGridError(
            f"need at least 4 distinct probe phases spanning more than pi, got {len(distinct)} "
            f"spanning {_phase_span(distinct) if len(distinct) else 0:.3f} rad")

    y = data.proportions
    y_hat = y - y.mean()
    Phi0 = math.atan2(-np.sum(y_hat * np.sin(phi)), np.sum(y_hat * np.cos(phi)))

    # first harmonic and offset by linear least squares; exact on any grid for noiseless data
    design = np.column_stack([np.ones_like(phi), np.cos(phi), np.sin(phi)])
    (offset, a_cos, a_sin), *_ = np.linalg.lstsq(design, y, rcond=None)
    amplitude = math.hypot(a_cos, a_sin)
    gamma0 = float(np.clip(1 - 2 * offset, 0.0, 1.0))
    C0 = float(np.clip(amplitude / offset, 0.0, 1.0)) if offset > 0 else 0.0
    return Phi0, C0, gamma0

# --- Likelihood ---

def _natural(u: np.ndarray) -> np.ndarray:
    return np.array([u[0], 0.5 * (1 + math.sin(u[1])), 0.5 * (1 + math.sin(u[2]))])


def _unconstrained(theta: Seq[float]) -> np.ndarray:
    Phi, C, gamma = theta
    C = min(max(C, _BOUND_MARGIN), 1 - _BOUND_MARGIN)
    gamma = min(max(gamma, _BOUND_MARGIN), 1 - _BOUND_MARGIN)
    return np.array([Phi, math.asin(2 * C - 1), math.asin(2 * gamma - 1)])


def _model_terms(theta: np.ndarray, phi: np.ndarray):
    """p(phi) and its Jacobian with respect to (Phi, C, gamma)."""
    Phi, C, gamma = theta
    c, s = np.cos(Phi + phi), np.sin(Phi + phi)
    p = np.clip(0.5 * (1 - gamma) * (1 + C * c), 0.0, 1.0)
    jac = np.column_stack([-0.5 * (1 - gamma) * C * s, 0.5 * (1 - gamma) * c, -0.5 * (1 + C * c)])
    return p, jac, c, s


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    return np.divide(num, np.maximum(den, _P_FLOOR), out=np.zeros_like(num, dtype=float), where=num > 0)


def _log_likelihood(p: np.ndarray, k: np.ndarray, n: np.ndarray) -> float:
    with np.errstate(divide="ignore"):
        return float(np.sum(xlogy(k, p) + xlogy(n - k, 1 - p)))


def _observed_information(theta: np.ndarray, phi: np.ndarray, k: np.ndarray, n: np.ndarray) -> np.ndarray:
    Phi, C, gamma = theta
    p, jac, c, s = _model_terms(theta, phi)
    residual = _safe_ratio(k, p) - _safe_ratio(n - k, 1 - p)
    weight = _safe_ratio(k, p * p) + _safe_ratio(n - k, (1 - p) ** 2)

    hess = np.zeros((len(phi), 3, 3))
    hess[:, 0, 0] = -0.5 * (1 - gamma) * C * c
    hess[:, 0, 1] = hess[:, 1, 0] = -0.5 * (1 - gamma) * s
    hess[:, 0, 2] = hess[:, 2, 0] = 0.5 * C * s
    hess[:, 1, 2] = hess[:, 2, 1] = -0.5 * c
    return jac.T @ (weight[:, None] * jac) - np.einsum("i,ijk->jk", residual, hess)


def _expected_information(theta: np.ndarray, phi: np.ndarray, n: np.ndarray) -> np.ndarray:
    p, jac, _, _ = _model_terms(theta, phi)
    weight = n / np.maximum(p * (1 - p), _P_FLOOR)
    return jac.T @ (weight[:, None] * jac)


def _covariance(theta: np.ndarray, phi: np.ndarray, k: np.ndarray, n: np.ndarray) -> np.ndarray:
    info = _observed_information(theta, phi, k, n)
    eig = np.linalg.eigvalsh(info) if np.all(np.isfinite(info)) else np.array([-1.0])
    if np.all(eig > 0):
        cov = np.linalg.inv(info)
    else:
        debug_logger.debug("Observed information not positive definite; using expected Fisher information.")
        cov = np.linalg.pinv(_expected_information(theta, phi, n))
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    return (vecs * np.clip(vals, 0.0, None)) @ vecs.T


def fit_fringe(data: FringeData, guess: Optional[Tuple[float, float, float]] = None) -> FringeFit:
    phi = np.asarray(data.phi_grid)
    k = np.asarray(data.successes, dtype=float)
    n = np.asarray(data.shots, dtype=float)
    if guess is None:
        guess = initial_fringe_guess(data)
    if not all(math.isfinite(x) for x in guess):
        raise ValueError(f"initial guess must be finite, got {guess}")

    degenerate = bool(np.all(k == 0) or np.all(k == n))
    if degenerate:
        debug_logger.warning("All-zero or all-full counts: the likelihood has no interior maximum.")

    u = _unconstrained(guess)
    ll = _log_likelihood(_model_terms(_natural(u), phi)[0], k, n)
    damping = 1e-3
    converged = False
    iteration = 0
    for iteration in range(1, MAX_ITERATIONS + 1):
        theta = _natural(u)
        p, jac, _, _ = _model_terms(theta, phi)
        chain = np.array([1.0, 0.5 * math.cos(u[1]), 0.5 * math.cos(u[2])])
        jac_u = jac * chain
        score = jac_u.T @ (_safe_ratio(k, p) - _safe_ratio(n - k, 1 - p))
        fisher = jac_u.T @ ((n / np.maximum(p * (1 - p), _P_FLOOR))[:, None] * jac_u)

        stalled = False
        while True:
            step = np.linalg.lstsq(fisher + damping * np.diag(np.diag(fisher)), score, rcond=None)[0]
            if np.max(np.abs(step)) < STEP_TOLERANCE:
                converged = True
                break
            trial = u + step
            ll_trial = _log_likelihood(_model_terms(_natural(trial), phi)[0], k, n)
            if ll_trial >= ll:
                u, ll = trial, ll_trial
                damping = max(damping / 10, 1e-12)
                break
            damping *= 10
            if damping > 1e12:
                stalled = True
                break
        if converged or stalled:
            break

    Phi, C, gamma = _natural(u)
    if not converged:
        debug_logger.warning(f"Fringe fit did not converge after {iteration} iterations (logL={ll:.6f}).")
    else:
        debug_logger.debug(f"Fringe fit converged in {iteration} iterations: Phi={Phi:.9f}, C={C:.6f}, gamma={gamma:.6f}")
    theta = np.array([Phi, C, gamma])
    return FringeFit(
        Phi_hat=wrap_phase(Phi),
        C_hat=float(C),
        gamma_hat=float(gamma),
        covariance=_covariance(theta, phi, k, n),
        log_likelihood=ll,
        converged=converged,
        iterations=iteration,
        degenerate=degenerate,
    )


def fit_fringe_least_squares(data: FringeData, guess: Optional[Tuple[float, float, float]] = None,
                             passes: int = 5) -> FringeFit:
    """Weighted least squares on the proportions, reweighted with the binomial variance of the last fit."""
    phi = np.asarray(data.phi_grid)
    k = np.asarray(data.successes, dtype=float)
    n = np.asarray(data.shots, dtype=float)
    y = k / n
    x = np.array(guess if guess is not None else initial_fringe_guess(data), dtype=float)
    x[1:] = np.clip(x[1:], _BOUND_MARGIN, 1 - _BOUND_MARGIN)

    result = None
    for _ in range(passes):
        p_ref = FringeModel(float(x[0]), float(x[1]), float(x[2])).probability(phi)
        sigma = np.sqrt(np.maximum(p_ref * (1 - p_ref), 1e-6) / n)

        def residuals(theta):
            return (_model_terms(theta, phi)[0] - y) / sigma

        def jacobian(theta):
            return _model_terms(theta, phi)[1] / sigma[:, None]

        result = least_squares(residuals, x, jac=jacobian, bounds=([-np.inf, 0.0, 0.0], [np.inf, 1.0, 1.0]),
                               method="trf", xtol=1e-14, ftol=1e-14, gtol=1e-14)
        x = result.x

    cov = np.linalg.pinv(result.jac.T @ result.jac)
    cov = 0.5 * (cov + cov.T)
    p = _model_terms(x, phi)[0]
    return FringeFit(
        Phi_hat=wrap_phase(float(x[0])),
        C_hat=float(x[1]),
        gamma_hat=float(x[2]),
        covariance=cov,
        log_likelihood=_log_likelihood(p, k, n),
        converged=bool(result.success),
        iterations=int(result.nfev),
        degenerate=bool(np.all(k == 0) or np.all(k == n)),
        method="least_squares",
    )

# --- Phase series ---

def diamond_phase_shape(n_list: Seq[int], timing: Optional[TimingParams] = None, d: Optional[float] = None) -> np.ndarray:
    """Single-diamond phase per unit gradient (rad per J/m)."""
    timing = timing or TimingParams()
    d = LatticeConfig().d if d is None else d
    k = np.asarray(n_list, dtype=float) / 2
    return d * (k * k * (timing.tau_S + timing.tau_pi) - k * timing.tau_pi) / HBAR


def unwrap_phase_series(n_list: Seq[int], wrapped: Seq[float], timing: Optional[TimingParams] = None,
                        d: Optional[float] = None) -> UnwrapResult:
    """Chooses each 2*pi branch from the diamond-phase curve fitted to the points already unwrapped."""
    n_arr = np.asarray(n_list)
    w = wrap_phase(np.asarray(wrapped, dtype=float))
    if n_arr.shape != np.shape(w):
        raise ValueError("n_list and wrapped must have the same length")
    if np.any(np.diff(n_arr) <= 0):
        raise ValueError("n_list must be strictly ascending")

    shape = diamond_phase_shape(n_arr, timing, d)
    values = np.zeros(len(w))
    flags = np.zeros(len(w), dtype=bool)
    for i in range(len(w)):
        if i == 0:
            prediction = 0.0
        elif i == 1:
            prediction = values[0]
        else:
            scale = np.dot(shape[:i], values[:i]) / np.dot(shape[:i], shape[:i])
            prediction = scale * shape[i]
        turns = (prediction - w[i]) / (2 * math.pi)
        branch = np.rint(turns)
        offset = abs(turns - branch)
        flags[i] = (1 - 2 * offset) * 2 * math.pi < BRANCH_AMBIGUITY
        values[i] = w[i] + 2 * math.pi * branch
        if flags[i]:
            debug_logger.warning(f"Ambiguous branch at n={n_arr[i]}: prediction {prediction:.4f} rad")
    return UnwrapResult(values, flags)

# --- Regressions ---

def _wls_through_origin(h: np.ndarray, y: np.ndarray, sigmas: np.ndarray) -> Tuple[float, float, float]:
    w = 1.0 / sigmas ** 2
    norm = np.sum(w * h * h)
    estimate = float(np.sum(w * h * y) / norm)
    chi2 = float(np.sum(w * (y - estimate * h) ** 2))
    dof = len(y) - 1
    return estimate, float(1 / math.sqrt(norm)), chi2 / dof if dof > 0 else math.nan


def _check_sigmas(sigmas: np.ndarray, size: int) -> None:
    if sigmas.shape != (size,):
        raise ValueError("sigmas must match the data length")
    if not np.all(sigmas > 0):
        raise ValueError("sigmas must be strictly positive")


def fit_gradient(n_list: Seq[int], unwrapped_phases: Seq[float], phase_sigmas: Seq[float],
                 timing: Optional[TimingParams] = None, d: Optional[float] = None) -> GradientFit:
    y = np.asarray(unwrapped_phases, dtype=float)
    sigmas = np.asarray(phase_sigmas, dtype=float)
    if len(y) < 3:
        raise UnderdeterminedFitError(f"gradient fit needs at least 3 points, got {len(y)}")
    _check_sigmas(sigmas, len(y))
    gradU, sigma, chi2_dof = _wls_through_origin(diamond_phase_shape(n_list, timing, d), y, sigmas)
    debug_logger.debug(f"Gradient fit: {gradU:.6e} +/- {sigma:.3e} J/m, chi2/dof={chi2_dof:.3f}")
    return GradientFit(gradU, sigma, chi2_dof, len(y))


def fit_slope(x_list: Seq[float], phases: Seq[float], sigmas: Seq[float]) -> SlopeFit:
    x = np.asarray(x_list, dtype=float)
    y = np.asarray(phases, dtype=float)
    s = np.asarray(sigmas, dtype=float)
    if len(y) < 2 or len(np.unique(x)) < 2:
        raise UnderdeterminedFitError("slope fit needs at least 2 distinct abscissae")
    _check_sigmas(s, len(y))

    w = 1.0 / s ** 2
    S, Sx, Sy = w.sum(), (w * x).sum(), (w * y).sum()
    Sxx, Sxy = (w * x * x).sum(), (w * x * y).sum()
    delta = S * Sxx - Sx * Sx
    slope = (S * Sxy - Sx * Sy) / delta
    intercept = (Sxx * Sy - Sx * Sxy) / delta
    chi2 = float(np.sum(w * (y - intercept - slope * x) ** 2))
    dof = len(y) - 2
    return SlopeFit(float(slope), math.sqrt(S / delta), float(intercept), math.sqrt(Sxx / delta),
                    chi2 / dof if dof > 0 else math.nan)


def gradient_from_hold_slopes(n_list: Seq[int], slopes: Seq[float], slope_sigmas: Seq[float],
                              d: Optional[float] = None) -> GradientFit:
    """Pools hold-phase slopes (rad/s) into one gradient; each slope is gradU * (n/2) * d / hbar."""
    y = np.asarray(slopes, dtype=float)
    sigmas = np.asarray(slope_sigmas, dtype=float)
    if len(y) < 1:
        raise UnderdeterminedFitError("need at least one slope")
    _check_sigmas(sigmas, len(y))
    d = LatticeConfig().d if d is None else d
    h = np.asarray(n_list, dtype=float) / 2 * d / HBAR
    gradU, sigma, chi2_dof = _wls_through_origin(h, y, sigmas)
    return GradientFit(gradU, sigma, chi2_dof, len(y))


def acceleration_slopes_ratio(n_list: Seq[int], slopes: Seq[float]) -> np.ndarray:
    """Slopes relative to the one at the smallest shift count."""
    n_arr = np.asarray(n_list)
    y = np.asarray(slopes, dtype=float)
    return y / y[int(np.argmin(n_arr))]
