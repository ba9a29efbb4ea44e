import asyncio
import csv
import json
import logging
import math
import os
import re
import sys
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.constants import HBAR
from src.decoherence import contrast_budget
from src.estimation import (
    FringeFit,
    acceleration_slopes_ratio,
    fit_fringe,
    fit_gradient,
    fit_slope,
    gradient_from_hold_slopes,
    unwrap_phase_series,
)
from src.measurement_mc import FringeData, MeasurementPlan, TruthRecord, run_experiment
from src.scenario import ConfigError, Scenario, SweepPoint, load_scenario
from src.sequence_core import US, InvalidSequenceError, serialize_sequence, validate_sequence
from src.spacetime_paths import closed_form_acceleration_phase, gradient_equivalent_acceleration

scenario_logger = logging.getLogger("scenario_flow")
debug_logger = logging.getLogger("debug")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class NumericalError(RuntimeError):
    pass

# --- Logging Setup ---

def setup_logging(out_dir: str) -> None:
    """Plain progress log to console and <out>/logs/run.log, detailed log to <out>/logs/debug.log."""
    log_dir = os.path.join(out_dir, "logs")
    os.makedirs(log_dir, exist_ok=True)
    plain_formatter = logging.Formatter('%(message)s')
    debug_formatter = logging.Formatter('%(asctime)s - %(levelname)s - [%(name)s] - %(message)s')

    for logger in (scenario_logger, debug_logger):
        for handler in list(logger.handlers):
            handler.close()
            logger.removeHandler(handler)

    scenario_logger.setLevel(logging.INFO)
    scenario_logger.propagate = False
    run_handler = logging.FileHandler(os.path.join(log_dir, "run.log"), mode='w', encoding='utf-8')
    run_handler.setFormatter(plain_formatter)
    scenario_logger.addHandler(run_handler)
    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(plain_formatter)
    scenario_logger.addHandler(console_handler)

    debug_logger.setLevel(logging.DEBUG)
    debug_logger.propagate = False
    debug_handler = logging.FileHandler(os.path.join(log_dir, "debug.log"), mode='w', encoding='utf-8')
    debug_handler.setFormatter(debug_formatter)
    debug_logger.addHandler(debug_handler)

# --- Serialization ---

def _fmt(value: float) -> str:
    return f"{value:.12g}"


def _clean(obj: Any) -> Any:
    """JSON-ready copy with floats rounded to 12 significant digits and non-finite values as null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(_fmt(obj)) if math.isfinite(obj) else None
    return obj


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(_clean(payload), f, indent=2, sort_keys=True)
        f.write("\n")


def _safe_name(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.=-]+", "_", label)


@dataclass
class PointResult:
    point: SweepPoint
    data: FringeData
    truth: TruthRecord
    fit: FringeFit
    fit_phi_rad: float

# --- Runner ---

class ScenarioRunner:
    """Simulates and fits every sweep point, runs the scenario analysis and writes the artifacts."""

    def __init__(self, scenario: Scenario, out_dir: str, threads: int = 1):
        if threads < 1:
            raise ValueError(f"threads must be >= 1, got {threads}")
        self.scenario = scenario
        self.threads = threads
        self.out_dir = os.path.join(out_dir, _safe_name(scenario.name))

    def _simulate_point(self, point: SweepPoint) -> PointResult:
        sc = self.scenario
        plan = MeasurementPlan(tuple(sc.phi_grid), sc.shots_per_point, sc.seed, sc.name, point.index)
        data, truth = run_experiment(point.sequence, sc.potential, sc.decoherence, plan, sc.lattice)
        fit = fit_fringe(data)
        if not all(math.isfinite(x) for x in (truth.phi_rad, truth.contrast, fit.Phi_hat, fit.C_hat, fit.gamma_hat)):
            raise NumericalError(f"non-finite result at sweep point {point.index} ({point.label})")
        if not fit.converged:
            scenario_logger.warning(f"  Fit at {point.label} (n={point.n_shifts}) did not converge.")
        return PointResult(point, data, truth, fit, fit.Phi_hat)

    async def _run_point(self, point: SweepPoint, semaphore: asyncio.Semaphore) -> PointResult:
        async with semaphore:
            result = await asyncio.to_thread(self._simulate_point, point)
        scenario_logger.info(f"  [{point.index:3d}] n={point.n_shifts:<3d} {point.label:<18s} "
                             f"truth Phi={result.truth.phi_rad:9.4f} rad  fit Phi={result.fit.Phi_hat:8.4f} "
                             f"+/- {result.fit.sigma_Phi:.4f}  C={result.fit.C_hat:.3f}")
        return result

    async def simulate(self, points: List[SweepPoint]) -> List[PointResult]:
        semaphore = asyncio.Semaphore(self.threads)
        return await asyncio.gather(*(self._run_point(p, semaphore) for p in points))

    def _check_sequences(self, points: List[SweepPoint]) -> None:
        for point in points:
            report = validate_sequence(point.sequence)
            if not report.ok:
                for v in report.violations:
                    scenario_logger.error(f"  {point.label}: {v.message}")
                raise InvalidSequenceError(list(report.violations))

    def run(self) -> Dict[str, Any]:
        sc = self.scenario
        scenario_logger.info(f"--- Scenario '{sc.name}' (seed {sc.seed}, {self.threads} thread(s)) ---")
        points = sc.points()
        self._check_sequences(points)
        scenario_logger.info(f"--- Simulating {len(points)} sweep point(s), "
                             f"{sc.phase_points} x {sc.shots_per_point} shots each ---")
        results = asyncio.run(self.simulate(points))

        scenario_logger.info(f"--- Analysis: {sc.analysis} ---")
        analysis = self.analyze(results)
        for key in sorted(analysis):
            if not isinstance(analysis[key], (list, dict, np.ndarray)):
                scenario_logger.info(f"  {key}: {analysis[key]}")

        self.write_artifacts(results, analysis)
        scenario_logger.info(f"--- Artifacts written to {self.out_dir} ---")
        return analysis

    # --- Analyses ---

    def analyze(self, results: List[PointResult]) -> Dict[str, Any]:
        handlers = {
            "none": lambda r: {},
            "gradient": self._analyze_gradient,
            "contrast_decay": self._analyze_contrast_decay,
            "hold_slopes": self._analyze_hold_slopes,
            "hold_contrast": self._analyze_hold_contrast,
            "accel_slopes": self._analyze_accel_slopes,
        }
        analysis = handlers[self.scenario.analysis](results)
        analysis["kind"] = self.scenario.analysis
        return analysis

    def _phase_sigmas(self, results: List[PointResult]) -> np.ndarray:
        sigmas = np.array([r.fit.sigma_Phi for r in results])
        if not np.all(np.isfinite(sigmas) & (sigmas > 0)):
            raise NumericalError("fringe fits returned a zero or non-finite phase uncertainty")
        return sigmas

    def _groups(self, results: List[PointResult]) -> Dict[int, List[PointResult]]:
        groups: Dict[int, List[PointResult]] = {}
        for r in results:
            groups.setdefault(r.point.n_shifts, []).append(r)
        for members in groups.values():
            members.sort(key=lambda r: r.point.value)
        return groups

    def _analyze_gradient(self, results: List[PointResult]) -> Dict[str, Any]:
        sc = self.scenario
        lat = sc.lattice
        n_list = [r.point.n_shifts for r in results]
        unwrapped = unwrap_phase_series(n_list, [r.fit.Phi_hat for r in results], sc.timing, lat.d)
        for r, value in zip(results, unwrapped.values):
            r.fit_phi_rad = float(value)
        gfit = fit_gradient(n_list, unwrapped.values, self._phase_sigmas(results), sc.timing, lat.d)

        per_site = lat.d / (2 * math.pi * HBAR)
        truth = sc.true_gradient
        g_hat, g_sigma = gfit.in_units_of_g(lat.mass, lat.g0)
        return {
            "gradU_hat_J_per_m": gfit.gradU_hat,
            "sigma_J_per_m": gfit.sigma,
            "gradient_hz_per_site": gfit.gradU_hat * per_site,
            "sigma_hz_per_site": gfit.sigma * per_site,
            "equivalent_g": g_hat,
            "sigma_g": g_sigma,
            "chi2_per_dof": gfit.chi2_per_dof,
            "truth_gradU_J_per_m": truth,
            "truth_equivalent_g": gradient_equivalent_acceleration(truth, lat.mass, lat.g0),
            "z_score": (gfit.gradU_hat - truth) / gfit.sigma,
            "ambiguous_n": [n for n, flag in zip(n_list, unwrapped.flags) if flag],
        }

    def _analyze_contrast_decay(self, results: List[PointResult]) -> Dict[str, Any]:
        usable = [r for r in results if r.fit.C_hat > 0]
        n = np.array([r.point.n_shifts for r in usable], dtype=float)
        log_c = np.log([r.fit.C_hat for r in usable])
        sigmas = np.array([max(float(r.fit.sigmas[1]), 1e-6) / r.fit.C_hat for r in usable])
        sfit = fit_slope(n, log_c, sigmas)
        budget = contrast_budget(n, self.scenario.decoherence)
        return {
            "per_shift_factor_fit": math.exp(sfit.slope),
            "per_shift_factor_sigma": math.exp(sfit.slope) * sfit.sigma,
            "per_shift_factor_truth": self.scenario.decoherence.per_shift_factor,
            "C0_fit": math.exp(sfit.intercept),
            "chi2_per_dof": sfit.chi2_per_dof,
            "n": n,
            "contrast_fit": [r.fit.C_hat for r in usable],
            "budget_idle_only": budget.idle_only,
            "budget_fidelity_corrected": budget.fidelity_corrected,
            "budget_full": budget.full,
        }

    def _series_slopes(self, groups: Dict[int, List[PointResult]], to_x) -> Dict[int, Any]:
        """Unwraps each group's fitted phases along the sweep and fits a line through them."""
        fits = {}
        for n, members in groups.items():
            phases = np.unwrap([r.fit.Phi_hat for r in members])
            for r, value in zip(members, phases):
                r.fit_phi_rad = float(value)
            x = [to_x(r.point) for r in members]
            fits[n] = fit_slope(x, phases, self._phase_sigmas(members))
        return fits

    def _analyze_hold_slopes(self, results: List[PointResult]) -> Dict[str, Any]:
        lat = self.scenario.lattice
        groups = self._groups(results)
        fits = self._series_slopes(groups, lambda p: p.t_hold_us * US)
        n_list = sorted(fits)
        slopes = [fits[n].slope for n in n_list]
        pooled = gradient_from_hold_slopes(n_list, slopes, [fits[n].sigma for n in n_list], lat.d)
        per_site = lat.d / (2 * math.pi * HBAR)
        ratios = acceleration_slopes_ratio(n_list, slopes)
        return {
            "n": n_list,
            "slope_rad_per_s": slopes,
            "slope_sigma_rad_per_s": [fits[n].sigma for n in n_list],
            "slope_ratio": ratios,
            "expected_ratio": [n / n_list[0] for n in n_list],
            "pooled_gradU_J_per_m": pooled.gradU_hat,
            "pooled_sigma_J_per_m": pooled.sigma,
            "pooled_gradient_hz_per_site": pooled.gradU_hat * per_site,
            "pooled_sigma_hz_per_site": pooled.sigma * per_site,
            "truth_gradU_J_per_m": self.scenario.true_gradient,
        }

    def _analyze_hold_contrast(self, results: List[PointResult]) -> Dict[str, Any]:
        per_n = {}
        for n, members in self._groups(results).items():
            usable = [r for r in members if r.fit.C_hat > 0]
            t = np.array([r.point.t_hold_us * US for r in usable])
            log_c = np.log([r.fit.C_hat for r in usable])
            sigmas = [max(float(r.fit.sigmas[1]), 1e-6) / r.fit.C_hat for r in usable]
            sfit = fit_slope(t * t, log_c, sigmas)
            T_fit = math.sqrt(-1 / sfit.slope) if sfit.slope < 0 else math.inf
            per_n[str(n)] = {"T_gauss_fit_us": T_fit / US, "decay_rate_per_s2": -sfit.slope,
                             "decay_rate_sigma_per_s2": sfit.sigma, "C_start_fit": math.exp(sfit.intercept)}
        return {"per_n": per_n, "T_gauss_truth_us": self.scenario.decoherence.T_hold_gauss_us}

    def _analyze_accel_slopes(self, results: List[PointResult]) -> Dict[str, Any]:
        sc = self.scenario
        lat = sc.lattice
        groups = self._groups(results)
        fits = self._series_slopes(groups, lambda p: p.accel_g)
        n_list = sorted(fits)
        slopes = [fits[n].slope for n in n_list]
        truth_slopes = [closed_form_acceleration_phase(n, lat.mass, lat.g0, sc.t_acc_us * US, lat.d) for n in n_list]

        contrast_shift = {}
        for n, members in groups.items():
            reference = min(members, key=lambda r: abs(r.point.accel_g))
            contrast_shift[str(n)] = max(abs(r.fit.C_hat - reference.fit.C_hat) for r in members)
        return {
            "n": n_list,
            "slope_rad_per_g": slopes,
            "slope_sigma_rad_per_g": [fits[n].sigma for n in n_list],
            "truth_slope_rad_per_g": truth_slopes,
            "slope_ratio": acceleration_slopes_ratio(n_list, slopes),
            "expected_ratio": [n / n_list[0] for n in n_list],
            "max_contrast_change_fit": contrast_shift,
            "truth_contrast_spread": max(
                max(r.truth.contrast for r in members) - min(r.truth.contrast for r in members)
                for members in groups.values()),
        }

    # --- Artifacts ---

    def write_artifacts(self, results: List[PointResult], analysis: Dict[str, Any]) -> None:
        sc = self.scenario
        os.makedirs(self.out_dir, exist_ok=True)

        if sc.outputs.get("truth", True):
            _write_json(os.path.join(self.out_dir, "truth.json"), {
                "scenario": sc.name,
                "seed": sc.seed,
                "points": [dict(index=r.point.index, label=r.point.label,
                                sequence=serialize_sequence(r.point.sequence), **r.truth.to_dict())
                           for r in results],
            })

        if sc.outputs.get("fringes", True):
            fringe_dir = os.path.join(self.out_dir, "fringes")
            os.makedirs(fringe_dir, exist_ok=True)
            for r in results:
                r.data.to_csv(os.path.join(fringe_dir, f"{r.point.index:03d}_n{r.point.n_shifts}_{_safe_name(r.point.label)}.csv"))

        if sc.outputs.get("fits", True):
            _write_json(os.path.join(self.out_dir, "fits.json"), {
                "scenario": sc.name,
                "points": [dict(index=r.point.index, label=r.point.label, n_shifts=r.point.n_shifts,
                                fit_phi_rad=r.fit_phi_rad, **r.fit.to_dict())
                           for r in results],
                "analysis": analysis,
            })

        if sc.outputs.get("summary", True):
            with open(os.path.join(self.out_dir, "summary.csv"), "w", encoding="utf-8", newline="") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(["scenario", "n", "truth_phi_rad", "fit_phi_rad", "fit_sigma",
                                 "contrast_truth", "contrast_fit", "sweep"])
                for r in results:
                    writer.writerow([sc.name, r.point.n_shifts, _fmt(r.truth.phi_rad), _fmt(r.fit_phi_rad),
                                     _fmt(r.fit.sigma_Phi), _fmt(r.truth.contrast), _fmt(r.fit.C_hat), r.point.label])


def run_scenario(config_path: str, out_dir: str = "outputs", seed: Optional[int] = None, threads: int = 1) -> int:
    """Runs one scenario file end to end and returns the process exit code."""
    setup_logging(out_dir)
    try:
        scenario = load_scenario(config_path)
        if seed is not None:
            if seed < 0:
                raise ConfigError(f"expected a non-negative integer, got {seed}", "--seed")
            scenario.seed = seed
        ScenarioRunner(scenario, out_dir, threads).run()
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as e:
        scenario_logger.error(f"Numerical failure: {e}")
        debug_logger.exception("Numerical failure")
        return EXIT_NUMERICAL
    except ValueError as e:
        scenario_logger.error(f"Configuration error: {e}")
        debug_logger.exception("Configuration error")
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    import argparse

    parser = argparse.ArgumentParser(description="Run one scenario file.")
    parser.add_argument("config", type=str, help="Path to the scenario YAML file.")
    parser.add_argument("--out-dir", type=str, default="outputs")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()
    sys.exit(run_scenario(args.config, args.out_dir, args.seed, args.threads))
