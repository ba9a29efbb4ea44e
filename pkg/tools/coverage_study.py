import os
import sys
from dataclasses import dataclass

import numpy as np
from scipy import stats

# Ensure the project root is in the Python path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.estimation import fit_fringe
from src.measurement_mc import FringeModel, simulate_fringe, uniform_phase_grid, wrap_phase


@dataclass
class CoverageResult:
    replications: int
    covered: int
    mean_z: float
    std_z: float
    converged: int

    @property
    def fraction(self) -> float:
        return self.covered / self.replications

    def confidence_interval(self, level: float = 0.95):
        """Clopper-Pearson interval on the coverage fraction."""
        return stats.binomtest(self.covered, self.replications).proportion_ci(confidence_level=level)


def coverage_study(replications: int = 500, Phi: float = 1.0, C: float = 0.6, gamma: float = 0.05,
                   points: int = 12, shots: int = 160, seed: int = 2024) -> CoverageResult:
    """How often the fitted 1-sigma phase interval contains the true phase."""
    model = FringeModel(Phi, C, gamma)
    grid = uniform_phase_grid(points)
    z = np.empty(replications)
    converged = 0
    for i in range(replications):
        fit = fit_fringe(simulate_fringe(model, grid, shots, seed, scenario="coverage", sweep_index=i))
        z[i] = wrap_phase(fit.Phi_hat - Phi) / fit.sigma_Phi
        converged += fit.converged
    return CoverageResult(replications, int(np.sum(np.abs(z) <= 1)), float(z.mean()), float(z.std(ddof=1)), converged)


if __name__ == "__main__":
    import argparse

    parser = argparse.ArgumentParser(description="Monte Carlo calibration of the fringe-fit phase uncertainty.")
    parser.add_argument("--replications", type=int, default=500)
    parser.add_argument("--contrast", type=float, default=0.6)
    parser.add_argument("--gamma", type=float, default=0.05)
    parser.add_argument("--points", type=int, default=12)
    parser.add_argument("--shots", type=int, default=160)
    parser.add_argument("--seed", type=int, default=2024)
    args = parser.parse_args()

    result = coverage_study(args.replications, C=args.contrast, gamma=args.gamma,
                            points=args.points, shots=args.shots, seed=args.seed)
    low, high = result.confidence_interval()
    expected = stats.norm.cdf(1) - stats.norm.cdf(-1)
    print("--- Coverage study ---")
    print(f"1-sigma coverage: {result.fraction:.3f} (95% CI {low:.3f}-{high:.3f}), expected {expected:.3f}")
    print(f"Pull mean {result.mean_z:+.3f}, pull std {result.std_z:.3f}, converged {result.converged}/{result.replications}")
