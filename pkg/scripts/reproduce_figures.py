import glob
import os
import sys
import time

# Get the absolute path to the project root directory (which is one level up from this script)
PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
sys.path.append(PROJECT_ROOT)

from dotenv import load_dotenv

from src.scenario_runner import EXIT_OK, run_scenario

load_dotenv()

FIGURE_SCENARIOS = ["fig2a", "fig2c", "fig3b", "fig3c", "fig4b"]


def main(out_dir: str, threads: int, only: list = None) -> int:
    """Runs every bundled figure scenario in turn; stops at the first failure."""
    names = only or FIGURE_SCENARIOS
    for name in names:
        config = os.path.join(PROJECT_ROOT, "data", "scenarios", f"{name}.yaml")
        print(f"--- Running Scenario: {name} ---")
        start = time.perf_counter()
        code = run_scenario(config, out_dir, threads=threads)
        if code != EXIT_OK:
            print(f"\n--- ERROR: Scenario '{name}' failed with exit code {code}. ---")
            print("--- Aborting. ---")
            return code
        print(f"--- Scenario '{name}' completed in {time.perf_counter() - start:.1f} s. ---\n")

    print("--- All scenarios finished ---")
    for path in sorted(glob.glob(os.path.join(out_dir, "*", "summary.csv"))):
        print(f"✅ {path}")
    return EXIT_OK


if __name__ == "__main__":
    import argparse

    parser = argparse.ArgumentParser(description="Reproduce the data behind every bundled figure scenario.")
    parser.add_argument("--out-dir", default=os.getenv("DAI_OUT_DIR", "outputs"))
    parser.add_argument("--threads", type=int, default=int(os.getenv("DAI_THREADS", "1")))
    parser.add_argument("--only", nargs="*", choices=FIGURE_SCENARIOS, help="Subset of scenarios to run.")
    args = parser.parse_args()
    sys.exit(main(args.out_dir, args.threads, args.only))
