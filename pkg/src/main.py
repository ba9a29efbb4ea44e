import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

# Get the absolute path to the project root directory (which is one level up from this script)
PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
sys.path.append(PROJECT_ROOT)

from src.constants import REFERENCE_GRADIENT_HZ_PER_SITE
from src.potentials import LinearGradient
from src.scenario import ConfigError, load_scenario
from src.scenario_runner import EXIT_CONFIG, EXIT_OK, run_scenario
from src.sequence_core import (
    GeometryKind,
    GeometrySpec,
    LatticeConfig,
    SequenceSyntaxError,
    TimingParams,
    build_geometry,
    load_sequence_file,
    serialize_sequence,
    validate_sequence,
)
from src.spacetime_paths import (
    closed_form_acceleration_phase,
    closed_form_diamond_phase,
    closed_form_hold_phase,
    compute_paths,
    gradient_equivalent_acceleration,
    max_separation,
    phase_integral,
    sequence_potential,
    spacetime_area,
)

load_dotenv()

# --- Configuration ---
DEFAULT_OUT_DIR = os.getenv("DAI_OUT_DIR", "outputs")
DEFAULT_THREADS = int(os.getenv("DAI_THREADS", "1"))
DEFAULT_CONFIG = os.path.join(PROJECT_ROOT, "config.yaml")


def cmd_run(args) -> int:
    return run_scenario(os.path.abspath(args.config), args.out_dir, args.seed, args.threads)


def cmd_validate(args) -> int:
    """Checks a scenario file (every sweep point) or a single DSL program."""
    path = args.path
    if path.endswith((".yaml", ".yml")):
        try:
            points = load_scenario(path).points()
        except ValueError as e:
            print(f"❌ {e}")
            return EXIT_CONFIG
        sequences = [(p.label, p.sequence) for p in points]
    else:
        try:
            sequences = [(os.path.basename(path), load_sequence_file(path))]
        except (OSError, SequenceSyntaxError) as e:
            print(f"❌ {e}")
            return EXIT_CONFIG

    failed = False
    for label, seq in sequences:
        report = validate_sequence(seq)
        if report.ok:
            print(f"✅ {label}: {len(seq)} blocks, {seq.n_shifts} shifts")
            continue
        failed = True
        print(f"❌ {label}:")
        for v in report.violations:
            print(f"   [{v.code}] {v.message}")
    return EXIT_CONFIG if failed else EXIT_OK


def cmd_oracle(args) -> int:
    """Prints the closed-form and integrated phase of one geometry."""
    lat = LatticeConfig()
    timing = TimingParams(args.tau_S_us, args.tau_pi_us)
    pot = LinearGradient.from_frequency(args.gradient_hz_per_site, lat.d)
    try:
        spec = GeometrySpec(GeometryKind(args.geometry), args.n, t_hold_us=args.t_hold_us,
                            accel=args.accel_g * lat.g0, t_acc_us=args.t_acc_us)
        seq = build_geometry(spec, timing)
    except ValueError as e:
        print(f"❌ {e}")
        return EXIT_CONFIG

    paths = compute_paths(seq, lat)
    integrated = phase_integral(paths, sequence_potential(seq, pot, lat))
    print(f"Sequence: {serialize_sequence(seq)}")
    print(f"Max separation: {max_separation(paths) * 1e6:.6f} um, area {spacetime_area(paths).area:.6e} m*s")
    print(f"Gradient: {pot.gradU:.6e} J/m = {gradient_equivalent_acceleration(pot.gradU, lat.mass, lat.g0):.6f} g")

    if spec.kind is GeometryKind.SINGLE_DIAMOND:
        closed = closed_form_diamond_phase(args.n, pot.gradU, timing, lat.d)
    elif spec.kind is GeometryKind.DOUBLE_DIAMOND:
        closed = 0.0
    elif spec.kind is GeometryKind.HOLD_DIAMOND:
        closed = (closed_form_diamond_phase(args.n, pot.gradU, timing, lat.d)
                  + closed_form_hold_phase(args.n, pot.gradU, args.t_hold_us * 1e-6, lat.d))
    else:
        # the apex also holds the two echo pulses; the loop runs with negative separation
        apex_s = (args.t_acc_us + 2 * timing.tau_pi_us) * 1e-6 if args.t_acc_us > 0 else 0.0
        closed = (closed_form_diamond_phase(args.n, -pot.gradU, timing, lat.d)
                  + closed_form_hold_phase(args.n, -pot.gradU, apex_s, lat.d)
                  + closed_form_acceleration_phase(args.n, lat.mass, spec.accel, args.t_acc_us * 1e-6, lat.d))
    print(f"Closed form: {closed:.12g} rad")
    print(f"Integrated:  {integrated:.12g} rad")
    print(f"Difference:  {integrated - closed:.3e} rad")
    return EXIT_OK


def build_parser():
    import argparse

    parser = argparse.ArgumentParser(description="Digital atom interferometer simulator and fringe analysis.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run a scenario file and write truth/fringes/fits/summary artifacts.")
    run.add_argument("config", nargs="?", default=DEFAULT_CONFIG,
                     help="Path to the scenario YAML file (default: config.yaml, the single-diamond gradient run).")
    run.add_argument("--seed", type=int, default=None, help="Override scenario.seed.")
    run.add_argument("--threads", type=int, default=DEFAULT_THREADS, help="Sweep points simulated concurrently.")
    run.add_argument("--out-dir", default=DEFAULT_OUT_DIR, help="Root directory for artifacts and logs.")
    run.set_defaults(func=cmd_run)

    validate = sub.add_parser("validate", help="Validate a scenario file or a .dai sequence program.")
    validate.add_argument("path")
    validate.set_defaults(func=cmd_validate)

    oracle = sub.add_parser("oracle", help="Print closed-form and integrated phases for one geometry.")
    oracle.add_argument("--geometry", default="SingleDiamond", choices=[k.value for k in GeometryKind])
    oracle.add_argument("--n", type=int, default=12, help="Total number of shifts.")
    oracle.add_argument("--gradient-hz-per-site", type=float, default=REFERENCE_GRADIENT_HZ_PER_SITE)
    oracle.add_argument("--t-hold-us", type=float, default=0.0)
    oracle.add_argument("--accel-g", type=float, default=0.0)
    oracle.add_argument("--t-acc-us", type=float, default=0.0)
    oracle.add_argument("--tau-S-us", dest="tau_S_us", type=float, default=TimingParams().tau_S_us)
    oracle.add_argument("--tau-pi-us", dest="tau_pi_us", type=float, default=TimingParams().tau_pi_us)
    oracle.set_defaults(func=cmd_oracle)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"❌ {e}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
