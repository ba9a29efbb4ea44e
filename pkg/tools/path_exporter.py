import os
import sys

# Ensure the project root is in the Python path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.sequence_core import GeometryKind, GeometrySpec, LatticeConfig, build_geometry, load_sequence_file
from src.spacetime_paths import compute_paths, max_separation, paths_to_csv, spacetime_area


def export_paths(output_file: str, geometry: str = "SingleDiamond", n: int = 12, t_hold_us: float = 0.0,
                 sequence_file: str = None, x_origin_um: float = 0.0) -> str:
    """Writes the arm trajectories of a generated geometry or a .dai program as CSV for plotting."""
    print("--- Exporting interferometer paths ---")
    if sequence_file:
        print(f"Loading sequence from: {sequence_file}")
        seq = load_sequence_file(sequence_file)
    else:
        seq = build_geometry(GeometrySpec(GeometryKind(geometry), n, t_hold_us=t_hold_us))
        print(f"Built {geometry}(n={n}) with {len(seq)} blocks")

    paths = compute_paths(seq, LatticeConfig(), x_origin_um * 1e-6)
    os.makedirs(os.path.dirname(os.path.abspath(output_file)), exist_ok=True)
    with open(output_file, "w", encoding="utf-8", newline="") as f:
        f.write(paths_to_csv(paths))

    print(f"Max separation: {max_separation(paths) * 1e6:.4f} um")
    print(f"Spacetime area: {spacetime_area(paths).area:.6e} m*s")
    print(f"✅ Paths saved to {output_file}")
    return output_file


if __name__ == "__main__":
    import argparse

    parser = argparse.ArgumentParser(description="Export interferometer arm trajectories (t, xL, xR, spinL) as CSV.")
    parser.add_argument("output_file", help="Path for the output CSV file.")
    parser.add_argument("--geometry", default="SingleDiamond", choices=[k.value for k in GeometryKind])
    parser.add_argument("--n", type=int, default=12, help="Total number of shifts.")
    parser.add_argument("--t-hold-us", type=float, default=0.0)
    parser.add_argument("--sequence", default=None, help="A .dai program to export instead of a generated geometry.")
    parser.add_argument("--x-origin-um", type=float, default=0.0, help="Starting position of both arms.")
    args = parser.parse_args()

    export_paths(args.output_file, args.geometry, args.n, args.t_hold_us, args.sequence, args.x_origin_um)
