"""Light bending by the static spherical chart as a function of impact parameter.

Compares RK4 geodesics with the first-order value 4M/b and with a fine adaptive trace.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from fermat_rays.jacobi import integrate_null_geodesic, null_vector
from fermat_rays.metric import catalog

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
import oracles  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--mass", type=float, default=0.01)
    ap.add_argument("--half-length", type=float, default=2000.0)
    ap.add_argument("--steps", type=int, default=20000)
    args = ap.parse_args()
    M, X = args.mass, args.half_length
    chart = catalog("static_spherical", M=M, r_min=0.05, dim=4)
    print(f"{'b/M':>8}{'RK4':>14}{'4M/b':>14}{'fine':>14}{'vs 4M/b':>10}{'vs fine':>10}")
    for b in M * np.array([100, 300, 1000, 3000]):
        z0 = np.array([-X, b, 0.0, 0.0])
        g = integrate_null_geodesic(chart, z0, null_vector(chart, z0, [1.0, 0.0, 0.0]),
                                    length=2 * X, n_steps=args.steps)
        bend = -np.arctan2(g.v[-1, 1], g.v[-1, 0])
        first = oracles.first_order_deflection(M, b)
        fine = oracles.planar_deflection(M, b, half_length=X)
        print(f"{b / M:8.0f}{bend:14.6e}{first:14.6e}{fine:14.6e}{bend / first - 1:10.2%}{bend / fine - 1:10.1e}")


if __name__ == "__main__":
    main()
