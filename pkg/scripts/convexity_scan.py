"""Light convexity of the exterior r > r_min of the static spherical chart.

The exterior is light convex exactly when r_min lies inside the photon sphere.
The Monte-Carlo audit is run on both sides of it.
"""

import argparse

from fermat_rays.metric import catalog, photon_sphere_radius, region_exterior
from fermat_rays.shortening import check_light_convexity


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--mass", type=float, default=1.0)
    ap.add_argument("--samples", type=int, default=24)
    args = ap.parse_args()
    M = args.mass
    chart = catalog("static_spherical", M=M, r_min=0.6 * M, dim=3)
    rps = photon_sphere_radius(M)
    print(f"photon sphere at r = {rps:.6f}")
    for factor in (1.2, 1.5, 2.5, 4.0):
        r = factor * M
        rep = check_light_convexity(chart, region_exterior([0.0, 0.0], r), n_samples=args.samples,
                                    horizon=8.0 * M, rho_star=0.5 * M, seed=0)
        side = "inside" if r < rps else "outside"
        print(f"r_min = {r:5.2f} ({side} photon sphere): {rep.violations} violations")


if __name__ == "__main__":
    main()
