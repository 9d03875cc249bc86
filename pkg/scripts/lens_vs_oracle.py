"""Point lens: rays from the shortening flow against an independent shooting oracle.

The oracle traces planar rays of the optical metric with an adaptive integrator
and locates the two images by bisection on the launch angle.
"""

import sys
from pathlib import Path

from fermat_rays.cli import run
from fermat_rays.scenario import load_scenario

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))
import oracles  # noqa: E402


def main():
    sc = load_scenario(ROOT / "scenarios" / "lens.yaml")
    mass = sc.chart_spec["params"]["mass"]
    images = oracles.lens_images(mass, tuple(sc.p.x[:2]), tuple(sc.observer.x_obs[:2]))
    taus = [t for _, t in images]
    report = run(sc, hessian_crosscheck=True)
    print(f"{'':>8}{'flow':>22}{'oracle':>22}{'rel. error':>12}")
    for r, t in zip(report.records, taus):
        print(f"ray {r['id']:<4}{r['tau']:22.14f}{t:22.14f}{abs(r['tau'] - t) / t:12.1e}  mu={r['mu']}"
              f"  hessian={r['hessian'].get('index')}")
    if len(report.records) >= 2:
        d_flow = report.records[1]["tau"] - report.records[0]["tau"]
        d_orc = abs(taus[1] - taus[0])
        print(f"time delay: flow {d_flow:.12e}, oracle {d_orc:.12e}, rel. error {abs(d_flow - d_orc) / d_orc:.1e}")
    print("oracle launch angles: " + ", ".join(f"{a:.12f}" for a, _ in images))


if __name__ == "__main__":
    main()
