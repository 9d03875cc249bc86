"""Run every scenario in scenarios/ and print a one-line summary each."""

import argparse
import time
from pathlib import Path

from fermat_rays.cli import emit_outputs, run
from fermat_rays.scenario import load_scenario

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=ROOT / "runs")
    ap.add_argument("--check-convexity", action="store_true")
    args = ap.parse_args()
    for path in sorted((ROOT / "scenarios").glob("*.yaml")):
        sc = load_scenario(path)
        t0 = time.perf_counter()
        report = run(sc, check_convexity=args.check_convexity)
        emit_outputs(report, args.out / path.stem)
        taus = ", ".join(f"{r['tau']:.10f} (mu {r['mu']})" for r in report.records) or "none"
        print(f"{path.stem:<10} exit {report.exit_code}  {time.perf_counter() - t0:6.1f} s  rays: {taus}")


if __name__ == "__main__":
    main()
