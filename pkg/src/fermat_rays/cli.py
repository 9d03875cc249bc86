"""Command line entry point: ``fermat-rays run | validate | catalog``."""

from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .errors import BasisDegenerateError, FermatError, ScenarioError
from .jacobi import (DegenerateInertiaWarning, GeodesicRecord, analyze_record, hessian_matrix,
                     morse_index_numeric)
from .metric import CATALOG
from .morse import MorseLedger, ParityReport, build_ledger, format_ledger, parity_check
from .scenario import Scenario, dump_scenario, load_scenario
from .shortening import check_light_convexity, multi_start

GUARD_REASONS = ("region-exit", "pseudo-coercivity-violation", "outside-worldline-domain",
                 "rho-star-spacing", "out-of-domain")


@dataclass
class RunReport:
    scenario: dict
    content_hash: str
    records: List[dict]
    paths: List[np.ndarray]
    ledger: MorseLedger
    parity: ParityReport
    guards: dict
    exit_code: int
    timings: dict = field(default_factory=dict)
    messages: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "version": __version__,
            "scenario": self.scenario,
            "content_hash": self.content_hash,
            "records": self.records,
            "ledger": self.ledger.to_dict(),
            "parity": self.parity.to_dict(),
            "guards": self.guards,
            "exit_code": self.exit_code,
            "messages": self.messages,
        }


def _summary(rec: GeodesicRecord, rid: int, past: bool, residual_tol: float) -> dict:
    sign = -1.0 if past else 1.0
    notes = [d for d in rec.diagnostics if isinstance(d, str)]
    history = [d["tau_history"] for d in rec.diagnostics if isinstance(d, dict) and "tau_history" in d]
    return {
        "id": rid,
        "tau": sign * float(rec.tau),
        "mu": rec.index_mu,
        "nondegenerate": rec.nondegenerate,
        "n_conjugate": sum(m for _, m in rec.conjugate_points or []),
        "conjugate_points": [[float(s), int(m)] for s, m in rec.conjugate_points or []],
        "geodesic_residual": float(rec.geodesic_residual),
        "null_residual": float(rec.null_residual),
        "residual_ok": bool(rec.geodesic_residual < residual_tol and rec.null_residual < residual_tol),
        "n_steps": int(rec.n_steps),
        "start": [float(v) for v in rec.z[0]],
        "end": [float(v) for v in rec.z[-1]],
        "tau_history": [sign * t for t in history[0]] if history else [],
        "notes": notes,
    }


def _crosscheck(chart, rec, modes: int, inertia_tol: float) -> dict:
    out = {"modes": [modes, modes + 4]}
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", DegenerateInertiaWarning)
            idx = [morse_index_numeric(hessian_matrix(chart, rec, n_modes=k), inertia_tol)
                   for k in (modes, modes + 4)]
        out["index"] = idx
        out["stable"] = idx[0] == idx[1]
        out["matches_geometric"] = rec.index_mu is not None and all(i == rec.index_mu for i in idx)
        out["zero_band"] = bool(caught)
    except (BasisDegenerateError, FermatError) as exc:
        out["error"] = str(exc)
        out["matches_geometric"] = False
    return out


def run(scenario: Scenario, check_convexity: bool = False, hessian_crosscheck: bool = False) -> RunReport:
    """Guards, multi-start search, index analysis and the Morse audit."""
    timings = {}
    messages: List[str] = []
    chart = scenario.chart()
    p, obs = scenario.search_frame()
    region = scenario.region()
    tol = scenario.tolerances
    guards: dict = {"failures": [], "convexity": None}
    exit_code = 0

    if check_convexity:
        t0 = time.perf_counter()
        conv = scenario.convexity
        rho = conv.get("rho_star")
        if rho is None:
            rho = scenario.shortening.rho_star or 0.1 * float(np.linalg.norm(obs.x_obs - p.x))
        rep = check_light_convexity(chart, region, n_samples=int(conv["n_samples"]),
                                    horizon=float(conv["horizon"]), rho_star=float(rho),
                                    seed=scenario.seed, t0=p.t)
        guards["convexity"] = rep.to_dict()
        guards["convexity"]["witnesses"] = rep.witnesses
        if rep.violations:
            exit_code = 1
            messages.append(f"light-convexity check found {rep.violations} violations")
        timings["convexity"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    res = multi_start(chart, p, obs, region, scenario.shortening, scenario.starts,
                      k_starts=scenario.k_starts, seed=scenario.seed,
                      dedup_radius=tol.get("dedup_radius"))
    timings["search"] = time.perf_counter() - t0
    for f in res.failures:
        guards["failures"].append({"start": f.start, "reason": f.reason, "message": f.message})
        if f.reason in GUARD_REASONS:
            exit_code = 1
            messages.append(f"start {f.start} aborted on guard {f.reason}")

    t0 = time.perf_counter()
    records = res.records
    for rec in records:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            analyze_record(chart, rec, svd_tol=float(tol["svd_tol"]))
        for w in caught:
            rec.diagnostics.append(f"warning: {w.message}")
    timings["analysis"] = time.perf_counter() - t0

    summaries = [_summary(rec, 0, scenario.past, float(tol["residual_tol"])) for rec in records]
    order = sorted(range(len(records)), key=lambda k: (summaries[k]["tau"], k))
    records = [records[k] for k in order]
    summaries = [summaries[k] for k in order]
    for rid, s in enumerate(summaries):
        s["id"] = rid

    if hessian_crosscheck:
        t0 = time.perf_counter()
        for rec, s in zip(records, summaries):
            s["hessian"] = _crosscheck(chart, rec, int(tol["hessian_modes"]), float(tol["inertia_tol"]))
            if not s["hessian"].get("matches_geometric", False):
                messages.append(f"ray {s['id']}: Hessian index does not match the conjugate count")
        timings["hessian"] = time.perf_counter() - t0

    ledger = build_ledger(records, scenario.betti_map(), scenario.max_degree)
    parity = parity_check(ledger, scenario.contractible, scenario.betti_infinite)
    if ledger.verdict == "violated":
        exit_code = 1
        messages.append(f"Morse relations violated at degree {ledger.violated_at}")
    if not parity.consistent:
        messages.append(f"parity: {parity.message}")
        if scenario.parity_policy == "fail":
            exit_code = 1

    paths = []
    for rec in records:
        z = rec.z.copy()
        if scenario.past:
            z[:, -1] *= -1.0
        paths.append(np.column_stack([rec.s, z]))
    return RunReport(scenario.to_dict(), scenario.content_hash(), summaries, paths, ledger, parity,
                     guards, exit_code, timings, messages)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)) or v is None:
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def emit_outputs(report: RunReport, out_dir) -> List[Path]:
    """Write report.json, timings.json, rays.csv, ray_<id>.csv and ledger.txt."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror}") from exc
    written = []

    def write(path: Path, text: str):
        try:
            path.write_text(text, encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc.strerror}") from exc
        written.append(path)

    write(out / "report.json", json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    write(out / "timings.json", json.dumps(report.timings, indent=2, sort_keys=True) + "\n")

    cols = ["id", "tau", "mu", "nondegenerate", "n_conjugate", "geodesic_residual", "null_residual"]
    lines = [",".join(cols)]
    for s in report.records:
        lines.append(",".join(_fmt(s[c]) for c in cols))
    write(out / "rays.csv", "\n".join(lines) + "\n")

    for s, path in zip(report.records, report.paths):
        n = path.shape[1] - 2
        header = ["s"] + [f"x_{k + 1}" for k in range(n)] + ["t"]
        rows = [",".join(header)] + [",".join(repr(float(v)) for v in row) for row in path]
        write(out / f"ray_{s['id']}.csv", "\n".join(rows) + "\n")

    write(out / "ledger.txt", format_ledger(report.ledger, report.parity))
    return written


# ---------------------------------------------------------------- argparse


def _cmd_run(args) -> int:
    try:
        sc = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        sc = replace(sc, seed=int(args.seed))
    if args.past:
        sc = replace(sc, past=True)
    report = run(sc, check_convexity=args.check_convexity, hessian_crosscheck=args.hessian_crosscheck)
    try:
        emit_outputs(report, args.out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{sc.name}: {len(report.records)} rays, ledger {report.ledger.verdict}, exit {report.exit_code}")
    for s in report.records:
        print(f"  ray {s['id']}: tau={s['tau']!r} mu={s['mu']} nondegenerate={s['nondegenerate']}")
    for m in report.messages:
        print(f"  {m}")
    return report.exit_code


def _cmd_validate(args) -> int:
    try:
        sc = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(dump_scenario(sc), end="")
    return 0


def _cmd_catalog(args) -> int:
    for name in sorted(CATALOG):
        doc = (CATALOG[name].__doc__ or "").strip().splitlines()
        print(f"{name:<30} {doc[0] if doc else ''}")
    print(f"{'tabulated':<30} alpha, delta sampled on a grid, linear interpolation")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fermat-rays",
                                     description="Light rays from an event to an observer by arrival-time shortening.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="search for rays and audit their indices")
    run_p.add_argument("scenario", type=Path)
    run_p.add_argument("--out", type=Path, required=True, help="output directory")
    run_p.add_argument("--check-convexity", action="store_true", help="run the light-convexity audit first")
    run_p.add_argument("--hessian-crosscheck", action="store_true",
                       help="compare the Hessian index with the conjugate-point count")
    run_p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run_p.add_argument("--past", action="store_true", help="search past-pointing rays instead")
    run_p.set_defaults(func=_cmd_run)

    val_p = sub.add_parser("validate", help="check a scenario file and print it with defaults")
    val_p.add_argument("scenario", type=Path)
    val_p.set_defaults(func=_cmd_validate)

    cat_p = sub.add_parser("catalog", help="list the built-in charts")
    cat_p.set_defaults(func=_cmd_catalog)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
