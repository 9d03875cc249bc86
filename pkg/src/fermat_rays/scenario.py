"""Scenario files: YAML in, validated :class:`Scenario` out, and back.

The schema is documented in ``docs/scenario.md``.  Every optional field is
filled with its default so that ``Scenario.to_dict`` is a complete echo, and
``load_scenario`` of that echo reproduces the same scenario.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import yaml

from .errors import FermatError, ScenarioError
from .metric import (CATALOG, Event, ObserverCurve, RegionSpec, SplittingChart, catalog,
                     region_all, region_annulus, region_ball, region_box, region_exterior,
                     tabulated_chart, time_reflected)
from .shortening import ShorteningConfig, StartHint

TOLERANCE_DEFAULTS = {
    "svd_tol": 1e-6,
    "hessian_modes": 8,
    "inertia_tol": 1e-8,
    "residual_tol": 1e-8,
    "dedup_radius": None,
}

CONVEXITY_DEFAULTS = {"n_samples": 32, "horizon": 4.0, "rho_star": None}

REGION_KINDS = ("all", "ball", "exterior", "annulus", "box")

TOP_LEVEL = ("name", "chart", "p", "observer", "region", "shortening", "starts", "k_starts",
             "betti", "tolerances", "convexity", "parity_policy", "max_degree", "past", "seed")


@dataclass
class Scenario:
    name: str
    chart_spec: Dict[str, Any]
    p: Event
    observer: ObserverCurve
    region_spec: Dict[str, Any]
    shortening: ShorteningConfig
    starts: List[StartHint]
    k_starts: Optional[int] = None
    betti: Optional[Dict[int, int]] = None
    contractible: bool = True
    betti_infinite: bool = False
    betti_provenance: str = ""
    tolerances: Dict[str, Any] = field(default_factory=lambda: dict(TOLERANCE_DEFAULTS))
    convexity: Dict[str, Any] = field(default_factory=lambda: dict(CONVEXITY_DEFAULTS))
    parity_policy: str = "warn"
    max_degree: Optional[int] = None
    past: bool = False
    seed: int = 0

    # ---------------------------------------------------------------- derived objects

    def base_chart(self) -> SplittingChart:
        return build_chart(self.chart_spec)

    def chart(self) -> SplittingChart:
        """Chart used for the search; t is reflected for past-pointing runs."""
        ch = self.base_chart()
        return time_reflected(ch) if self.past else ch

    def search_frame(self):
        """(p, observer) in the search chart."""
        if not self.past:
            return self.p, self.observer
        lo, hi = self.observer.t_range
        return Event(self.p.x, -self.p.t), ObserverCurve(self.observer.x_obs, (-hi, -lo))

    def region(self) -> RegionSpec:
        # schema regions are t-independent, so they serve both time directions
        return build_region(self.region_spec)

    def betti_map(self) -> Dict[int, int]:
        if self.betti is not None:
            return dict(self.betti)
        return {0: 1} if self.contractible else {}

    # ---------------------------------------------------------------- echo

    def to_dict(self) -> dict:
        cfg = asdict(self.shortening)
        starts = []
        for h in self.starts:
            d = asdict(h)
            for key in ("center", "normal"):
                if d[key] is not None:
                    d[key] = [float(v) for v in d[key]]
            d["waypoints"] = [[float(v) for v in w] for w in d["waypoints"]]
            starts.append(d)
        betti = {"contractible": self.contractible, "infinite": self.betti_infinite,
                 "provenance": self.betti_provenance,
                 "values": None if self.betti is None else {int(k): int(v) for k, v in sorted(self.betti.items())}}
        return {
            "name": self.name,
            "chart": copy.deepcopy(self.chart_spec),
            "p": {"x": self.p.x.tolist(), "t": self.p.t},
            "observer": {"x": self.observer.x_obs.tolist(), "t_range": list(self.observer.t_range)},
            "region": copy.deepcopy(self.region_spec),
            "shortening": cfg,
            "starts": starts,
            "k_starts": self.k_starts,
            "betti": betti,
            "tolerances": dict(self.tolerances),
            "convexity": dict(self.convexity),
            "parity_policy": self.parity_policy,
            "max_degree": self.max_degree,
            "past": self.past,
            "seed": self.seed,
        }

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------- builders


def build_chart(spec: Dict[str, Any]) -> SplittingChart:
    name = spec.get("name")
    if name == "tabulated":
        try:
            return tabulated_chart(spec["axes"], spec["alpha"], spec["delta"])
        except KeyError as exc:
            raise ScenarioError(f"chart: tabulated chart needs 'axes', 'alpha' and 'delta' ({exc} missing)")
        except ValueError as exc:
            raise ScenarioError(f"chart: {exc}") from exc
    if name not in CATALOG:
        raise ScenarioError(f"chart.name: unknown chart {name!r}; valid names: "
                            f"{sorted(list(CATALOG) + ['tabulated'])}")
    try:
        return catalog(name, spec.get("params") or {})
    except (ValueError, FermatError) as exc:
        raise ScenarioError(f"chart.params: {exc}") from exc


def build_region(spec: Dict[str, Any]) -> RegionSpec:
    kind = spec.get("kind", "all")
    try:
        if kind == "all":
            return region_all()
        if kind == "ball":
            return region_ball(spec["center"], spec["radius"])
        if kind == "exterior":
            return region_exterior(spec["center"], spec["radius"])
        if kind == "annulus":
            return region_annulus(spec["center"], spec["inner"], spec["outer"])
        if kind == "box":
            return region_box(spec["lower"], spec["upper"])
    except KeyError as exc:
        raise ScenarioError(f"region: kind {kind!r} needs field {exc}") from exc
    except ValueError as exc:
        raise ScenarioError(f"region: {exc}") from exc
    raise ScenarioError(f"region.kind: unknown region {kind!r}; valid kinds: {list(REGION_KINDS)}")


def _vector(value, where: str, size: Optional[int] = None) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float).reshape(-1)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: expected a list of numbers, got {value!r}") from exc
    if size is not None and arr.size != size:
        raise ScenarioError(f"{where}: expected {size} components, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(f"{where}: components must be finite")
    return arr


def _number(value, where: str, kind=float):
    # YAML 1.1 reads "1e-8" as a string, so numbers are coerced here
    if value is None:
        return None
    try:
        out = kind(float(value)) if kind is int else float(value)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: expected a number, got {value!r}") from exc
    if kind is int and float(value) != out:
        raise ScenarioError(f"{where}: expected an integer, got {value!r}")
    return out


_INT_FIELDS = {"N_segments", "max_iters", "local_min_grid", "newton_steps", "descent_iters",
               "lift_substeps", "refine_steps", "hessian_modes", "n_samples"}


def _numbers(raw: dict, where: str, skip=()) -> dict:
    out = {}
    for k, v in raw.items():
        if k in skip:
            out[k] = v
        else:
            out[k] = _number(v, f"{where}.{k}", int if k in _INT_FIELDS else float)
    return out


def _shortening(raw) -> ShorteningConfig:
    raw = dict(raw or {})
    known = {f.name for f in fields(ShorteningConfig)}
    extra = sorted(set(raw) - known)
    if extra:
        raise ScenarioError(f"shortening: unknown fields {extra}; valid: {sorted(known)}")
    raw = _numbers(raw, "shortening", skip=("segment_method",))
    try:
        return ShorteningConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"shortening: {exc}") from exc


def _starts(raw) -> List[StartHint]:
    if raw is None:
        return [StartHint()]
    if not isinstance(raw, list):
        raise ScenarioError("starts: expected a list of start hints")
    known = {f.name for f in fields(StartHint)}
    out = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ScenarioError(f"starts[{i}]: expected a mapping")
        extra = sorted(set(item) - known)
        if extra:
            raise ScenarioError(f"starts[{i}]: unknown fields {extra}")
        item = dict(item)
        for key in ("side", "offset", "amplitude"):
            if key in item:
                item[key] = _number(item[key], f"starts[{i}].{key}")
        for key in ("kinks", "turns", "seed"):
            if item.get(key) is not None:
                item[key] = _number(item[key], f"starts[{i}].{key}", int)
        for key in ("center", "normal"):
            if item.get(key) is not None:
                item[key] = tuple(float(v) for v in item[key])
        if "waypoints" in item:
            item["waypoints"] = tuple(tuple(float(v) for v in w) for w in item["waypoints"] or ())
        try:
            out.append(StartHint(**item))
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"starts[{i}]: {exc}") from exc
    return out


def scenario_from_dict(data: dict) -> Scenario:
    """Validate a parsed scenario mapping and fill in defaults."""
    if not isinstance(data, dict):
        raise ScenarioError("scenario: top level must be a mapping")
    extra = sorted(set(data) - set(TOP_LEVEL))
    if extra:
        raise ScenarioError(f"scenario: unknown fields {extra}; valid: {list(TOP_LEVEL)}")
    for key in ("chart", "p", "observer"):
        if key not in data:
            raise ScenarioError(f"{key}: required field missing")
    chart_spec = data["chart"]
    if isinstance(chart_spec, str):
        chart_spec = {"name": chart_spec, "params": {}}
    if not isinstance(chart_spec, dict) or "name" not in chart_spec:
        raise ScenarioError("chart: expected a mapping with a 'name'")
    chart_spec = copy.deepcopy(chart_spec)
    if chart_spec["name"] != "tabulated":
        chart_spec.setdefault("params", {})
    chart = build_chart(chart_spec)
    n = chart.n_space

    p_raw, o_raw = data["p"], data["observer"]
    if not isinstance(p_raw, dict) or "x" not in p_raw:
        raise ScenarioError("p: expected a mapping with 'x' (and optional 't')")
    if not isinstance(o_raw, dict) or "x" not in o_raw or "t_range" not in o_raw:
        raise ScenarioError("observer: expected a mapping with 'x' and 't_range'")
    p = Event(_vector(p_raw["x"], "p.x", n), float(p_raw.get("t", 0.0)))
    tr = _vector(o_raw["t_range"], "observer.t_range", 2)
    try:
        obs = ObserverCurve(_vector(o_raw["x"], "observer.x", n), tuple(tr))
    except ValueError as exc:
        raise ScenarioError(f"observer.t_range: {exc}") from exc
    if np.allclose(p.x, obs.x_obs, rtol=0.0, atol=1e-12):
        raise ScenarioError("observer.x: the observer worldline passes through p "
                            "(assumption violated: p must not lie on the observer curve)")
    if not bool(chart.contains(p.z)):
        raise ScenarioError("p: event lies outside the chart domain")
    if not bool(chart.contains(np.append(obs.x_obs, 0.5 * (tr[0] + tr[1])))):
        raise ScenarioError("observer.x: observer worldline lies outside the chart domain")
    if tr[1] <= p.t:
        raise ScenarioError("observer.t_range: range ends before p.t, so no future-pointing "
                            "curve from p can arrive (assumption violated: arrivals bracketed)")

    region_spec = dict(data.get("region") or {"kind": "all"})
    region_spec.setdefault("kind", "all")
    region = build_region(region_spec)
    if not bool(region.contains(p.z)):
        raise ScenarioError("region: p lies outside the region")
    if not bool(region.contains(np.append(obs.x_obs, p.t))):
        raise ScenarioError("region: the observer worldline lies outside the region")

    betti_raw = data.get("betti") or {}
    if not isinstance(betti_raw, dict):
        raise ScenarioError("betti: expected a mapping")
    values = betti_raw.get("values")
    if values is not None:
        try:
            values = {int(k): int(v) for k, v in values.items()}
        except (AttributeError, TypeError, ValueError) as exc:
            raise ScenarioError("betti.values: expected a map degree -> integer") from exc
        if any(k < 0 or v < 0 for k, v in values.items()):
            raise ScenarioError("betti.values: degrees and values must be nonnegative")

    tol = dict(TOLERANCE_DEFAULTS)
    tol_raw = data.get("tolerances") or {}
    extra = sorted(set(tol_raw) - set(TOLERANCE_DEFAULTS))
    if extra:
        raise ScenarioError(f"tolerances: unknown fields {extra}; valid: {sorted(TOLERANCE_DEFAULTS)}")
    tol.update(_numbers(tol_raw, "tolerances"))
    conv = dict(CONVEXITY_DEFAULTS)
    conv_raw = data.get("convexity") or {}
    extra = sorted(set(conv_raw) - set(CONVEXITY_DEFAULTS))
    if extra:
        raise ScenarioError(f"convexity: unknown fields {extra}; valid: {sorted(CONVEXITY_DEFAULTS)}")
    conv.update(_numbers(conv_raw, "convexity"))

    policy = data.get("parity_policy", "warn")
    if policy not in ("warn", "fail"):
        raise ScenarioError("parity_policy: expected 'warn' or 'fail'")
    k_starts = data.get("k_starts")
    if k_starts is not None and int(k_starts) < 1:
        raise ScenarioError("k_starts: must be a positive integer")
    max_degree = data.get("max_degree")
    if max_degree is not None and int(max_degree) < 0:
        raise ScenarioError("max_degree: must be nonnegative")

    return Scenario(
        name=str(data.get("name", "scenario")),
        chart_spec=chart_spec,
        p=p,
        observer=obs,
        region_spec=region_spec,
        shortening=_shortening(data.get("shortening")),
        starts=_starts(data.get("starts")),
        k_starts=None if k_starts is None else int(k_starts),
        betti=values,
        contractible=bool(betti_raw.get("contractible", True)),
        betti_infinite=bool(betti_raw.get("infinite", False)),
        betti_provenance=str(betti_raw.get("provenance", "")),
        tolerances=tol,
        convexity=conv,
        parity_policy=policy,
        max_degree=None if max_degree is None else int(max_degree),
        past=bool(data.get("past", False)),
        seed=int(data.get("seed", 0)),
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read scenario file ({exc.strerror})") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark is not None else "unknown position"
        raise ScenarioError(f"{path}: parse error at {where}: {getattr(exc, 'problem', exc)}") from exc
    return scenario_from_dict(data)


def dump_scenario(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario.to_dict(), sort_keys=False)


__all__ = ["Scenario", "load_scenario", "scenario_from_dict", "dump_scenario", "build_chart",
           "build_region", "TOLERANCE_DEFAULTS", "CONVEXITY_DEFAULTS"]
