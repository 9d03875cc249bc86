import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def lens_run():
    """The point-lens scenario through the full pipeline, timed."""
    from fermat_rays.cli import run
    from fermat_rays.scenario import load_scenario

    sc = load_scenario(SCENARIOS / "lens.yaml")
    t0 = time.perf_counter()
    report = run(sc, hessian_crosscheck=True)
    return report, time.perf_counter() - t0


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
