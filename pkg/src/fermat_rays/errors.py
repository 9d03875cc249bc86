"""Exception types raised by the solver."""

from __future__ import annotations

import numpy as np


class FermatError(Exception):
    """Base class for all solver errors."""


class OutOfDomainError(FermatError):
    def __init__(self, point, s_exit=None, message="point outside chart domain"):
        self.point = np.asarray(point, dtype=float)
        self.s_exit = s_exit
        where = f" at s={s_exit:.6g}" if s_exit is not None else ""
        super().__init__(f"{message}{where}: {self.point.tolist()}")


class DegenerateMetricError(FermatError):
    pass


class DegenerateCurveError(FermatError):
    pass


class NotOnObserverError(FermatError):
    pass


class OutsideWorldlineError(FermatError):
    """Arrival time falls outside the observer's parameter interval."""


class LocalMinimizerFailure(FermatError):
    """Newton refinement of a segment minimizer did not converge.

    ``fallback`` holds the coarse (descent-stage) curve so callers can continue.
    """

    def __init__(self, message, fallback=None):
        self.fallback = fallback
        super().__init__(message)


class RefinementFailure(FermatError):
    def __init__(self, message, polyline=None):
        self.polyline = polyline
        super().__init__(message)


class BasisDegenerateError(FermatError):
    pass


class ShorteningAborted(FermatError):
    """The shortening flow stopped without producing a geodesic.

    ``reason`` is one of ``"nonconvergence"``, ``"pseudo-coercivity-violation"``,
    ``"region-exit"``, ``"outside-worldline-domain"``, ``"monotonicity"``,
    ``"local-minimizer"``, ``"refinement-failure"``, ``"out-of-domain"``,
    ``"rho-star-spacing"``.
    """

    def __init__(self, reason, message, tau_history=None, state=None):
        self.reason = reason
        self.tau_history = list(tau_history or [])
        self.state = state
        super().__init__(f"{reason}: {message}")


class ScenarioError(FermatError):
    """Scenario file could not be parsed or failed validation."""
