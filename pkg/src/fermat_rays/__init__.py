"""Lightlike geodesics from an event to an observer worldline by arrival-time shortening."""

__version__ = "0.1.0"
