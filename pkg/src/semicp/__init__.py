"""Exact simulation and checks for the semi-infected contact process on the complete graph."""

from .chain import (
    ABSORBED,
    Counts,
    EventKind,
    FullConfiguration,
    ModelParams,
    RateVector,
    Trajectory,
    apply_event,
    simulate,
    simulate_full,
    step,
    transition_rates,
)
from .rng import RngStream, rng_stream

__version__ = "0.1.0"

__all__ = [
    "ABSORBED",
    "Counts",
    "EventKind",
    "FullConfiguration",
    "ModelParams",
    "RateVector",
    "RngStream",
    "Trajectory",
    "apply_event",
    "rng_stream",
    "simulate",
    "simulate_full",
    "step",
    "transition_rates",
]
