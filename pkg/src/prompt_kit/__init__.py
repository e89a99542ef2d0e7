"""Trace-driven memory profiling framework with pluggable profiler modules."""

from .events import Event, EventKind, EventSpec, parse_event_spec
from .frontend import parse_trace, replay, specialize
from .oracle import oracle_profile
from .pipeline import profile_events

__version__ = "0.1.0"

__all__ = [
    "Event", "EventKind", "EventSpec", "parse_event_spec",
    "parse_trace", "replay", "specialize",
    "oracle_profile", "profile_events",
]
