"""Relational hyperevent models (RHEM) and relational hyperevent outcome models (RHOM).

Statistics over time-stamped multi-actor event streams, size-conditioned
case-control sampling, stratified Cox partial likelihood and OLS outcome fits,
goodness-of-fit diagnostics and synthetic data.
"""
from .events import Event, EventStore, load_events, write_events
from .kernels import BACKEND
from .statistics import StatCatalog, StatState, Statistic, parse_catalog

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Event",
    "EventStore",
    "StatCatalog",
    "StatState",
    "Statistic",
    "load_events",
    "parse_catalog",
    "write_events",
]
