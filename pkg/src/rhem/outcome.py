"""Discipline-and-year normalized impact.

``y_e`` is the raw citation count minus the mean citation count over all
events sharing the event's network and time.
"""
from __future__ import annotations

import csv
import math
from dataclasses import replace

from .events import EventDataError, EventStore, format_number

__all__ = ["normalization_table", "normalize", "write_table", "read_table"]


def normalization_table(store: EventStore) -> dict:
    """``{(network, time): (count, mean citations)}`` over the full store."""
    cells: dict = {}
    for ev in store:
        if ev.citations is None:
            raise EventDataError(
                f"event {ev.event_id!r} in network {ev.network!r} has no citations; "
                "normalization needs citations on every event of the network"
            )
        cells.setdefault((ev.network, ev.time), []).append(ev.citations)
    return {key: (len(vals), math.fsum(vals) / len(vals)) for key, vals in sorted(cells.items())}


def normalize(store: EventStore) -> EventStore:
    """Return a copy of ``store`` whose events carry ``outcome = c_e - cell mean``."""
    table = normalization_table(store)
    events = []
    for ev in store:
        _, mean = table[(ev.network, ev.time)]
        events.append(replace(ev, outcome=ev.citations - mean))
    return store.replace_events(events)


def write_table(table: dict, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["network", "time", "count", "mean"])
        for (network, time), (count, mean) in table.items():
            w.writerow([network, format_number(time), count, repr(mean)])


def read_table(path) -> dict:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            out[(rec["network"], float(rec["time"]))] = (int(rec["count"]), float(rec["mean"]))
    return out
