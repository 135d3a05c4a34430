"""Time-ordered hyperevent sequences and actor populations.

An :class:`EventStore` holds one :class:`NetworkEvents` per network.  Networks
are fully independent; no statistic ever mixes events across networks.
"""
from __future__ import annotations

import bisect
import csv
import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Mapping, Sequence

__all__ = [
    "Event",
    "EventDataError",
    "EventStore",
    "NetworkEvents",
    "events_before",
    "format_number",
    "load_events",
    "load_roster",
    "population_at",
    "write_events",
]

CSV_COLUMNS = ["event_id", "time", "network", "actors", "citations"]
ACTOR_SEP = ";"


class EventDataError(ValueError):
    """Raised for malformed event or roster records."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


@dataclass(frozen=True)
class Event:
    """One relational hyperevent.

    ``outcome`` is the normalized impact; it is filled in by
    :func:`rhem.outcome.normalize` or supplied directly.
    """

    event_id: str
    time: float
    network: str
    actors: tuple
    citations: float | None = None
    outcome: float | None = None

    def __post_init__(self):
        if len(self.actors) == 0:
            raise EventDataError(f"event {self.event_id!r} has no actors")
        if len(set(self.actors)) != len(self.actors):
            dup = sorted({a for a in self.actors if self.actors.count(a) > 1})
            raise EventDataError(
                f"event {self.event_id!r} lists actor(s) {', '.join(dup)} more than once"
            )
        if not math.isfinite(self.time):
            raise EventDataError(f"event {self.event_id!r} has non-finite time")
        if self.citations is not None and not self.citations >= 0:
            raise EventDataError(f"event {self.event_id!r} has negative citations")

    @property
    def size(self):
        return len(self.actors)


@dataclass
class NetworkEvents:
    """Events and population of a single network.

    ``events`` is sorted by ``(time, event_id)``.  ``actor_index`` maps each
    actor to ``(event index, event size, outcome)`` triples in event order.
    """

    name: str
    events: tuple
    entry_times: dict
    inferred_population: bool = True
    times: list = field(init=False, repr=False)
    actor_index: dict = field(init=False, repr=False)
    _pop_order: list = field(init=False, repr=False)
    _pop_times: list = field(init=False, repr=False)

    def __post_init__(self):
        self.events = tuple(sorted(self.events, key=lambda e: (e.time, e.event_id)))
        self.times = [e.time for e in self.events]
        index: dict = {}
        for i, ev in enumerate(self.events):
            if ev.network != self.name:
                raise EventDataError(
                    f"event {ev.event_id!r} belongs to {ev.network!r}, not {self.name!r}"
                )
            for a in ev.actors:
                index.setdefault(a, []).append((i, ev.size, ev.outcome))
        self.actor_index = index
        for a, entries in index.items():
            first = self.events[entries[0][0]].time
            entry = self.entry_times.get(a)
            if entry is None or entry > first:
                if self.inferred_population:
                    self.entry_times[a] = first if entry is None else min(entry, first)
                else:
                    raise EventDataError(
                        f"actor {a!r} participates at time {format_number(first)} in "
                        f"network {self.name!r} but the roster enters it "
                        + ("never" if entry is None else f"at {format_number(entry)}")
                    )
        order = sorted(self.entry_times.items(), key=lambda kv: (kv[1], kv[0]))
        self._pop_order = [a for a, _ in order]
        self._pop_times = [t for _, t in order]

    def __len__(self):
        return len(self.events)

    @property
    def actors(self):
        return set(self.entry_times)

    def events_before(self, t) -> Iterator[Event]:
        stop = bisect.bisect_left(self.times, t)
        return iter(self.events[:stop])

    def population_at(self, t) -> list:
        """Actors whose entry time is ``<= t``, in a deterministic order."""
        stop = bisect.bisect_right(self._pop_times, t)
        return self._pop_order[:stop]

    def time_groups(self) -> Iterator[tuple]:
        """Yield ``(time, [events])`` for each distinct event time, in order."""
        i = 0
        n = len(self.events)
        while i < n:
            t = self.times[i]
            j = bisect.bisect_right(self.times, t, lo=i)
            yield t, list(self.events[i:j])
            i = j


class EventStore:
    """Immutable collection of per-network event sequences."""

    def __init__(self, events: Iterable[Event] = (), roster: Mapping | None = None):
        by_net: dict = {}
        for ev in events:
            by_net.setdefault(ev.network, []).append(ev)
        roster = roster or {}
        nets = {}
        for name in sorted(set(by_net) | set(roster)):
            entries = dict(roster.get(name, {}))
            nets[name] = NetworkEvents(
                name, tuple(by_net.get(name, ())), entries,
                inferred_population=name not in roster,
            )
        self._networks = nets

    @property
    def networks(self) -> list:
        return list(self._networks)

    def network(self, name) -> NetworkEvents:
        try:
            return self._networks[name]
        except KeyError:
            raise KeyError(f"unknown network {name!r}") from None

    def __iter__(self):
        for net in self._networks.values():
            yield from net.events

    def __len__(self):
        return sum(len(n) for n in self._networks.values())

    def __eq__(self, other):
        if not isinstance(other, EventStore):
            return NotImplemented
        if self.networks != other.networks:
            return False
        for name in self.networks:
            a, b = self.network(name), other.network(name)
            if a.events != b.events or a.entry_times != b.entry_times:
                return False
        return True

    def roster(self) -> dict:
        """Explicit roster for networks whose population was supplied."""
        return {
            name: dict(net.entry_times)
            for name, net in self._networks.items()
            if not net.inferred_population
        }

    def replace_events(self, events: Iterable[Event]) -> "EventStore":
        return EventStore(events, roster=self.roster())

    def filter_max_actors(self, limit: int) -> "EventStore":
        """Drop events with more than ``limit`` actors."""
        return self.replace_events(ev for ev in self if ev.size <= limit)


def events_before(store: EventStore, network, t) -> Iterator[Event]:
    return store.network(network).events_before(t)


def population_at(store: EventStore, network, t) -> set:
    return set(store.network(network).population_at(t))


def format_number(x) -> str:
    """Shortest text that parses back to the same float; integers lose ``.0``."""
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _parse_float(text, what, line, path, required=True):
    if text is None or (isinstance(text, str) and text.strip() == ""):
        if required:
            raise EventDataError(f"missing {what}", line, path)
        return None
    if isinstance(text, bool):
        raise EventDataError(f"non-numeric {what}: {text!r}", line, path)
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise EventDataError(f"non-numeric {what}: {text!r}", line, path) from None
    if not math.isfinite(value):
        raise EventDataError(f"non-finite {what}: {text!r}", line, path)
    return value


def _make_event(rec, line, path):
    time = _parse_float(rec.get("time"), "time", line, path)
    network = rec.get("network")
    if network is None or str(network).strip() == "":
        raise EventDataError("missing network", line, path)
    actors = rec.get("actors")
    if isinstance(actors, str):
        actors = [a.strip() for a in actors.split(ACTOR_SEP)]
    if not actors or any(not isinstance(a, str) or a == "" for a in actors):
        raise EventDataError("actor list is empty or contains blank ids", line, path)
    event_id = rec.get("event_id")
    if event_id is None or str(event_id).strip() == "":
        event_id = f"L{line}"
    citations = _parse_float(rec.get("citations"), "citations", line, path, required=False)
    outcome = _parse_float(rec.get("outcome"), "outcome", line, path, required=False)
    try:
        return Event(str(event_id), time, str(network), tuple(actors), citations, outcome)
    except EventDataError as exc:
        raise EventDataError(str(exc), line, path) from None


def _infer_format(path, fmt):
    if fmt is not None:
        if fmt not in ("csv", "jsonl"):
            raise ValueError(f"unknown event format {fmt!r}")
        return fmt
    ext = os.path.splitext(str(path))[1].lower()
    return "jsonl" if ext in (".jsonl", ".json", ".ndjson") else "csv"


def _read_records(path, fmt):
    if fmt == "csv":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                return
            missing = {"time", "network", "actors"} - set(reader.fieldnames)
            if missing:
                raise EventDataError(
                    f"header lacks column(s) {', '.join(sorted(missing))}", 1, path
                )
            for rec in reader:
                yield reader.line_num, rec
    else:
        with open(path, encoding="utf-8") as fh:
            for lineno, text in enumerate(fh, start=1):
                if not text.strip():
                    continue
                try:
                    rec = json.loads(text)
                except json.JSONDecodeError as exc:
                    raise EventDataError(f"invalid JSON ({exc.msg})", lineno, path) from None
                if not isinstance(rec, dict):
                    raise EventDataError("record is not a JSON object", lineno, path)
                yield lineno, rec


def load_roster(path) -> dict:
    """Read a roster CSV (``actor,network,entry_time``) into nested dicts."""
    roster: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return roster
        missing = {"actor", "network", "entry_time"} - set(reader.fieldnames)
        if missing:
            raise EventDataError(f"roster header lacks {', '.join(sorted(missing))}", 1, path)
        for rec in reader:
            line = reader.line_num
            actor = (rec.get("actor") or "").strip()
            network = (rec.get("network") or "").strip()
            if not actor or not network:
                raise EventDataError("roster record lacks actor or network", line, path)
            t = _parse_float(rec.get("entry_time"), "entry_time", line, path)
            roster.setdefault(network, {})[actor] = t
    return roster


def load_events(path, format=None, roster=None, max_actors=None) -> EventStore:
    """Load events from ``csv`` or ``jsonl``.

    Parameters
    ----------
    path : path-like
        Event file with a header row (CSV) or one JSON object per line.
    format : {"csv", "jsonl"}, optional
        Inferred from the extension when omitted.
    roster : path-like or mapping, optional
        ``actor,network,entry_time`` CSV, or ``{network: {actor: time}}``.
        Without it each actor enters at its first event.
    max_actors : int, optional
        Drop events with more actors than this (a data filter only).
    """
    fmt = _infer_format(path, format)
    events = []
    seen_ids: dict = {}
    for line, rec in _read_records(path, fmt):
        ev = _make_event(rec, line, path)
        key = (ev.network, ev.event_id)
        if key in seen_ids:
            raise EventDataError(
                f"duplicate event_id {ev.event_id!r} (first seen on line {seen_ids[key]})",
                line, path,
            )
        seen_ids[key] = line
        if max_actors is not None and ev.size > max_actors:
            continue
        events.append(ev)
    if roster is not None and not isinstance(roster, Mapping):
        roster = load_roster(roster)
    return EventStore(events, roster=roster)


def write_events(store: EventStore | Sequence[Event], path, format=None, outcome=None):
    """Write events in the loader's format; ``outcome`` column only when any is set."""
    fmt = _infer_format(path, format)
    events = list(store)
    if outcome is None:
        outcome = any(ev.outcome is not None for ev in events)
    if fmt == "csv":
        cols = CSV_COLUMNS + (["outcome"] if outcome else [])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for ev in events:
                row = [
                    ev.event_id,
                    format_number(ev.time),
                    ev.network,
                    ACTOR_SEP.join(ev.actors),
                    "" if ev.citations is None else format_number(ev.citations),
                ]
                if outcome:
                    row.append("" if ev.outcome is None else format_number(ev.outcome))
                w.writerow(row)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            for ev in events:
                rec = {
                    "event_id": ev.event_id,
                    "time": ev.time,
                    "network": ev.network,
                    "actors": list(ev.actors),
                    "citations": ev.citations,
                }
                if outcome:
                    rec["outcome"] = ev.outcome
                fh.write(json.dumps(rec) + "\n")


def write_roster(store: EventStore, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["actor", "network", "entry_time"])
        for name in store.networks:
            net = store.network(name)
            for actor in net.population_at(math.inf):
                w.writerow([actor, name, format_number(net.entry_times[actor])])


def with_outcomes(events: Iterable[Event], outcomes: Mapping) -> list:
    """Copy events, setting ``outcome`` from ``{(network, event_id): y}``."""
    return [replace(ev, outcome=outcomes[(ev.network, ev.event_id)]) for ev in events]
