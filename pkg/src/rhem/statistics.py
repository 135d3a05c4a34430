"""Hyperedge statistics over the network of past events.

:class:`StatState` keeps every advanced event in append-only storage with
per-actor incidence lists.  A query at time ``t`` sees exactly the events with
time strictly before ``t``; events advanced at ``t`` itself stay invisible
until the clock moves on.  Decay is applied on read: an event at ``t0``
weighs ``2 ** -((t - t0) / half_life)`` at query time ``t``.

Subset repetition and prior success use the intersection identity

    sum_{h' in C(h, p)} deg(h') = sum_{e past} w(e) * C(|h & h_e|, p)

so no subsets are ever materialized.
"""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .events import Event, format_number

__all__ = [
    "Covariates",
    "StatCatalog",
    "StatState",
    "Statistic",
    "advance",
    "closure",
    "evaluate_row",
    "hyperedge_degree",
    "num_collab",
    "parse_catalog",
    "prior_success",
    "succ_disparity",
    "sub_rep",
]

_KERNEL_KIND = {
    "sub_rep": kernels.SUB_REP,
    "prior_succ": kernels.PRIOR_SUCC,
    "closure": kernels.CLOSURE,
    "succ_disparity": kernels.SUCC_DISPARITY,
    "num_collab": kernels.NUM_COLLAB,
    "num_collab_succ": kernels.NUM_COLLAB_SUCC,
    "num_auth": kernels.NUM_AUTH,
}
_ORDERED = {"sub_rep", "prior_succ"}
_COVARIATE = {"cov_mean", "cov_disparity", "cov_same"}
OUTCOME_KINDS = {"prior_succ", "succ_disparity", "num_collab_succ"}


@dataclass(frozen=True)
class Statistic:
    """One hyperedge statistic: ``kind``, an order for ordered kinds, or a covariate."""

    kind: str
    order: int = 0
    covariate: str | None = None

    def __post_init__(self):
        if self.kind in _ORDERED:
            if not isinstance(self.order, int) or self.order < 1:
                raise ValueError(f"{self.kind} needs an order >= 1, got {self.order!r}")
        elif self.kind in _COVARIATE:
            if not self.covariate:
                raise ValueError(f"{self.kind} needs a covariate name")
        elif self.kind not in _KERNEL_KIND:
            raise ValueError(f"unknown statistic kind {self.kind!r}")

    @property
    def name(self):
        if self.kind in _ORDERED:
            return f"{self.kind}_{self.order}"
        if self.kind in _COVARIATE:
            return f"{self.kind}_{self.covariate}"
        return self.kind

    def __str__(self):
        return self.name

    @classmethod
    def from_name(cls, name: str) -> "Statistic":
        """Inverse of :attr:`name`."""
        for kind in _ORDERED:
            prefix = kind + "_"
            if name.startswith(prefix) and name[len(prefix):].isdigit():
                return cls(kind, int(name[len(prefix):]))
        for kind in _COVARIATE:
            if name.startswith(kind + "_"):
                return cls(kind, covariate=name[len(kind) + 1:])
        return cls(name)


class StatCatalog(tuple):
    """Ordered, duplicate-free tuple of :class:`Statistic`."""

    def __new__(cls, stats: Iterable[Statistic] = ()):
        stats = tuple(stats)
        names = [s.name for s in stats]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate statistics in catalog: {names}")
        return super().__new__(cls, stats)

    @property
    def names(self):
        return [s.name for s in self]

    @property
    def needs_outcome(self):
        return any(s.kind in OUTCOME_KINDS for s in self)

    @property
    def covariates(self):
        return sorted({s.covariate for s in self if s.covariate})

    def check_rhem(self):
        """Size is constant within a size-conditioned stratum; reject it."""
        if any(s.kind == "num_auth" for s in self):
            raise ValueError(
                "num_auth is constant within every stratum and cannot enter an RHEM catalog"
            )
        return self

    def without(self, kind):
        return StatCatalog(s for s in self if s.kind != kind)

    def __str__(self):
        return ", ".join(self.names)


_TOKEN = re.compile(r"^([a-z_]+)(?::(.+))?$")


def parse_catalog(text: str | Sequence[str]) -> StatCatalog:
    """Parse ``"sub_rep:1-3, closure, prior_succ:1-3, succ_disparity"``.

    Ordered kinds take ``:p`` or ``:p-q``; covariate kinds take ``:name``.
    """
    items = text.split(",") if isinstance(text, str) else list(text)
    stats = []
    for raw in items:
        tok = raw.strip()
        if not tok:
            continue
        m = _TOKEN.match(tok)
        if not m:
            raise ValueError(f"cannot parse statistic {tok!r}")
        kind, arg = m.group(1), m.group(2)
        if kind in _ORDERED:
            if arg is None:
                raise ValueError(f"{kind} needs an order, e.g. {kind}:1-3")
            try:
                if "-" in arg:
                    lo, hi = (int(x) for x in arg.split("-", 1))
                else:
                    lo = hi = int(arg)
            except ValueError:
                raise ValueError(f"bad order range {arg!r} for {kind}") from None
            if lo < 1 or hi < lo:
                raise ValueError(f"orders must satisfy 1 <= p <= q, got {arg!r}")
            stats.extend(Statistic(kind, p) for p in range(lo, hi + 1))
        elif kind in _COVARIATE:
            if not arg:
                raise ValueError(f"{kind} needs a covariate name, e.g. {kind}:affiliation")
            stats.append(Statistic(kind, covariate=arg.strip()))
        else:
            if arg is not None:
                raise ValueError(f"{kind} takes no argument")
            stats.append(Statistic(kind))
    return StatCatalog(stats)


DEFAULT_CATALOG = "sub_rep:1-3, closure, prior_succ:1-3, succ_disparity"


class Covariates:
    """Static actor attributes; numeric where every value parses as a float."""

    def __init__(self, columns: Mapping[str, Mapping[str, object]]):
        self._cols = {}
        self.numeric = {}
        for name, values in columns.items():
            vals = dict(values)
            try:
                self._cols[name] = {a: float(v) for a, v in vals.items()}
                self.numeric[name] = True
            except (TypeError, ValueError):
                self._cols[name] = {a: str(v) for a, v in vals.items()}
                self.numeric[name] = False

    @classmethod
    def from_csv(cls, path):
        """Wide CSV: ``actor,<cov1>,<cov2>,...``; blank cells mean missing."""
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if not reader.fieldnames or "actor" not in reader.fieldnames:
                raise ValueError(f"{path}: covariate file needs an 'actor' column")
            names = [c for c in reader.fieldnames if c != "actor"]
            cols = {n: {} for n in names}
            for rec in reader:
                for n in names:
                    v = rec.get(n)
                    if v is not None and v.strip() != "":
                        cols[n][rec["actor"]] = v.strip()
        return cls(cols)

    @property
    def names(self):
        return list(self._cols)

    def values(self, name, actors):
        if name not in self._cols:
            raise KeyError(f"covariate {name!r} not in data")
        col = self._cols[name]
        try:
            return [col[a] for a in actors]
        except KeyError as exc:
            raise KeyError(f"covariate {name!r} missing for actor {exc.args[0]!r}") from None

    def aggregate(self, stat: Statistic, actors):
        vals = self.values(stat.covariate, actors)
        if stat.kind == "cov_same":
            # share of members in the largest category
            counts: dict = {}
            for v in vals:
                counts[v] = counts.get(v, 0) + 1
            return max(counts.values()) / len(vals)
        if not self.numeric[stat.covariate]:
            raise ValueError(f"{stat.kind} needs a numeric covariate, {stat.covariate!r} is not")
        if stat.kind == "cov_mean":
            return math.fsum(vals) / len(vals)
        if len(vals) < 2:
            return 0.0
        mean = math.fsum(vals) / len(vals)
        return math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / (len(vals) - 1))


class StatState:
    """Incremental network of past events for one network.

    Parameters
    ----------
    network : str, optional
        Only events of this network are accepted.
    half_life : float, optional
        Exponential decay half-life in time units; ``None`` disables decay.
    backend : {"cython", "python"}, optional
        Kernel implementation; defaults to the compiled one when available.
    """

    def __init__(self, network=None, half_life=None, backend=None, covariates=None):
        if half_life is not None and not half_life > 0:
            raise ValueError(f"half_life must be positive, got {half_life!r}")
        self.network = network
        self.half_life = half_life
        self.covariates = covariates
        backends = kernels.available_backends()
        if backend is None:
            self._kernel = kernels.KernelState()
            self.backend = kernels.BACKEND
        else:
            if backend not in backends:
                raise ValueError(f"backend {backend!r} unavailable; have {sorted(backends)}")
            self._kernel = backends[backend]()
            self.backend = backend
        self.clock = -math.inf
        self._ids: dict = {}
        self._names: list = []

    def actor_id(self, actor, create=False):
        i = self._ids.get(actor)
        if i is None and create:
            i = len(self._names)
            self._ids[actor] = i
            self._names.append(actor)
        return -1 if i is None else i

    @property
    def n_events(self):
        return self._kernel.n_events

    def advance(self, batch: Sequence[Event], time=None):
        """Stage ``batch`` (all at one time); visible to queries after that time."""
        batch = list(batch)
        if not batch:
            if time is not None:
                self._move_clock(float(time))
            return self
        t = batch[0].time if time is None else float(time)
        for ev in batch:
            if ev.time != t:
                raise ValueError(
                    f"batch mixes times {format_number(t)} and {format_number(ev.time)}"
                )
            if self.network is not None and ev.network != self.network:
                raise ValueError(
                    f"event {ev.event_id!r} is in network {ev.network!r}, state is {self.network!r}"
                )
        self._move_clock(t)
        for ev in batch:
            ids = [self.actor_id(a, create=True) for a in ev.actors]
            y = 0.0 if ev.outcome is None else float(ev.outcome)
            self._kernel.add_event(ids, t, y)
        return self

    def _move_clock(self, t):
        if t < self.clock:
            raise ValueError(
                f"time moves backwards: {format_number(t)} < clock {format_number(self.clock)}"
            )
        self.clock = t

    def weight(self, event_time, t):
        if self.half_life is None:
            return 1.0
        return 2.0 ** (-(t - event_time) / self.half_life)

    def _query_time(self, t):
        return self.clock if t is None else float(t)

    def past_events(self, actor, t=None):
        """Indices of visible past events containing ``actor``."""
        t = self._query_time(t)
        n_vis = self._kernel.n_visible(t)
        return [e for e in self._kernel.events_of(self.actor_id(actor)) if e < n_vis]

    def event_record(self, e):
        """``(time, size, outcome, actor names)`` for stored event ``e``."""
        time, size, outcome, members = self._kernel.event(e)
        return time, size, outcome, tuple(self._names[m] for m in members)

    def pair_weight(self, u, w, t=None):
        """Decayed number of past events containing both ``u`` and ``w``."""
        return hyperedge_degree(self, (u, w), t)

    def co_actors(self, u, t=None) -> dict:
        """Co-occurrence map of ``u``: co-actor -> decayed pair weight."""
        t = self._query_time(t)
        out: dict = {}
        for e in self.past_events(u, t):
            time, _, _, members = self.event_record(e)
            w = self.weight(time, t)
            for b in members:
                if b != u:
                    out[b] = out.get(b, 0.0) + w
        return out

    def evaluate(self, hyperedges: Sequence[Sequence], catalog: StatCatalog, t=None) -> np.ndarray:
        """Statistic matrix, one row per hyperedge and one column per catalog entry."""
        t = self._query_time(t)
        hyperedges = [tuple(h) for h in hyperedges]
        nq = len(hyperedges)
        out = np.zeros((nq, len(catalog)), dtype=np.float64)
        if nq == 0 or len(catalog) == 0:
            return out
        for h in hyperedges:
            if len(h) == 0:
                raise ValueError("query hyperedge is empty")
            if len(set(h)) != len(h):
                raise ValueError(f"query hyperedge {h!r} repeats an actor")
        kcols = [j for j, s in enumerate(catalog) if s.kind in _KERNEL_KIND]
        if kcols:
            kinds = [_KERNEL_KIND[catalog[j].kind] for j in kcols]
            orders = [catalog[j].order for j in kcols]
            ptr = [0]
            members = []
            for h in hyperedges:
                members.extend(self.actor_id(a) for a in h)
                ptr.append(len(members))
            if self.backend == "cython":
                res = self._kernel.evaluate(
                    np.asarray(ptr, dtype=np.int64), np.asarray(members, dtype=np.intc),
                    t, self.half_life, kinds, orders,
                )
            else:
                res = self._kernel.evaluate(ptr, members, t, self.half_life, kinds, orders)
            out[:, kcols] = np.asarray(res, dtype=np.float64).reshape(nq, len(kcols))
        ccols = [j for j, s in enumerate(catalog) if s.kind in _COVARIATE]
        if ccols:
            if self.covariates is None:
                raise KeyError(
                    f"catalog uses covariate {catalog[ccols[0]].covariate!r} but no covariates are loaded"
                )
            for j in ccols:
                stat = catalog[j]
                for q, h in enumerate(hyperedges):
                    out[q, j] = self.covariates.aggregate(stat, h)
        return out


def advance(state: StatState, batch: Sequence[Event], time=None) -> StatState:
    return state.advance(batch, time)


def _one(state, h, stat, t):
    return float(state.evaluate([tuple(h)], StatCatalog([stat]), t)[0, 0])


def hyperedge_degree(state: StatState, h_sub, t=None) -> float:
    """Decayed count of past events whose actor set contains ``h_sub``."""
    h_sub = tuple(h_sub)
    if not h_sub:
        raise ValueError("h_sub must be non-empty")
    t = state._query_time(t)
    ids = [state.actor_id(a) for a in h_sub]
    if min(ids) < 0:
        return 0.0
    # walk the shortest incidence list and test the others
    lists = sorted((state.past_events(a, t) for a in h_sub), key=len)
    others = [set(x) for x in lists[1:]]
    total = 0.0
    for e in lists[0]:
        if all(e in o for o in others):
            total += state.weight(state.event_record(e)[0], t)
    return total


def sub_rep(state: StatState, h, p: int, t=None) -> float:
    if p < 1:
        raise ValueError("order p must be >= 1")
    return _one(state, h, Statistic("sub_rep", p), t)


def prior_success(state: StatState, h, p: int, t=None) -> float:
    if p < 1:
        raise ValueError("order p must be >= 1")
    return _one(state, h, Statistic("prior_succ", p), t)


def closure(state: StatState, h, t=None) -> float:
    return _one(state, h, Statistic("closure"), t)


def succ_disparity(state: StatState, h, t=None) -> float:
    return _one(state, h, Statistic("succ_disparity"), t)


def num_collab(state: StatState, h, t=None, success_weighted=False) -> float:
    kind = "num_collab_succ" if success_weighted else "num_collab"
    return _one(state, h, Statistic(kind), t)


def evaluate_row(state: StatState, h, t=None, catalog: StatCatalog = StatCatalog()) -> np.ndarray:
    return state.evaluate([tuple(h)], catalog, t)[0]
