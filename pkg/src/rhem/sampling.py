"""Size-conditioned case-control sampling and the observation matrix.

Every event forms its own stratum: the observed hyperedge (case) plus ``m``
hyperedges of the same size drawn uniformly from the population at the event
time (controls).  Statistics for all rows of a stratum are evaluated against
the network of events strictly before the event time.

Randomness: each stratum draws from its own PCG64 stream seeded by
``(seed, network, event_id)``, so results do not depend on processing order.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .events import ACTOR_SEP, EventStore, format_number
from .statistics import StatCatalog, StatState, Statistic

__all__ = [
    "ObservationMatrix",
    "PopulationTooSmall",
    "RiskSample",
    "RNG_NAME",
    "build_observations",
    "sample_stratum",
    "stratum_rng",
]

log = logging.getLogger(__name__)

RNG_NAME = f"numpy.random.PCG64 via SeedSequence (numpy {np.__version__})"


class PopulationTooSmall(ValueError):
    """No size-|case| hyperedge other than the case exists in the population."""


@dataclass
class RiskSample:
    stratum_id: str
    case: tuple
    controls: list
    seed_state: dict = field(default_factory=dict)


def stratum_rng(seed: int, network: str, event_id: str) -> np.random.Generator:
    """Independent generator for one stratum, keyed by ``(seed, network, event_id)``."""
    digest = hashlib.blake2b(f"{network}\x00{event_id}".encode(), digest_size=16).digest()
    key = tuple(int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def _draw_subset(n: int, k: int, rng: np.random.Generator) -> list:
    # sequential distinct draws; duplicates within the control are redrawn
    chosen: list = []
    seen = set()
    while len(chosen) < k:
        i = int(rng.integers(n))
        if i not in seen:
            seen.add(i)
            chosen.append(i)
    chosen.sort()
    return chosen


def sample_stratum(population: Sequence, case: Sequence, m: int, rng: np.random.Generator,
                   stratum_id: str = "") -> RiskSample:
    """Draw ``m`` uniform size-``|case|`` controls from ``population``.

    A draw equal to the case set is rejected and redrawn; controls may repeat
    each other.
    """
    if m < 1:
        raise ValueError("controls per event must be >= 1")
    case = tuple(case)
    k = len(case)
    n = len(population)
    case_set = set(case)
    # a population larger than k always admits a non-case subset
    if n <= k and math.comb(n, k) - (1 if case_set <= set(population) else 0) < 1:
        raise PopulationTooSmall(
            f"stratum {stratum_id!r}: population of {n} admits no size-{k} control"
        )
    controls = []
    while len(controls) < m:
        idx = _draw_subset(n, k, rng)
        ctrl = tuple(population[i] for i in idx)
        if set(ctrl) == case_set:
            continue
        controls.append(ctrl)
    return RiskSample(stratum_id, case, controls)


@dataclass
class ObservationMatrix:
    """Rows of (stratum, hyperedge) with raw statistic values.

    Attributes
    ----------
    network, stratum : ndarray of str
        Network and event id of the stratum each row belongs to.
    time : ndarray
        Event time of the stratum.
    is_event : ndarray of bool
        True for the case row.
    hyperedges : list of tuple
    outcome : ndarray
        Outcome of the case event (NaN for controls or when absent).
    values : ndarray, shape (n_rows, n_stats)
    catalog : StatCatalog
    """

    network: np.ndarray
    stratum: np.ndarray
    time: np.ndarray
    is_event: np.ndarray
    hyperedges: list
    outcome: np.ndarray
    values: np.ndarray
    catalog: StatCatalog
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.hyperedges)

    @property
    def names(self):
        return self.catalog.names

    @property
    def sizes(self):
        return np.fromiter((len(h) for h in self.hyperedges), dtype=np.int64, count=len(self))

    @property
    def n_strata(self):
        return int(self.is_event.sum())

    def stratum_codes(self):
        """Integer stratum codes, unique across networks, in order of first appearance."""
        keys = [f"{n}\x00{s}" for n, s in zip(self.network, self.stratum)]
        codes: dict = {}
        return np.fromiter((codes.setdefault(k, len(codes)) for k in keys), dtype=np.int64,
                           count=len(keys))

    def column(self, name):
        return self.values[:, self.names.index(name)]

    def subset(self, mask) -> "ObservationMatrix":
        mask = np.asarray(mask)
        idx = np.flatnonzero(mask) if mask.dtype == bool else mask
        return ObservationMatrix(
            self.network[idx], self.stratum[idx], self.time[idx], self.is_event[idx],
            [self.hyperedges[i] for i in idx], self.outcome[idx], self.values[idx],
            self.catalog, dict(self.meta),
        )

    def select(self, names) -> "ObservationMatrix":
        """Keep only the named statistic columns, in the given order."""
        names = list(names)
        idx = [self.names.index(n) for n in names]
        catalog = StatCatalog(self.catalog[i] for i in idx)
        values = np.ascontiguousarray(self.values[:, idx])
        return replace(self, values=values, catalog=catalog, meta=dict(self.meta))

    def drop_kind(self, kind) -> "ObservationMatrix":
        return self.select([s.name for s in self.catalog if s.kind != kind])

    def networks(self):
        return sorted(set(self.network.tolist()))

    def for_network(self, name) -> "ObservationMatrix":
        return self.subset(self.network == name)

    def events_only(self) -> "ObservationMatrix":
        return self.subset(self.is_event)

    @classmethod
    def concat(cls, parts: Sequence["ObservationMatrix"]) -> "ObservationMatrix":
        parts = list(parts)
        if not parts:
            raise ValueError("nothing to concatenate")
        cat = parts[0].catalog
        for p in parts[1:]:
            if p.catalog.names != cat.names:
                raise ValueError(
                    f"catalog mismatch: {p.catalog.names} vs {cat.names}"
                )
        return cls(
            np.concatenate([p.network for p in parts]),
            np.concatenate([p.stratum for p in parts]),
            np.concatenate([p.time for p in parts]),
            np.concatenate([p.is_event for p in parts]),
            [h for p in parts for h in p.hyperedges],
            np.concatenate([p.outcome for p in parts]),
            np.vstack([p.values for p in parts]) if len(cat) else np.zeros((sum(len(p) for p in parts), 0)),
            cat,
            {"parts": [p.meta for p in parts]},
        )

    def write_csv(self, path):
        """Observation CSV; floats use shortest round-trip text."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["stratum_id", "hyperedge_actors", "is_event", "network", "time", "outcome"]
                       + self.names)
            for i in range(len(self)):
                y = self.outcome[i]
                w.writerow(
                    [self.stratum[i], ACTOR_SEP.join(self.hyperedges[i]), int(self.is_event[i]),
                     self.network[i], format_number(self.time[i]),
                     "" if math.isnan(y) else repr(float(y))]
                    + [repr(float(v)) for v in self.values[i]]
                )

    @classmethod
    def read_csv(cls, path, meta=None) -> "ObservationMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise ValueError(f"{path}: empty observation file")
            fixed = ["stratum_id", "hyperedge_actors", "is_event", "network", "time", "outcome"]
            if header[:6] != fixed:
                raise ValueError(f"{path}: unexpected header {header[:6]}")
            catalog = StatCatalog(Statistic.from_name(n) for n in header[6:])
            net, strat, time, ev, hyp, out, vals = [], [], [], [], [], [], []
            for row in reader:
                strat.append(row[0])
                hyp.append(tuple(row[1].split(ACTOR_SEP)))
                ev.append(row[2] == "1")
                net.append(row[3])
                time.append(float(row[4]))
                out.append(float(row[5]) if row[5] != "" else math.nan)
                vals.append([float(x) for x in row[6:]])
        return cls(
            np.array(net, dtype=object), np.array(strat, dtype=object),
            np.array(time, dtype=np.float64), np.array(ev, dtype=bool), hyp,
            np.array(out, dtype=np.float64),
            np.array(vals, dtype=np.float64).reshape(len(hyp), len(catalog)),
            catalog, dict(meta or {}),
        )

    def write_meta(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _network_rows(store: EventStore, network: str, catalog: StatCatalog, m: int, seed: int,
                  half_life, covariates, backend, strict):
    net = store.network(network)
    if catalog.needs_outcome:
        missing = [ev.event_id for ev in net.events if ev.outcome is None]
        if missing:
            raise ValueError(
                f"network {network!r}: catalog {catalog.names} needs outcomes, "
                f"{len(missing)} event(s) lack one (first: {missing[0]!r})"
            )
    state = StatState(network, half_life=half_life, backend=backend, covariates=covariates)
    rows_h, rows_strat, rows_ev, rows_time, rows_y, blocks = [], [], [], [], [], []
    skipped = []
    duplicates = 0
    n_controls = 0
    for t, group in net.time_groups():
        state.advance(group, t)
        population = net.population_at(t)
        batch = []
        for ev in group:
            rng = stratum_rng(seed, network, ev.event_id)
            try:
                rs = sample_stratum(population, ev.actors, m, rng, stratum_id=ev.event_id)
            except PopulationTooSmall:
                if strict:
                    raise
                skipped.append(ev.event_id)
                continue
            seen = set()
            for c in rs.controls:
                key = frozenset(c)
                if key in seen:
                    duplicates += 1
                seen.add(key)
            n_controls += len(rs.controls)
            y = math.nan if ev.outcome is None else float(ev.outcome)
            for j, h in enumerate([rs.case] + rs.controls):
                batch.append(h)
                rows_h.append(h)
                rows_strat.append(ev.event_id)
                rows_ev.append(j == 0)
                rows_time.append(t)
                rows_y.append(y if j == 0 else math.nan)
        if batch:
            blocks.append(state.evaluate(batch, catalog, t))
    values = np.vstack(blocks) if blocks else np.zeros((0, len(catalog)))
    info = {
        "events": len(net),
        "strata": len(net) - len(skipped),
        "skipped_strata": skipped,
        "controls": n_controls,
        "duplicate_controls": duplicates,
        "duplicate_control_rate": duplicates / n_controls if n_controls else 0.0,
    }
    return rows_h, rows_strat, rows_ev, rows_time, rows_y, values, info


def build_observations(store: EventStore, catalog: StatCatalog, m: int = 10, seed: int = 0,
                       half_life=None, networks=None, covariates=None, backend=None,
                       strict: bool = False, threads: int = 1) -> ObservationMatrix:
    """Case-control observation matrix for every event of the selected networks.

    Strata whose population admits no distinct control are skipped and listed
    in ``meta["networks"][name]["skipped_strata"]``; ``strict=True`` raises
    :class:`PopulationTooSmall` instead.
    """
    if m < 1:
        raise ValueError("controls per event must be >= 1 (a stratum needs contrast)")
    catalog = StatCatalog(catalog)
    networks = store.networks if networks is None else list(networks)
    for n in networks:
        store.network(n)

    def work(name):
        return _network_rows(store, name, catalog, m, seed, half_life, covariates, backend, strict)

    if threads > 1 and len(networks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, networks))
    else:
        results = [work(n) for n in networks]

    net_col, hyp, strat, ev, time, ys, blocks, info = [], [], [], [], [], [], [], {}
    for name, (h, s, e, t, y, v, meta) in zip(networks, results):
        net_col.extend([name] * len(h))
        hyp.extend(h)
        strat.extend(s)
        ev.extend(e)
        time.extend(t)
        ys.extend(y)
        blocks.append(v)
        info[name] = meta
        if meta["skipped_strata"]:
            log.warning("network %s: skipped %d stratum(s) with too small a population",
                        name, len(meta["skipped_strata"]))
    values = np.vstack(blocks) if blocks else np.zeros((0, len(catalog)))
    meta = {
        "seed": seed,
        "rng": RNG_NAME,
        "controls_per_event": m,
        "half_life": half_life,
        "catalog": catalog.names,
        "rows": len(hyp),
        "strata": int(sum(ev)),
        "networks": info,
    }
    return ObservationMatrix(
        np.array(net_col, dtype=object), np.array(strat, dtype=object),
        np.array(time, dtype=np.float64), np.array(ev, dtype=bool), hyp,
        np.array(ys, dtype=np.float64), values, catalog, meta,
    )
