"""Fit diagnostics and synthetic data.

* :func:`percentile_report` ranks each observed event's fitted rate among its
  stratum's controls.
* :func:`generate_planted` builds the overlapping two-group benchmark.
* :func:`simulate_from_model` draws events sequentially by softmax choice over
  candidate hyperedges under known parameters.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .events import Event, EventStore
from .results import FitResult
from .rhem_fit import DesignMatrix
from .statistics import StatCatalog, StatState

__all__ = [
    "PercentileReport",
    "SyntheticConfig",
    "choice_probabilities",
    "generate_planted",
    "percentile_report",
    "simulate_from_model",
]


@dataclass
class PercentileReport:
    network: list
    event_id: list
    percentile: np.ndarray

    def summary(self):
        q = self.percentile
        n = len(q)
        return {
            "n_events": n,
            "median": float(np.median(q)) if n else math.nan,
            "q1": float(np.quantile(q, 0.25)) if n else math.nan,
            "q3": float(np.quantile(q, 0.75)) if n else math.nan,
            "mean": float(q.mean()) if n else math.nan,
            "mean_se": float(q.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan,
        }

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["network", "event_id", "percentile"])
            for n, e, p in zip(self.network, self.event_id, self.percentile):
                w.writerow([n, e, repr(float(p))])

    def write_summary(self, path):
        s = {k: (None if isinstance(v, float) and math.isnan(v) else v)
             for k, v in self.summary().items()}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(s, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _theta(fit, names):
    if isinstance(fit, FitResult):
        if list(fit.names) != list(names):
            raise ValueError(f"fit columns {fit.names} do not match design columns {names}")
        return np.asarray(fit.estimates, dtype=np.float64)
    theta = np.asarray(fit, dtype=np.float64)
    if theta.shape != (len(names),):
        raise ValueError(f"parameter vector of length {theta.shape} for {len(names)} columns")
    return theta


def percentile_report(dm: DesignMatrix, fit) -> PercentileReport:
    """Per stratum: (#controls with lower predictor + 0.5 * #ties) / #controls.

    ``fit`` is a :class:`FitResult` on the same columns or a raw parameter vector.
    """
    theta = _theta(fit, dm.names)
    eta = dm.X @ theta
    order = np.argsort(dm.strata, kind="stable")
    strata = dm.strata[order]
    eta = eta[order]
    is_event = dm.is_event[order]
    bounds = np.flatnonzero(np.r_[True, strata[1:] != strata[:-1], True])
    nets, ids, pct = [], [], []
    for a, b in zip(bounds[:-1], bounds[1:]):
        ev = is_event[a:b]
        if ev.sum() != 1:
            raise ValueError(f"stratum {int(strata[a])} has {int(ev.sum())} cases")
        ctrl = eta[a:b][~ev]
        if len(ctrl) == 0:
            raise ValueError(f"stratum {int(strata[a])} has no controls")
        case = eta[a:b][ev][0]
        below = np.count_nonzero(ctrl < case)
        ties = np.count_nonzero(ctrl == case)
        pct.append((below + 0.5 * ties) / len(ctrl))
        label = dm.stratum_ids[int(strata[a])] if dm.stratum_ids else ("", str(int(strata[a])))
        nets.append(label[0])
        ids.append(label[1])
    return PercentileReport(nets, ids, np.array(pct, dtype=np.float64))


@dataclass
class SyntheticConfig:
    """Overlapping-groups generator settings.

    Group ``g`` holds ``group_size - brokers`` own actors plus the shared
    brokers.  Event sizes are drawn uniformly from ``sizes``.
    """

    group_size: int = 10
    groups: int = 2
    brokers: int = 1
    events: int = 1000
    sizes: tuple = (2, 3, 4)
    seed: int = 0
    network: str = "planted"

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if self.groups < 1 or self.events < 0:
            raise ValueError("need at least one group and a non-negative event count")
        if not 0 <= self.brokers < self.group_size:
            raise ValueError("brokers must be fewer than the group size")
        if not self.sizes or min(self.sizes) < 1 or max(self.sizes) > self.group_size:
            raise ValueError(f"event sizes {self.sizes} must lie in 1..{self.group_size}")

    def group_members(self):
        brokers = [f"broker{i + 1}" for i in range(self.brokers)]
        own = self.group_size - self.brokers
        return [[f"g{g + 1}_{i + 1:02d}" for i in range(own)] + brokers for g in range(self.groups)]


def generate_planted(config: SyntheticConfig | None = None, rng=None) -> EventStore:
    """Events drawn only within groups: pick a group, a size, then members uniformly.

    All actors enter at time 0; event ``i`` happens at time ``i`` with a
    standard-normal outcome.
    """
    config = config or SyntheticConfig()
    rng = np.random.default_rng(config.seed) if rng is None else rng
    groups = config.group_members()
    actors = sorted({a for g in groups for a in g})
    roster = {config.network: {a: 0.0 for a in actors}}
    events = []
    width = len(str(config.events))
    for i in range(config.events):
        g = groups[int(rng.integers(len(groups)))]
        k = config.sizes[int(rng.integers(len(config.sizes)))]
        idx = rng.choice(len(g), size=k, replace=False)
        members = tuple(sorted(g[j] for j in idx))
        y = float(rng.standard_normal())
        events.append(Event(f"e{i + 1:0{width}d}", float(i + 1), config.network, members, None, y))
    return EventStore(events, roster=roster)


def generate_clustered(events: int, actors: int, mean_size: float = 9.5, periods: int = 20,
                       community: int = 40, outsider_rate: float = 0.1, max_size: int = 100,
                       network: str = "clustered", rng=None) -> EventStore:
    """Large coauthor-like store for load testing.

    Actors are split into communities; each event picks a community and draws
    members mostly from it, each slot going to a random outsider with
    probability ``outsider_rate``.  Sizes are ``1 + NegBin`` with the requested
    mean, capped at ``max_size``.  Events spread evenly over ``periods`` time
    points; citations are negative binomial, so outcomes come from normalization.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    if mean_size < 1:
        raise ValueError("mean_size must be >= 1")
    n_comm = max(1, actors // community)
    names = [f"a{i:07d}" for i in range(actors)]
    extra = mean_size - 1.0
    r = 2.0
    sizes = 1 + (rng.negative_binomial(r, r / (r + extra), size=events) if extra > 0
                 else np.zeros(events, dtype=np.int64))
    sizes = np.minimum(sizes, max_size)
    comms = rng.integers(n_comm, size=events)
    cites = rng.negative_binomial(1.5, 0.1, size=events)
    per = max(1, -(-events // periods))
    out = []
    width = len(str(events))
    for i in range(events):
        k = int(sizes[i])
        lo = int(comms[i]) * community
        hi = min(actors, lo + community)
        chosen = set()
        while len(chosen) < k:
            if rng.random() < outsider_rate or hi - lo <= len(chosen) - 0:
                a = int(rng.integers(actors))
            else:
                a = int(rng.integers(lo, hi))
            chosen.add(a)
        out.append(Event(f"c{i:0{width}d}", float(i // per), network,
                         tuple(names[a] for a in sorted(chosen)), float(cites[i]), None))
    return EventStore(out)


def choice_probabilities(state: StatState, candidates, catalog: StatCatalog, theta, t):
    """Softmax over ``exp(theta . s(h))`` for each candidate hyperedge at time ``t``."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (len(catalog),):
        raise ValueError(f"theta has {theta.size} entries for a catalog of {len(catalog)}")
    S = state.evaluate(candidates, catalog, t)
    eta = S @ theta
    eta -= eta.max()
    w = np.exp(eta)
    return w / w.sum()


def simulate_from_model(population, catalog, theta, steps: int, pool_size=None, rng=None,
                        sizes=(2, 3), half_life=None, network="sim", backend=None) -> EventStore:
    """Sequential softmax-choice simulation.

    Step ``i`` (time ``i``) draws a size, forms a candidate pool of hyperedges of
    that size and picks one with probability proportional to ``exp(theta . s)``.
    ``pool_size=None`` uses the full set of size-k subsets; otherwise ``pool_size``
    candidates are drawn uniformly (with replacement).  Outcomes are standard
    normal.  ``theta`` is on the raw statistic scale.
    """
    population = sorted(population)
    if not population:
        raise ValueError("empty population")
    catalog = StatCatalog(catalog)
    catalog.check_rhem()
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (len(catalog),):
        raise ValueError(f"theta has {theta.size} entries for a catalog of {len(catalog)}")
    sizes = tuple(int(s) for s in sizes)
    if min(sizes) < 1 or max(sizes) > len(population):
        raise ValueError(f"event sizes {sizes} do not fit a population of {len(population)}")
    rng = np.random.default_rng() if rng is None else rng
    n = len(population)
    full = {}
    state = StatState(network, half_life=half_life, backend=backend)
    events = []
    width = len(str(steps))
    for i in range(steps):
        t = float(i + 1)
        k = sizes[int(rng.integers(len(sizes)))]
        if pool_size is None:
            if k not in full:
                full[k] = [tuple(population[j] for j in c) for c in itertools.combinations(range(n), k)]
            pool = full[k]
        else:
            pool = [tuple(population[j] for j in sorted(rng.choice(n, size=k, replace=False)))
                    for _ in range(pool_size)]
        prob = choice_probabilities(state, pool, catalog, theta, t)
        h = pool[int(rng.choice(len(pool), p=prob))]
        ev = Event(f"s{i + 1:0{width}d}", t, network, h, None, float(rng.standard_normal()))
        events.append(ev)
        state.advance([ev], t)
    roster = {network: {a: 0.0 for a in population}}
    return EventStore(events, roster=roster)
