"""End-to-end runs: ingest, normalize, observe, fit both models, diagnose, report."""
from __future__ import annotations

import configparser
import hashlib
import json
import logging
import math
import os
import platform
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .events import EventDataError, EventStore, load_events, write_events
from .gof import percentile_report
from .outcome import normalization_table, normalize, write_table
from .results import FitResult, as_plain
from .rhem_fit import FitError, design_for, fit_rhem, joint_fit
from .rhom_fit import fit_rhom
from .sampling import ObservationMatrix, PopulationTooSmall, build_observations
from .statistics import DEFAULT_CATALOG, Covariates, StatCatalog, parse_catalog

__all__ = [
    "ConfigError",
    "RunConfig",
    "read_config",
    "run_pipeline",
    "stability_study",
    "substream_seed",
]

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


def substream_seed(seed: int, stage: str, index: int = 0) -> int:
    """Deterministic 63-bit seed for a named stage (and repeat index) of a run."""
    key = int.from_bytes(hashlib.blake2b(stage.encode(), digest_size=4).digest(), "little")
    ss = np.random.SeedSequence(int(seed), spawn_key=(key, int(index)))
    return int(ss.generate_state(2, dtype=np.uint32) @ np.array([1 << 31, 1], dtype=np.uint64)) >> 1


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


@dataclass
class RunConfig:
    events: str = ""
    output_dir: str = "out"
    roster: str | None = None
    covariates: str | None = None
    networks: list | None = None
    catalog: str = DEFAULT_CATALOG
    half_life: float | None = None
    controls_per_event: int = 10
    seed: int = 0
    interactions: bool = False
    samples: int = 1
    threads: int = 1
    max_actors: int | None = None
    backend: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        try:
            cat = parse_catalog(self.catalog)
        except ValueError as exc:
            raise ConfigError(f"catalog: {exc}") from None
        if not len(cat):
            raise ConfigError("catalog is empty")
        try:
            cat.check_rhem()
        except ValueError as exc:
            raise ConfigError(f"catalog: {exc} (it is added to the outcome model automatically)") from None
        if self.half_life is not None and not self.half_life > 0:
            raise ConfigError(f"half_life must be positive, got {self.half_life}")
        if self.controls_per_event < 1:
            raise ConfigError("controls_per_event must be >= 1")
        if self.samples < 1:
            raise ConfigError("samples must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.max_actors is not None and self.max_actors < 1:
            raise ConfigError("max_actors must be >= 1")
        if self.backend is not None and self.backend not in ("cython", "python"):
            raise ConfigError(f"backend must be cython or python, got {self.backend!r}")
        return self

    @property
    def stat_catalog(self) -> StatCatalog:
        return parse_catalog(self.catalog)


_FIELDS = {
    "events": str, "output_dir": str, "roster": str, "covariates": str,
    "networks": lambda s: [x.strip() for x in s.split(",") if x.strip()] or None,
    "catalog": str, "half_life": float, "controls_per_event": int, "seed": int,
    "interactions": _bool, "samples": int, "threads": int, "max_actors": int, "backend": str,
}
_PATHS = ("events", "roster", "covariates", "output_dir")


def read_config(path, overrides: dict | None = None) -> RunConfig:
    """Parse a ``key = value`` file; relative paths resolve against the file's directory."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string("[run]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    values = {}
    for key, raw in parser["run"].items():
        if key not in _FIELDS:
            raise ConfigError(f"{path}: unknown key {key!r}; known: {', '.join(sorted(_FIELDS))}")
        raw = raw.strip()
        if raw.lower() in ("", "none") and key not in ("catalog", "events"):
            values[key] = None
            continue
        try:
            values[key] = _FIELDS[key](raw)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"{path}: bad value for {key}: {raw!r} ({exc})") from None
        if key in _PATHS and values[key] is not None:
            values[key] = str((path.parent / values[key]).resolve()) if not os.path.isabs(values[key]) else values[key]
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if not values.get("events"):
        raise ConfigError(f"{path}: 'events' is required")
    for key in ("controls_per_event", "seed", "samples", "threads"):
        if values.get(key, 0) is None:
            values.pop(key)
    return RunConfig(**values)


def _prepare_store(store: EventStore, out: Path, manifest: dict) -> EventStore:
    """Normalize citations where every event of a network has them."""
    events = list(store)
    by_net: dict = {}
    for ev in events:
        by_net.setdefault(ev.network, []).append(ev)
    cited = [n for n, evs in by_net.items() if all(e.citations is not None for e in evs)]
    partial = [n for n, evs in by_net.items()
               if any(e.citations is not None for e in evs) and n not in cited]
    if partial:
        raise EventDataError(f"network(s) {partial} have citations on some events only")
    if cited:
        sub = EventStore([e for e in events if e.network in cited])
        table = normalization_table(sub)
        write_table(table, out / "normalization.csv")
        manifest["artifacts"]["normalization"] = "normalization.csv"
        normalized = {(e.network, e.event_id): e for e in normalize(sub)}
        events = [normalized.get((e.network, e.event_id), e) for e in events]
        store = store.replace_events(events)
    manifest["normalized_networks"] = sorted(cited)
    write_events(store, out / "events.csv")
    manifest["artifacts"]["events"] = "events.csv"
    return store


def _rhem_fits(obs: ObservationMatrix, interactions: bool):
    """Per-network fits plus a joint fit; failures are recorded, not raised."""
    fits, failures = {}, {}
    nets = obs.networks()
    targets = [(n, [obs.for_network(n)]) for n in nets]
    if len(nets) > 1:
        targets.append(("joint", [obs.for_network(n) for n in nets]))
    for name, parts in targets:
        try:
            fits[name] = joint_fit(parts, interactions=interactions)
        except (FitError, ValueError) as exc:
            failures[name] = f"{type(exc).__name__}: {exc}"
    return fits, failures


def _rhom_fits(obs: ObservationMatrix):
    fits, failures = {}, {}
    nets = obs.networks()
    targets = [(n, obs.for_network(n)) for n in nets]
    if len(nets) > 1:
        targets.append(("joint", obs))
    for name, part in targets:
        try:
            fits[name] = fit_rhom(part)
        except (ArithmeticError, ValueError) as exc:
            failures[name] = f"{type(exc).__name__}: {exc}"
    return fits, failures


def stability_study(store: EventStore, catalog, samples: int, seed: int = 0, m: int = 10,
                    half_life=None, networks=None, covariates=None, interactions=False,
                    threads: int = 1, backend=None):
    """Refit the event-rate model on ``samples`` independently drawn control sets.

    Returns ``(fits, table)`` where ``table`` maps each parameter to its mean
    estimate, SD across samples and mean reported SE.
    """
    fits = []
    for j in range(samples):
        obs = build_observations(store, catalog, m=m, seed=substream_seed(seed, "observe", j),
                                 half_life=half_life, networks=networks, covariates=covariates,
                                 threads=threads, backend=backend)
        fits.append(fit_rhem(design_for(obs, interactions)))
    names = fits[0].names
    est = np.array([f.estimates for f in fits])
    se = np.array([f.se for f in fits])
    table = {}
    for i, n in enumerate(names):
        sd = float(est[:, i].std(ddof=1)) if samples > 1 else math.nan
        table[n] = {"mean": float(est[:, i].mean()), "sd_across_samples": sd,
                    "mean_se": float(se[:, i].mean()),
                    "sd_over_se": sd / float(se[:, i].mean()) if samples > 1 else math.nan}
    return fits, table


def write_stability(table: dict, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("name\tmean\tsd_across_samples\tmean_se\tsd_over_se\n")
        for n, r in table.items():
            fh.write(f"{n}\t{r['mean']:.6f}\t{r['sd_across_samples']:.6f}\t"
                     f"{r['mean_se']:.6f}\t{r['sd_over_se']:.3f}\n")


def _write_fit(fit: FitResult, out: Path, stem: str, manifest: dict, key: str):
    fit.write_json(out / f"{stem}.json")
    fit.write_tsv(out / f"{stem}.tsv")
    manifest["artifacts"][key] = [f"{stem}.json", f"{stem}.tsv"]


def run_pipeline(config: RunConfig) -> tuple[int, dict]:
    """Run every stage; return ``(exit status, manifest)``.

    Artifacts land in ``config.output_dir``; ``manifest.json`` echoes the config,
    seeds, versions, artifacts and any stage failures.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    catalog = config.stat_catalog
    rhom_catalog = StatCatalog(list(catalog) + [s for s in parse_catalog("num_auth")])
    obs_seed = substream_seed(config.seed, "observe", 0)
    manifest = {
        "config": as_plain(asdict(config)),
        "versions": {"rhem": __version__, "numpy": np.__version__, "python": platform.python_version(),
                     "kernel_backend": config.backend or kernels.BACKEND},
        "seeds": {"top": config.seed, "observe": obs_seed},
        "artifacts": {},
        "failures": {},
        "status": "running",
    }

    def finish(code, stage=None, exc=None):
        if exc is not None:
            manifest["failures"][stage] = f"{type(exc).__name__}: {exc}"
        manifest["status"] = "complete" if code == EXIT_OK else ("partial" if manifest["artifacts"] else "failed")
        manifest["exit_code"] = code
        with open(out / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(as_plain(manifest), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return code, manifest

    stage = "ingest"
    try:
        roster = None
        if config.roster:
            from .events import load_roster
            roster = load_roster(config.roster)
        store = load_events(config.events, roster=roster, max_actors=config.max_actors)
        covariates = Covariates.from_csv(config.covariates) if config.covariates else None
        stage = "normalize"
        store = _prepare_store(store, out, manifest)
        has_outcome = all(e.outcome is not None for e in store)
        if catalog.needs_outcome and not has_outcome:
            raise EventDataError(
                f"catalog {catalog.names} needs outcomes; supply citations or an outcome column"
            )
        stage = "observe"
        obs_catalog = rhom_catalog if has_outcome else catalog
        obs = build_observations(store, obs_catalog, m=config.controls_per_event, seed=obs_seed,
                                 half_life=config.half_life, networks=config.networks,
                                 covariates=covariates, threads=config.threads,
                                 backend=config.backend)
        obs.write_csv(out / "observations.csv")
        obs.write_meta(out / "observations.meta.json")
        manifest["artifacts"]["observations"] = ["observations.csv", "observations.meta.json"]
        manifest["observations"] = {"rows": len(obs), "strata": obs.n_strata}
    except ConfigError as exc:
        return finish(EXIT_CONFIG, stage, exc)
    except (EventDataError, PopulationTooSmall, KeyError, ValueError, OSError) as exc:
        return finish(EXIT_DATA, stage, exc)

    code = EXIT_OK
    rhem_obs = obs.drop_kind("num_auth")
    if obs.n_strata == 0:
        return finish(EXIT_DATA, "observe", ValueError("no strata could be formed"))
    fits, failures = _rhem_fits(rhem_obs, config.interactions)
    for name, fit in fits.items():
        _write_fit(fit, out, f"rhem_{name}", manifest, f"rhem_{name}")
    for name, msg in failures.items():
        manifest["failures"][f"fit-rhem:{name}"] = msg
        code = EXIT_NUMERIC

    headline = "joint" if "joint" in fits else (next(iter(fits)) if len(fits) == 1 else None)
    if headline is not None:
        nets = rhem_obs.networks() if headline == "joint" else [headline]
        sub = rhem_obs if headline == "joint" else rhem_obs.for_network(headline)
        try:
            dm = design_for(sub, config.interactions)
            rep = percentile_report(dm, fits[headline])
            rep.write_csv(out / "percentiles.csv")
            rep.write_summary(out / "percentiles.json")
            manifest["artifacts"]["percentiles"] = ["percentiles.csv", "percentiles.json"]
            manifest["percentile_summary"] = rep.summary()
            manifest["percentile_networks"] = nets
        except ValueError as exc:
            manifest["failures"]["gof"] = f"{type(exc).__name__}: {exc}"

    if has_outcome:
        rfits, rfail = _rhom_fits(obs)
        for name, fit in rfits.items():
            _write_fit(fit, out, f"rhom_{name}", manifest, f"rhom_{name}")
        for name, msg in rfail.items():
            manifest["failures"][f"fit-rhom:{name}"] = msg
            code = EXIT_NUMERIC
    else:
        manifest["skipped"] = ["fit-rhom: events carry no outcomes"]

    if config.samples > 1:
        try:
            _, table = stability_study(store, catalog, config.samples, seed=config.seed,
                                       m=config.controls_per_event, half_life=config.half_life,
                                       networks=config.networks, covariates=covariates,
                                       interactions=config.interactions, threads=config.threads,
                                       backend=config.backend)
            write_stability(table, out / "stability.tsv")
            manifest["artifacts"]["stability"] = "stability.tsv"
        except (FitError, ValueError) as exc:
            manifest["failures"]["stability"] = f"{type(exc).__name__}: {exc}"
            code = EXIT_NUMERIC
    return finish(code)
