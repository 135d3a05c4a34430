"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .events import EventDataError, load_events, load_roster, write_events, write_roster
from .gof import SyntheticConfig, generate_planted, percentile_report, simulate_from_model
from .outcome import normalization_table, normalize, write_table
from .pipeline import (
    EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_OK, ConfigError, read_config, run_pipeline,
    stability_study, substream_seed, write_stability,
)
from .results import FitResult
from .rhem_fit import FitError, design_for, fit_rhem, standardize_like, add_interactions, size_interaction_pairs
from .rhom_fit import RankDeficient, fit_rhom
from .sampling import ObservationMatrix, PopulationTooSmall, build_observations
from .statistics import DEFAULT_CATALOG, Covariates, parse_catalog

log = logging.getLogger("rhem")


class MissingArtifact(FileNotFoundError):
    pass


def _need(path, what):
    if path is None or not Path(path).exists():
        raise MissingArtifact(f"missing upstream artifact ({what}): {path}")
    return path


def _catalog(text):
    try:
        return parse_catalog(text)
    except ValueError as exc:
        raise ConfigError(f"--catalog: {exc}") from None


def _store(args):
    _need(args.events, "event file")
    roster = load_roster(_need(args.roster, "roster")) if getattr(args, "roster", None) else None
    return load_events(args.events, roster=roster, max_actors=getattr(args, "max_actors", None))


def _read_obs(path):
    _need(path, "observation matrix")
    meta_path = Path(path).with_suffix(".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return ObservationMatrix.read_csv(path, meta)


def _meta_path(out):
    return Path(out).with_suffix(".meta.json")


def cmd_ingest(args):
    store = _store(args)
    write_events(store, args.output)
    if args.roster_out:
        write_roster(store, args.roster_out)
    for name in store.networks:
        net = store.network(name)
        print(f"{name}\tevents={len(net)}\tactors={len(net.actors)}")
    return EXIT_OK


def cmd_normalize(args):
    store = _store(args)
    table = normalization_table(store)
    write_events(normalize(store), args.output)
    if args.table:
        write_table(table, args.table)
    print(f"normalized {len(store)} events in {len(table)} (network, time) cells")
    return EXIT_OK


def _observe(args, seed):
    store = _store(args)
    catalog = _catalog(args.catalog)
    cov = Covariates.from_csv(_need(args.covariates, "covariates")) if args.covariates else None
    return store, catalog, cov, build_observations(
        store, catalog, m=args.controls_per_event, seed=seed, half_life=args.half_life,
        networks=args.networks, covariates=cov, threads=args.threads,
    )


def cmd_observe(args):
    _, _, _, obs = _observe(args, substream_seed(args.seed, "observe", 0))
    obs.write_csv(args.output)
    obs.write_meta(_meta_path(args.output))
    print(f"{obs.n_strata} strata, {len(obs)} rows -> {args.output}")
    return EXIT_OK


def _emit(fit: FitResult, output):
    if output:
        fit.write_json(output)
        fit.write_tsv(Path(output).with_suffix(".tsv"))
    sys.stdout.write(fit.to_tsv())


def cmd_fit_rhem(args):
    if args.samples > 1:
        if not args.events:
            raise ConfigError("--samples needs --events to redraw controls")
        store = _store(args)
        catalog = _catalog(args.catalog).without("num_auth")
        cov = Covariates.from_csv(args.covariates) if args.covariates else None
        fits, table = stability_study(
            store, catalog, args.samples, seed=args.seed, m=args.controls_per_event,
            half_life=args.half_life, networks=args.networks, covariates=cov,
            interactions=args.interactions, threads=args.threads,
        )
        out = Path(args.output or "rhem_samples.json")
        for j, fit in enumerate(fits):
            fit.write_json(out.with_name(f"{out.stem}_sample{j + 1:02d}.json"))
        write_stability(table, out.with_suffix(".stability.tsv"))
        sys.stdout.write(Path(out.with_suffix(".stability.tsv")).read_text())
        return EXIT_OK
    if args.observations:
        obs = _read_obs(args.observations)
    elif args.events:
        obs = _observe(args, substream_seed(args.seed, "observe", 0))[3]
    else:
        raise MissingArtifact("fit-rhem needs an observation matrix or --events")
    obs = obs.drop_kind("num_auth")
    fit = fit_rhem(design_for(obs, args.interactions), max_iter=args.max_iter)
    _emit(fit, args.output)
    return EXIT_OK


def cmd_fit_rhom(args):
    obs = _read_obs(args.observations)
    _emit(fit_rhom(obs), args.output)
    return EXIT_OK


def cmd_gof(args):
    obs = _read_obs(args.observations).drop_kind("num_auth")
    fit = FitResult.read_json(_need(args.fit, "fit result"))
    std = fit.standardization
    dm = standardize_like(obs, std["means"], std["sds"])
    inter = fit.meta.get("interactions", {})
    if inter:
        if std.get("size"):
            dm.size_constants = tuple(std["size"])
        dm = add_interactions(dm, [tuple(p) for p in inter.values()])
    rep = percentile_report(dm, fit)
    rep.write_csv(args.output)
    rep.write_summary(Path(args.output).with_suffix(".json"))
    print(json.dumps(rep.summary(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_synth(args):
    rng = np.random.default_rng(substream_seed(args.seed, "synth"))
    sizes = tuple(int(s) for s in args.sizes.split(","))
    if args.model:
        catalog = _catalog(args.catalog)
        theta = [float(x) for x in args.theta.split(",")]
        population = [f"a{i + 1:03d}" for i in range(args.population)]
        store = simulate_from_model(population, catalog, theta, args.events, args.pool_size, rng,
                                    sizes=sizes, half_life=args.half_life)
    else:
        cfg = SyntheticConfig(group_size=args.group_size, groups=args.groups, brokers=args.brokers,
                              events=args.events, sizes=sizes, seed=args.seed)
        store = generate_planted(cfg, rng)
    write_events(store, args.output)
    roster = args.roster_out or str(Path(args.output).with_suffix("")) + ".roster.csv"
    write_roster(store, roster)
    print(f"{len(store)} events -> {args.output} (roster {roster})")
    return EXIT_OK


def cmd_run(args):
    overrides = {"seed": args.seed, "threads": args.threads, "output_dir": args.output_dir,
                 "controls_per_event": args.controls_per_event, "samples": args.samples}
    config = read_config(args.config, overrides)
    code, manifest = run_pipeline(config)
    for stage, msg in manifest["failures"].items():
        print(f"[{stage}] {msg}", file=sys.stderr)
    print(f"status: {manifest['status']} ({config.output_dir})")
    return code


def _observe_flags(p, events_required=False):
    p.add_argument("--events", required=events_required, help="event file (csv or jsonl)")
    p.add_argument("--roster", help="actor,network,entry_time CSV")
    p.add_argument("--covariates", help="wide actor covariate CSV")
    p.add_argument("--max-actors", type=int, help="drop events with more actors")
    p.add_argument("--catalog", default=DEFAULT_CATALOG, help="statistics, e.g. 'sub_rep:1-3, closure'")
    p.add_argument("--networks", type=lambda s: [x for x in s.split(",") if x], help="comma list")
    p.add_argument("--half-life", type=float, help="decay half-life in time units")
    p.add_argument("--controls-per-event", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)


def build_parser():
    ap = argparse.ArgumentParser(prog="rhem", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"rhem {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate an event file and write it canonically")
    p.add_argument("events")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--roster")
    p.add_argument("--roster-out")
    p.add_argument("--max-actors", type=int)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("normalize", help="fill outcome = citations minus cell mean")
    p.add_argument("events")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--table", help="write the (network, time) normalization table")
    p.set_defaults(func=cmd_normalize, roster=None)

    p = sub.add_parser("observe", help="sample controls and compute statistics")
    _observe_flags(p, events_required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_observe)

    p = sub.add_parser("fit-rhem", help="fit the event-rate model")
    p.add_argument("observations", nargs="?")
    _observe_flags(p)
    p.add_argument("--interactions", action="store_true", help="add statistic x size products")
    p.add_argument("--samples", type=int, default=1, help="refit on this many control draws")
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_fit_rhem)

    p = sub.add_parser("fit-rhom", help="fit the outcome model")
    p.add_argument("observations")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_fit_rhom)

    p = sub.add_parser("gof", help="percentile of observed events among their controls")
    p.add_argument("observations")
    p.add_argument("--fit", required=True, help="fit-rhem JSON result")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_gof)

    p = sub.add_parser("synth", help="generate synthetic events")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--planted", action="store_true", default=True, help="overlapping groups (default)")
    mode.add_argument("--model", action="store_true", help="softmax simulation under --theta")
    p.add_argument("--events", type=int, default=1000)
    p.add_argument("--sizes", default="2,3,4")
    p.add_argument("--group-size", type=int, default=10)
    p.add_argument("--groups", type=int, default=2)
    p.add_argument("--brokers", type=int, default=1)
    p.add_argument("--catalog", default="sub_rep:1-2, closure")
    p.add_argument("--theta", default="0,0,0")
    p.add_argument("--population", type=int, default=20)
    p.add_argument("--pool-size", type=int)
    p.add_argument("--half-life", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--roster-out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="full pipeline from a key = value config")
    p.add_argument("config")
    p.add_argument("--output-dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--controls-per-event", type=int)
    p.add_argument("--samples", type=int)
    p.set_defaults(func=cmd_run)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    stage = args.command
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"rhem {stage}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FitError, RankDeficient) as exc:
        print(f"rhem {stage}: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (EventDataError, PopulationTooSmall, MissingArtifact, KeyError, ValueError, OSError) as exc:
        print(f"rhem {stage}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
