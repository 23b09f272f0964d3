"""Command-line entry point.

Subcommands: simulate (population experiment, CSV outputs), trace (run the
multi-operator protocol over a fixture tree), serve (registry HTTP service),
ingest (validate and load trajectory files into a fixture store), and report
(render figures from a finished simulate run).

Exit discipline: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import signal
import sys
from pathlib import Path

from . import __version__
from .experiment import (
    COUNTRY_SCENARIOS,
    ScenarioSummary,
    SimConfig,
    emit_results,
    run_experiment,
    run_scenario,
)
from .opnet import MessageBus, load_deployment, run_trace_round, write_suspect_csv
from .registry import FixtureGeocoder
from .tracing import read_sample_file
from .triage import RuleFileError, default_rules, load_rules

DATA_DIR_ENV = "CELLTRACE_DATA_DIR"


def _positive_float(raw: str) -> float:
    value = float(raw)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {raw}")
    return value


def _nonnegative_float(raw: str) -> float:
    value = float(raw)
    if value < 0:
        raise argparse.ArgumentTypeError(f"cannot be negative, got {raw}")
    return value


def _positive_int(raw: str) -> int:
    value = int(raw)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {raw}")
    return value


def _rate(raw: str) -> float:
    value = float(raw)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"must be in [0, 1], got {raw}")
    return value


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_dir: Path, command: str, params: dict,
                    outputs: list[Path]) -> Path:
    manifest = {
        "tool": "celltrace",
        "version": __version__,
        "command": command,
        "params": params,
        "outputs": {p.name: _sha256(p) for p in sorted(outputs)},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")
    return path


# -- simulate ------------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    density_all, density_smart = args.density_all, args.density_smart
    infection_rate = args.infection_rate
    if args.country:
        preset = COUNTRY_SCENARIOS[args.country]
        if density_all is None:
            density_all = preset.density_all
        if density_smart is None:
            density_smart = preset.density_smart
        if infection_rate is None:
            infection_rate = preset.infection_rate
    config = SimConfig(
        density_all=density_all if density_all is not None else 100.0,
        density_smart=density_smart if density_smart is not None else 58.0,
        infection_rate=infection_rate if infection_rate is not None else 0.18,
        contact_radius=args.radius,
        trials=args.trials,
        seed=args.seed,
    )
    run = run_experiment(config)

    scenarios: list[ScenarioSummary] | None = None
    if args.scenario_summary:
        scenarios = [
            run_scenario(COUNTRY_SCENARIOS[code], args.radius, args.trials, args.seed)
            for code in ("bd", "in", "kr")
        ]

    out_dir = Path(args.out)
    written = emit_results(run, out_dir, scenarios=scenarios)
    params = {
        "density_all": config.density_all,
        "density_smart": config.density_smart,
        "infection_rate": config.infection_rate,
        "contact_radius": config.contact_radius,
        "region_radius": config.region_radius,
        "trials": config.trials,
        "seed": config.seed,
        "country": args.country,
        "scenario_summary": bool(args.scenario_summary),
    }
    written.append(_write_manifest(out_dir, "simulate", params, written))

    if args.figures:
        from .report import render_run_figures

        written.extend(render_run_figures(out_dir))

    for t in run.trials:
        pct = "undefined" if t.pct_change is None else f"{t.pct_change:.2f}%"
        print(f"trial {t.trial_index}: all={t.count_all} smart={t.count_smart} "
              f"change={pct}")
    print(f"wrote {len(written)} files to {out_dir}")
    return 0


# -- trace ---------------------------------------------------------------------


def cmd_trace(args: argparse.Namespace) -> int:
    deployment = load_deployment(args.fixtures)
    central = deployment.build_central(
        distance=args.distance,
        bucket_width=args.bucket,
        multiplicity_threshold=args.threshold,
    )
    bus = MessageBus()
    for number in deployment.infected_numbers:
        central.submit_positive(bus, number)
    entries, flagged = run_trace_round(central, deployment.operators, bus)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    suspects_path = out_dir / "suspects.csv"
    write_suspect_csv(entries, flagged, suspects_path)
    log_path = out_dir / "trace_log.jsonl"
    bus.write_log(log_path)
    params = {
        "fixtures": str(args.fixtures),
        "distance": args.distance,
        "bucket": args.bucket,
        "threshold": args.threshold,
        "infected": deployment.infected_numbers,
        "reference_time": deployment.reference_time,
    }
    _write_manifest(out_dir, "trace", params, [suspects_path, log_path])

    for op_id, stale in sorted(deployment.ingest_warnings.items()):
        if stale:
            print(f"warning: operator {op_id} holds {stale} samples older than "
                  f"the 7-day window", file=sys.stderr)
    partial = [w for w in central.workflows.values() if w.partial_coverage]
    for w in partial:
        print(f"warning: workflow {w.workflow_id} completed with no response "
              f"from {sorted(w.unresponsive_operators)}", file=sys.stderr)
    print(f"{len(central.workflows)} workflows, {len(entries)} suspects, "
          f"{len(flagged)} flagged")
    print(f"wrote {suspects_path} and {log_path}")
    return 0


# -- serve ---------------------------------------------------------------------


def cmd_serve(args: argparse.Namespace) -> int:
    from .httpapi import OperatorNetGateway, ServiceApp, StaticSuspects, create_server
    from .registry import RegistryStore

    try:
        rules = load_rules(args.rules) if args.rules else default_rules()
    except (RuleFileError, OSError) as exc:
        print(f"error: cannot load rule table: {exc}", file=sys.stderr)
        return 1

    geocoder = None
    if args.geocodes:
        try:
            table = json.loads(Path(args.geocodes).read_text(encoding="utf-8"))
            geocoder = FixtureGeocoder(
                {str(k).strip().lower(): (float(v[0]), float(v[1]))
                 for k, v in table.items()}
            )
        except (OSError, ValueError, TypeError, IndexError) as exc:
            print(f"error: cannot load geocode table: {exc}", file=sys.stderr)
            return 1

    if args.operator_fixtures:
        deployment = load_deployment(args.operator_fixtures)
        gateway = OperatorNetGateway(
            deployment,
            distance=args.distance,
            multiplicity_threshold=args.threshold,
        )
    elif args.suspects:
        gateway = StaticSuspects.from_csv(args.suspects)
    else:
        gateway = StaticSuspects()

    data_dir = Path(args.data_dir or os.environ.get(DATA_DIR_ENV, "celltrace-data"))
    store = RegistryStore(data_dir, geocoder=geocoder)
    app = ServiceApp(store=store, rules=rules, gateway=gateway)
    try:
        server = create_server(app, host=args.host, port=args.port)
    except OSError as exc:
        print(f"error: cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return 1

    host, port = server.server_address[:2]
    print(f"celltrace registry listening on http://{host}:{port}", flush=True)

    def _shutdown(signum, frame):
        raise KeyboardInterrupt

    signal.signal(signal.SIGTERM, _shutdown)
    try:
        server.serve_forever(poll_interval=0.2)
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        store.close()
        print("registry stopped; log flushed", flush=True)
    return 0


# -- ingest ----------------------------------------------------------------------


def cmd_ingest(args: argparse.Namespace) -> int:
    source = Path(args.file)
    if not source.exists():
        print(f"error: no such file: {source}", file=sys.stderr)
        return 1
    parsed = read_sample_file(source)

    fixtures = Path(args.fixtures or os.environ.get(DATA_DIR_ENV, "fixtures"))
    op_dir = fixtures / args.operator
    op_dir.mkdir(parents=True, exist_ok=True)
    target = op_dir / "trajectories.jsonl"

    existing: set[tuple[str, float]] = set()
    if target.exists():
        for sample in read_sample_file(target).samples:
            existing.add((sample.subscriber, sample.timestamp))

    accepted = 0
    duplicates = 0
    with open(target, "a", encoding="utf-8") as fh:
        for sample in parsed.samples:
            key = (sample.subscriber, sample.timestamp)
            if key in existing:
                duplicates += 1
                continue
            existing.add(key)
            obj: dict = {"subscriber": sample.subscriber, "timestamp": sample.timestamp}
            if sample.mode == "geo":
                obj["lat"] = sample.position.lat
                obj["lon"] = sample.position.lon
            else:
                obj["x"] = sample.position.x
                obj["y"] = sample.position.y
            fh.write(json.dumps(obj, sort_keys=True) + "\n")
            accepted += 1

    rejected = len(parsed.rejected) + duplicates
    for reject in parsed.rejected[:20]:
        print(f"line {reject.lineno}: {reject.reason}", file=sys.stderr)
    if len(parsed.rejected) > 20:
        print(f"... and {len(parsed.rejected) - 20} more", file=sys.stderr)
    if duplicates:
        print(f"{duplicates} duplicate sample(s) already in {target}", file=sys.stderr)
    print(f"{accepted} accepted, {rejected} rejected")
    if accepted == 0:
        print(f"error: no usable samples in {source}", file=sys.stderr)
        return 1
    return 0


# -- report ----------------------------------------------------------------------


def cmd_report(args: argparse.Namespace) -> int:
    from .report import render_run_figures

    written = render_run_figures(args.run_dir)
    for path in written:
        print(f"wrote {path}")
    return 0


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="celltrace",
        description="Cellular-network contact tracing toolkit",
    )
    parser.add_argument("--version", action="version",
                        version=f"celltrace {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the population comparison experiment")
    sim.add_argument("--density-all", type=_nonnegative_float, default=None,
                     help="expected any-phone users on the unit disk")
    sim.add_argument("--density-smart", type=_nonnegative_float, default=None,
                     help="expected smartphone users on the unit disk")
    sim.add_argument("--infection-rate", type=_rate, default=None)
    sim.add_argument("--radius", type=_positive_float, default=0.03,
                     help="contact radius in scaled units (1.0 = 100 m)")
    sim.add_argument("--trials", type=_positive_int, default=4)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--country", choices=sorted(COUNTRY_SCENARIOS),
                     help="use a country preset for densities and infection rate")
    sim.add_argument("--scenario-summary", action="store_true",
                     help="also aggregate all country presets into scenarios.csv")
    sim.add_argument("--figures", action="store_true",
                     help="render PNG figures next to the CSV output")
    sim.set_defaults(func=cmd_simulate)

    trace = sub.add_parser("trace", help="run the multi-operator trace protocol")
    trace.add_argument("--fixtures", required=True,
                       help="fixture tree: per-operator dirs plus infected.txt")
    trace.add_argument("--distance", type=_positive_float, default=2.0,
                       help="contact distance (meters in geo mode)")
    trace.add_argument("--bucket", type=_positive_int, default=300,
                       help="time bucket width in seconds")
    trace.add_argument("--threshold", type=_positive_int, default=2,
                       help="events needed before a suspect is flagged")
    trace.add_argument("--out", required=True, help="output directory")
    trace.set_defaults(func=cmd_trace)

    serve = sub.add_parser("serve", help="run the registry HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--data-dir", default=None,
                       help=f"registry log directory (default ${DATA_DIR_ENV} "
                            "or ./celltrace-data)")
    serve.add_argument("--rules", default=None, help="triage rule table JSON")
    serve.add_argument("--suspects", default=None,
                       help="suspects.csv from a trace run (static lookups)")
    serve.add_argument("--operator-fixtures", default=None,
                       help="operator fixture tree for live tracing")
    serve.add_argument("--geocodes", default=None,
                       help="JSON file mapping addresses to [lat, lon]")
    serve.add_argument("--distance", type=_positive_float, default=2.0)
    serve.add_argument("--threshold", type=_positive_int, default=2)
    serve.set_defaults(func=cmd_serve)

    ingest = sub.add_parser("ingest", help="load a trajectory file into a fixture store")
    ingest.add_argument("--operator", required=True)
    ingest.add_argument("--file", required=True)
    ingest.add_argument("--fixtures", default=None,
                        help=f"fixture root (default ${DATA_DIR_ENV} or ./fixtures)")
    ingest.set_defaults(func=cmd_ingest)

    report = sub.add_parser("report", help="render figures from a simulate run")
    report.add_argument("--run-dir", required=True)
    report.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
