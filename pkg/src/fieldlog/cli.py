"""Command-line entry points: one-shot pipeline runs, the simulator,
record comparison, and the HTTP service."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .ingest import fixes_from_nmea, read_telemetry
from .model import GatewayReport, load_registry
from .segmentation import (
    auto_entries_from_csv,
    compare_entries,
    export_records_csv,
    export_records_geojson,
    parse_manual_csv,
    run_pipeline,
)
from .simulator import emit_scenario, scenario_from_document, truth_to_csv

ENV_DATA_DIR = "FIELDLOG_DATA_DIR"
ENV_PORT = "FIELDLOG_PORT"


def _cmd_pipeline_run(args) -> int:
    registry = load_registry(Path(args.registry).read_text(encoding="utf-8"))
    lines = Path(args.infile).read_text(encoding="utf-8").splitlines()
    reports, skipped = read_telemetry(lines)

    for spec in args.nmea or []:
        machine_id, _, path = spec.partition("=")
        if not path:
            print(f"bad --nmea value {spec!r}, expected MACHINE=FILE", file=sys.stderr)
            return 2
        fixes, nmea_skipped = fixes_from_nmea(
            machine_id, Path(path).read_text(encoding="utf-8").splitlines()
        )
        reports.extend(GatewayReport(fix=f) for f in fixes)
        skipped.update(nmea_skipped)

    result = run_pipeline(registry, reports)
    Path(args.out_records).write_text(export_records_csv(result.records), encoding="utf-8")
    if args.out_geojson:
        Path(args.out_geojson).write_text(
            json.dumps(export_records_geojson(result.records)), encoding="utf-8"
        )
    if skipped:
        print(f"skipped lines: {dict(skipped)}", file=sys.stderr)
    print(f"{len(result.records)} records -> {args.out_records}", file=sys.stderr)
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    registry = load_registry(Path(args.registry).read_text(encoding="utf-8"))
    data_dir = args.data_dir or os.environ.get(ENV_DATA_DIR)
    if not data_dir:
        print("--data-dir or FIELDLOG_DATA_DIR required", file=sys.stderr)
        return 2
    port = args.port if args.port is not None else int(os.environ.get(ENV_PORT, "8000"))

    app_dir = args.app_dir
    if app_dir is None:
        bundled = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        app_dir = bundled if bundled.is_dir() else None

    app = create_app(registry, Path(data_dir), app_dir=app_dir)
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return 0


def _cmd_compare(args) -> int:
    auto = auto_entries_from_csv(Path(args.auto).read_text(encoding="utf-8"))
    manual = parse_manual_csv(Path(args.manual).read_text(encoding="utf-8"))
    report = compare_entries(auto, manual)
    out = {
        "entries": [
            {
                "field_id": e.field_id,
                "work_type": e.work_type.value,
                "kind": e.kind,
                **({"auto_date": e.auto_date} if e.auto_date else {}),
                **({"manual_date": e.manual_date} if e.manual_date else {}),
            }
            for e in report.entries
        ]
    }
    print(json.dumps(out, indent=2))
    return 0


def _cmd_sim(args) -> int:
    scenario = scenario_from_document(
        json.loads(Path(args.scenario).read_text(encoding="utf-8"))
    )
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    lines, truth = emit_scenario(scenario)
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    Path(args.truth).write_text(truth_to_csv(truth), encoding="utf-8")
    if args.registry_out:
        from .model import registry_to_document

        Path(args.registry_out).write_text(
            json.dumps(registry_to_document(scenario.registry), indent=2), encoding="utf-8"
        )
    print(f"{len(lines)} lines, {len(truth)} truth records", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fieldlog")
    sub = parser.add_subparsers(dest="command", required=True)

    pipeline = sub.add_parser("pipeline", help="offline record extraction")
    pipeline_sub = pipeline.add_subparsers(dest="pipeline_command", required=True)
    run = pipeline_sub.add_parser("run", help="telemetry file -> records CSV")
    run.add_argument("--registry", required=True)
    run.add_argument("--in", dest="infile", required=True, help="telemetry JSONL")
    run.add_argument("--out-records", required=True, help="records CSV output")
    run.add_argument("--out-geojson", help="optional GeoJSON output")
    run.add_argument(
        "--nmea", action="append", metavar="MACHINE=FILE",
        help="merge an SPV NMEA sentence file into the run (repeatable)",
    )
    run.set_defaults(func=_cmd_pipeline_run)

    serve = sub.add_parser("serve", help="run the ingestion/query service")
    serve.add_argument("--registry", required=True)
    serve.add_argument("--data-dir", help=f"event log directory (or ${ENV_DATA_DIR})")
    serve.add_argument("--port", type=int, help=f"listen port (or ${ENV_PORT}, default 8000)")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--app-dir", help="static web app directory (default: bundled build)")
    serve.set_defaults(func=_cmd_serve)

    compare = sub.add_parser("compare", help="diff auto records against a manual logbook")
    compare.add_argument("--auto", required=True, help="records CSV from the pipeline")
    compare.add_argument("--manual", required=True, help="manual CSV: field_id,work_type,date")
    compare.set_defaults(func=_cmd_compare)

    sim = sub.add_parser("sim", help="generate scenario telemetry plus truth records")
    sim.add_argument("--scenario", required=True)
    sim.add_argument("--out", required=True, help="telemetry JSONL output")
    sim.add_argument("--truth", required=True, help="truth CSV output")
    sim.add_argument("--seed", type=int, help="override the scenario seed")
    sim.add_argument("--registry-out", help="also write the embedded registry as JSON")
    sim.set_defaults(func=_cmd_sim)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
