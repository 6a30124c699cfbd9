"""Ingestion and query service.

The source of truth is a plain append-only event log (one JSONL file per
machine under <data_dir>/events/); records are derived state, recomputed
from the log, so a crash after an acknowledged ingest can never lose data.
Appends are serialized under one lock; queries read the last completed
revision.
"""

from __future__ import annotations

import os
import threading
import urllib.parse
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, PlainTextResponse, RedirectResponse
from fastapi.staticfiles import StaticFiles

from . import geo
from .attachment import attachment_at
from .ingest import ParseError, parse_gateway_report
from .model import (
    Fix,
    GatewayReport,
    Registry,
    WorkType,
    format_rfc3339,
    parse_rfc3339,
    registry_to_document,
)
from .segmentation import (
    MachineResult,
    export_records_csv,
    export_records_geojson,
    process_machine,
    record_properties,
    summarize,
    transit_report,
)

MAX_BODY_BYTES = 10 * 1024 * 1024
RECOMPUTE_DEBOUNCE_S = 10.0


class ApiError(Exception):
    def __init__(self, status: int, error: str, detail: str = ""):
        self.status = status
        self.error = error
        self.detail = detail
        super().__init__(f"{error}: {detail}")


def _machine_log_name(machine_id: str) -> str:
    return urllib.parse.quote(machine_id, safe="") + ".jsonl"


class ServiceState:
    """Event log plus derived records, guarded by one lock (desk scale)."""

    def __init__(self, registry: Registry, data_dir: Path,
                 recompute_debounce_s: float = RECOMPUTE_DEBOUNCE_S):
        self.registry = registry
        self.events_dir = Path(data_dir) / "events"
        self.events_dir.mkdir(parents=True, exist_ok=True)
        self.debounce_s = recompute_debounce_s
        self.lock = threading.RLock()
        self.reports: dict[str, list[GatewayReport]] = {}
        self.seen: dict[str, set[datetime]] = {}
        self.results: dict[str, MachineResult] = {}
        self.records: list = []
        self.revision = 0
        self._pending: Optional[threading.Timer] = None
        self._load()
        self.recompute()

    def _load(self):
        for path in sorted(self.events_dir.glob("*.jsonl")):
            for line in path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                try:
                    report = parse_gateway_report(line)
                except ParseError:
                    continue  # log normally holds only accepted lines; tolerate tampering
                machine = report.fix.machine_id
                self.reports.setdefault(machine, []).append(report)
                self.seen.setdefault(machine, set()).add(report.fix.t)

    def ingest(self, body: str) -> dict:
        accepted = 0
        duplicates = 0
        reasons: list[str] = []
        to_append: dict[str, list[str]] = {}
        with self.lock:
            for number, line in enumerate(body.splitlines(), start=1):
                if not line.strip():
                    continue
                try:
                    report = parse_gateway_report(line)
                except ParseError as e:
                    reasons.append(f"line {number}: {e.code}")
                    continue
                machine = report.fix.machine_id
                if report.fix.t in self.seen.setdefault(machine, set()):
                    duplicates += 1
                    continue
                self.seen[machine].add(report.fix.t)
                self.reports.setdefault(machine, []).append(report)
                to_append.setdefault(machine, []).append(line.strip())
                accepted += 1
            # durable before acknowledging: flush + fsync each touched log
            for machine, lines in to_append.items():
                path = self.events_dir / _machine_log_name(machine)
                with open(path, "a", encoding="utf-8") as fh:
                    fh.write("\n".join(lines) + "\n")
                    fh.flush()
                    os.fsync(fh.fileno())
        self._schedule_recompute()
        return {
            "accepted": accepted,
            "rejected": len(reasons),
            "duplicates": duplicates,
            "reasons": reasons,
        }

    def _schedule_recompute(self):
        with self.lock:
            if self._pending is not None:
                self._pending.cancel()
            self._pending = threading.Timer(self.debounce_s, self.recompute)
            self._pending.daemon = True
            self._pending.start()

    def recompute(self, machine_id: Optional[str] = None) -> int:
        with self.lock:
            targets = [machine_id] if machine_id else sorted(self.reports)
            for mid in targets:
                machine = self.registry.machine(mid)
                if machine is None:
                    continue
                reports = sorted(self.reports.get(mid, []), key=lambda r: r.fix.t)
                self.results[mid] = process_machine(machine, reports, self.registry)
            self.records = sorted(
                (rec for res in self.results.values() for rec in res.records),
                key=lambda r: (r.start, r.machine_id),
            )
            self.revision += 1
            return self.revision

    def live_positions(self, now: Optional[datetime] = None) -> list[dict]:
        now = now or datetime.now(timezone.utc)
        out = []
        with self.lock:
            for machine_id in sorted(self.reports):
                reports = self.reports[machine_id]
                if not reports:
                    continue
                last = max(reports, key=lambda r: r.fix.t).fix
                field_id = None
                for poly in self.registry.fields:
                    if geo.point_in_polygon(last.pos, poly.ring):
                        field_id = poly.id
                        break
                result = self.results.get(machine_id)
                implement = (
                    attachment_at(list(result.attachments), last.t) if result else None
                )
                out.append(
                    {
                        "machine": machine_id,
                        "t": format_rfc3339(last.t),
                        "lat": last.pos.lat,
                        "lon": last.pos.lon,
                        "field": field_id,
                        "implement": implement,
                        "staleness_s": max(0.0, (now - last.t).total_seconds()),
                    }
                )
        return out


def create_app(
    registry: Registry,
    data_dir: Path,
    app_dir: Optional[Path] = None,
    recompute_debounce_s: float = RECOMPUTE_DEBOUNCE_S,
) -> FastAPI:
    state = ServiceState(registry, data_dir, recompute_debounce_s)
    app = FastAPI(title="fieldlog", docs_url=None, redoc_url=None)
    app.state.store = state

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status, content={"error": exc.error, "detail": exc.detail}
        )

    @app.post("/api/v1/ingest")
    async def ingest(request: Request):
        body = await request.body()
        if len(body) > MAX_BODY_BYTES:
            raise ApiError(413, "payload_too_large", f"{len(body)} bytes")
        return state.ingest(body.decode("utf-8", errors="replace"))

    @app.post("/api/v1/recompute")
    def recompute(machine: Optional[str] = None):
        if machine is not None and state.registry.machine(machine) is None:
            raise ApiError(400, "unknown_machine", machine)
        return {"revision": state.recompute(machine)}

    @app.get("/api/v1/records")
    def records(
        machine: Optional[str] = None,
        field: Optional[str] = None,
        work_type: Optional[str] = None,
        from_: Optional[str] = Query(None, alias="from"),
        to: Optional[str] = None,
        format: str = "json",
    ):
        if machine is not None and state.registry.machine(machine) is None:
            raise ApiError(400, "unknown_machine", machine)
        if field is not None and state.registry.field(field) is None:
            raise ApiError(400, "unknown_field", field)
        wt: Optional[WorkType] = None
        if work_type is not None:
            try:
                wt = WorkType(work_type)
            except ValueError:
                raise ApiError(400, "unknown_work_type", work_type) from None
        try:
            t_from = parse_rfc3339(from_) if from_ else None
            t_to = parse_rfc3339(to) if to else None
        except ValueError as e:
            raise ApiError(400, "bad_time_range", str(e)) from None

        with state.lock:
            selected = [
                rec
                for rec in state.records
                if (machine is None or rec.machine_id == machine)
                and (field is None or rec.field_id == field)
                and (wt is None or rec.work_type == wt)
                and (t_from is None or rec.end >= t_from)
                and (t_to is None or rec.start <= t_to)
            ]
            revision = state.revision

        if format == "csv":
            return PlainTextResponse(export_records_csv(selected), media_type="text/csv")
        if format == "geojson":
            return export_records_geojson(selected)
        if format == "json":
            return {
                "revision": revision,
                "records": [record_properties(rec) for rec in selected],
            }
        raise ApiError(400, "unknown_format", format)

    @app.get("/api/v1/live")
    def live():
        return {"positions": state.live_positions()}

    @app.get("/api/v1/registry")
    def get_registry():
        return registry_to_document(state.registry)

    @app.get("/api/v1/summary")
    def summary():
        with state.lock:
            return summarize(state.records, state.registry)

    @app.get("/api/v1/transit")
    def transit(machine: Optional[str] = None):
        with state.lock:
            if machine is not None:
                if state.registry.machine(machine) is None:
                    raise ApiError(400, "unknown_machine", machine)
                targets = [machine]
            else:
                targets = sorted(state.results)
            legs = []
            for mid in targets:
                result = state.results.get(mid)
                if result is None:
                    continue
                legs.extend(
                    transit_report(list(result.records), list(result.fixes))
                )
        return {
            "legs": [
                {
                    "machine": leg.machine_id,
                    "from_record": leg.from_record_id,
                    "to_record": leg.to_record_id,
                    "duration_s": leg.duration_s,
                    "straight_line_m": leg.straight_line_m,
                    "path_m": leg.path_m,
                }
                for leg in legs
            ]
        }

    @app.get("/api/v1/boundaries")
    def boundaries(field: Optional[str] = None):
        with state.lock:
            if field is not None and state.registry.field(field) is None:
                raise ApiError(400, "unknown_field", field)
            target_fields = [field] if field else [f.id for f in state.registry.fields]
            features = []
            for field_id in target_fields:
                fixes: list[Fix] = []
                for rec in state.records:
                    if rec.field_id == field_id:
                        fixes.extend(rec.trajectory)
                try:
                    est = geo.digitize_boundary(
                        fixes,
                        swath_m=state.registry.params.swath_m,
                        min_fixes=state.registry.params.min_fixes,
                        registered_ring=state.registry.field(field_id).ring,
                    )
                except geo.GeoError as e:
                    if field is not None:
                        raise ApiError(400, e.code, field_id) from None
                    continue
                features.append(geo.boundary_to_geojson(est, field_id))
        return {"type": "FeatureCollection", "features": features}

    if app_dir is not None and Path(app_dir).is_dir():
        app.mount("/app", StaticFiles(directory=str(app_dir), html=True), name="app")

        @app.get("/", include_in_schema=False)
        def index():
            return RedirectResponse(url="/app/")

    return app
