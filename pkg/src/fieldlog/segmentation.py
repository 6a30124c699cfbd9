"""Turn validated fix streams into per-field work records.

Pipeline order (fixed): annotate → detect_stops → split_by_field →
subtract_stops → filter_transitions → merge_disruptions →
build_work_records. Stops are excised rather than permanently splitting
records: merging runs afterwards, so a lunch break inside one field still
yields a single record for the operation.

Everything is a pure, deterministic function per machine; machines are the
unit of parallelism and share no state.
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Iterable, Optional, Sequence

from . import geo
from .attachment import attachment_at, build_timelines, infer_attachments
from .model import (
    RSSI_MIN,
    AttachmentInterval,
    FLAG_HAD_STOP,
    FLAG_MERGED,
    FLAG_WORKTYPE_UNKNOWN,
    FieldPolygon,
    Fix,
    GatewayReport,
    Machine,
    MachineClass,
    ManualEntry,
    Params,
    Registry,
    WorkRecord,
    WorkType,
    format_rfc3339,
    parse_rfc3339,
)
from .ingest import validate_stream


@dataclass(frozen=True)
class AnnotatedFix:
    fix: Fix
    field_id: Optional[str]
    implement_id: Optional[str]
    moving: bool


@dataclass
class Segment:
    """Contiguous run of annotated fixes inside one field."""

    machine_id: str
    field_id: str
    fixes: list[AnnotatedFix]
    # active time spans; more than one after merging across a gap
    spans: list[tuple[datetime, datetime]] = field(default_factory=list)
    flags: set[str] = field(default_factory=set)

    @property
    def start(self) -> datetime:
        return self.fixes[0].fix.t

    @property
    def end(self) -> datetime:
        return self.fixes[-1].fix.t

    @property
    def duration_s(self) -> float:
        return sum((e - s).total_seconds() for s, e in self.spans)


@dataclass(frozen=True)
class TransitLeg:
    machine_id: str
    from_record_id: str
    to_record_id: str
    duration_s: float
    straight_line_m: float
    path_m: float


@dataclass(frozen=True)
class DiscrepancyEntry:
    field_id: str
    work_type: WorkType
    kind: str  # date_mismatch | missing_manual | missing_auto
    auto_date: Optional[str] = None
    manual_date: Optional[str] = None


@dataclass(frozen=True)
class DiscrepancyReport:
    entries: tuple[DiscrepancyEntry, ...]


@dataclass(frozen=True)
class Corrections:
    """Toggles for the four record-correction algorithms (all on in production)."""

    parked: bool = True  # excise in-field parking from work time
    disrupted: bool = True  # re-merge interrupted operations
    transitions: bool = True  # drop brief crossings of neighboring fields
    stray_rejection: bool = True  # ignore beacons that never clear the attach bar


# ---------------------------------------------------------------------------
# pipeline stages

def annotate(
    fixes: Sequence[Fix],
    fields: Sequence[FieldPolygon],
    attachments: Sequence[AttachmentInterval],
    params: Params,
) -> list[AnnotatedFix]:
    """Join each fix with its field, attached implement, and movement state.

    Field assignment takes the first registry polygon containing the fix;
    overlapping polygons were already rejected at load. Fixes without a
    reported speed fall back to the implied speed from the previous fix.
    """
    out: list[AnnotatedFix] = []
    for i, fix in enumerate(fixes):
        speed = fix.speed
        if speed is None:
            if i > 0:
                dt = (fix.t - fixes[i - 1].t).total_seconds()
                speed = geo.haversine_m(fixes[i - 1].pos, fix.pos) / dt if dt > 0 else 0.0
            elif len(fixes) > 1:
                dt = (fixes[1].t - fix.t).total_seconds()
                speed = geo.haversine_m(fix.pos, fixes[1].pos) / dt if dt > 0 else 0.0
            else:
                speed = 0.0
        field_id = None
        for poly in fields:
            if geo.point_in_polygon(fix.pos, poly.ring):
                field_id = poly.id
                break
        out.append(
            AnnotatedFix(
                fix=fix,
                field_id=field_id,
                implement_id=attachment_at(attachments, fix.t),
                moving=speed >= params.v_park,
            )
        )
    return out


def detect_stops(
    annotated: Sequence[AnnotatedFix], params: Params
) -> list[tuple[datetime, datetime]]:
    """Maximal still runs lasting at least t_park; shorter pauses are headland turns."""
    stops: list[tuple[datetime, datetime]] = []
    run_start: Optional[datetime] = None
    run_end: Optional[datetime] = None
    for af in annotated:
        if not af.moving:
            if run_start is None:
                run_start = af.fix.t
            run_end = af.fix.t
        else:
            if run_start is not None and (run_end - run_start).total_seconds() >= params.t_park:
                stops.append((run_start, run_end))
            run_start = run_end = None
    if run_start is not None and (run_end - run_start).total_seconds() >= params.t_park:
        stops.append((run_start, run_end))
    return stops


def split_by_field(annotated: Sequence[AnnotatedFix]) -> list[Segment]:
    """Maximal same-field runs; fixes outside every field are discarded."""
    segments: list[Segment] = []
    current: list[AnnotatedFix] = []
    for af in annotated:
        if current and af.field_id == current[-1].field_id:
            current.append(af)
            continue
        if current and current[-1].field_id is not None:
            segments.append(_make_segment(current))
        current = [af]
    if current and current[-1].field_id is not None:
        segments.append(_make_segment(current))
    return segments


def _make_segment(fixes: list[AnnotatedFix], flags: Optional[set[str]] = None) -> Segment:
    return Segment(
        machine_id=fixes[0].fix.machine_id,
        field_id=fixes[0].field_id,
        fixes=fixes,
        spans=[(fixes[0].fix.t, fixes[-1].fix.t)],
        flags=set(flags or ()),
    )


def subtract_stops(
    segments: Sequence[Segment],
    stops: Sequence[tuple[datetime, datetime]],
    params: Params,
) -> list[Segment]:
    """Excise stop intervals from segments; parked time never counts as work.

    A segment split by an excision yields pieces that are re-checked against
    t_min_segment; every surviving piece of a segment that lost fixes is
    flagged had_stop.
    """
    if not stops:
        return list(segments)

    def stopped(t: datetime) -> bool:
        return any(s <= t <= e for s, e in stops)

    out: list[Segment] = []
    for seg in segments:
        runs: list[list[AnnotatedFix]] = []
        current: list[AnnotatedFix] = []
        lost = False
        for af in seg.fixes:
            if stopped(af.fix.t):
                lost = True
                if current:
                    runs.append(current)
                    current = []
            else:
                current.append(af)
        if current:
            runs.append(current)
        if not lost:
            out.append(seg)
            continue
        for run in runs:
            piece = _make_segment(run, flags=seg.flags | {FLAG_HAD_STOP})
            if (piece.end - piece.start).total_seconds() >= params.t_min_segment:
                out.append(piece)
    return out


def filter_transitions(segments: Sequence[Segment], params: Params) -> list[Segment]:
    """Drop runs too short or too sparse to be work: a machine merely
    crossing a neighboring paddy is not an operation."""
    return [
        seg
        for seg in segments
        if (seg.end - seg.start).total_seconds() >= params.t_min_segment
        and len(seg.fixes) >= params.min_fixes
    ]


def _majority_implement(seg: Segment) -> Optional[str]:
    counts = Counter(af.implement_id for af in seg.fixes)
    imp, n = counts.most_common(1)[0]
    if imp is not None and n * 2 >= len(seg.fixes):
        return imp
    return None


def merge_disruptions(segments: Sequence[Segment], params: Params) -> list[Segment]:
    """Re-join consecutive same-field, same-implement segments whose gap is
    below t_gap_merge. Gap time stays out of the duration but the merged
    segment spans first start to last end. A UTC calendar-day boundary ends
    merge eligibility: work resumed next morning is a new record.
    """
    merged: list[Segment] = []
    for seg in segments:
        if merged:
            prev = merged[-1]
            gap = (seg.start - prev.end).total_seconds()
            if (
                prev.field_id == seg.field_id
                and prev.machine_id == seg.machine_id
                and _majority_implement(prev) == _majority_implement(seg)
                and 0 <= gap < params.t_gap_merge
                and prev.end.astimezone(timezone.utc).date()
                == seg.start.astimezone(timezone.utc).date()
            ):
                merged[-1] = Segment(
                    machine_id=prev.machine_id,
                    field_id=prev.field_id,
                    fixes=prev.fixes + seg.fixes,
                    spans=prev.spans + seg.spans,
                    flags=prev.flags | seg.flags | {FLAG_MERGED},
                )
                continue
        merged.append(seg)
    return merged


def build_work_records(
    machine: Machine, segments: Sequence[Segment], registry: Registry
) -> list[WorkRecord]:
    """Materialize corrected segments as work records with stable ids.

    SPV records carry the machine's fixed work type. MPV records take the
    work type of the implement attached for the majority of fixes; without
    such a majority the type is unknown and the record is flagged.
    """
    records: list[WorkRecord] = []
    for seg in segments:
        flags = set(seg.flags)
        implement_id: Optional[str] = None
        if machine.cls is MachineClass.SPV:
            work_type = machine.spv_work_type
        else:
            implement_id = _majority_implement(seg)
            if implement_id is not None:
                work_type = registry.implement(implement_id).work_type
            else:
                work_type = WorkType.UNKNOWN
                flags.add(FLAG_WORKTYPE_UNKNOWN)
        trajectory = tuple(af.fix for af in seg.fixes)
        records.append(
            WorkRecord(
                id=f"{machine.id}:{format_rfc3339(seg.start)}",
                machine_id=machine.id,
                field_id=seg.field_id,
                work_type=work_type,
                implement_id=implement_id,
                start=seg.start,
                end=seg.end,
                duration_s=seg.duration_s,
                fix_count=len(trajectory),
                distance_m=geo.trajectory_length_m(trajectory),
                trajectory=trajectory,
                flags=frozenset(flags),
            )
        )
    return records


# ---------------------------------------------------------------------------
# whole-pipeline driver

@dataclass(frozen=True)
class MachineResult:
    machine_id: str
    records: tuple[WorkRecord, ...]
    fixes: tuple[Fix, ...]  # validated stream, transit included
    attachments: tuple[AttachmentInterval, ...]
    dropped_fixes: Counter
    unknown_beacons: Counter


@dataclass(frozen=True)
class PipelineResult:
    records: tuple[WorkRecord, ...]  # all machines, sorted by (start, machine)
    per_machine: dict[str, MachineResult]


def process_machine(
    machine: Machine,
    reports: Sequence[GatewayReport],
    registry: Registry,
    corrections: Corrections = Corrections(),
) -> MachineResult:
    params = registry.params
    fixes, dropped = validate_stream([r.fix for r in reports])

    unknown: Counter = Counter()
    attachments: list[AttachmentInterval] = []
    if machine.cls is MachineClass.MPV:
        att_params = params
        if not corrections.stray_rejection:
            att_params = replace(params, rssi_attach=float(RSSI_MIN), rssi_detach=RSSI_MIN - 1.0)
        beacon_map = {i.beacon_uid: i.id for i in registry.implements}
        attachments, unknown = infer_attachments(build_timelines(reports), beacon_map, att_params)

    annotated = annotate(fixes, registry.fields, attachments, params)
    stops = detect_stops(annotated, params) if corrections.parked else []
    segments = split_by_field(annotated)
    if corrections.parked:
        segments = subtract_stops(segments, stops, params)
    if corrections.transitions:
        segments = filter_transitions(segments, params)
    if corrections.disrupted:
        segments = merge_disruptions(segments, params)
    records = build_work_records(machine, segments, registry)

    return MachineResult(
        machine_id=machine.id,
        records=tuple(records),
        fixes=tuple(fixes),
        attachments=tuple(attachments),
        dropped_fixes=dropped,
        unknown_beacons=unknown,
    )


def run_pipeline(
    registry: Registry,
    reports: Iterable[GatewayReport],
    corrections: Corrections = Corrections(),
) -> PipelineResult:
    """Process a full telemetry batch: group by machine, run each machine,
    and return records in stable (start, machine) order."""
    by_machine: dict[str, list[GatewayReport]] = {}
    for rep in reports:
        by_machine.setdefault(rep.fix.machine_id, []).append(rep)

    per_machine: dict[str, MachineResult] = {}
    for machine_id in sorted(by_machine):
        machine = registry.machine(machine_id)
        if machine is None:
            continue  # telemetry from unregistered units is not an error
        by_machine[machine_id].sort(key=lambda r: r.fix.t)
        per_machine[machine_id] = process_machine(
            machine, by_machine[machine_id], registry, corrections
        )

    records = sorted(
        (rec for res in per_machine.values() for rec in res.records),
        key=lambda r: (r.start, r.machine_id),
    )
    return PipelineResult(records=tuple(records), per_machine=per_machine)


# ---------------------------------------------------------------------------
# derived analyses

def summarize(records: Sequence[WorkRecord], registry: Registry) -> dict:
    """Record counts per machine class, work type, and field.

    total always equals the sum of the per-class counts, whatever the
    source data claims.
    """
    per_class = {MachineClass.SPV.value: 0, MachineClass.MPV.value: 0}
    per_work_type: Counter = Counter()
    per_field: Counter = Counter()
    for rec in records:
        machine = registry.machine(rec.machine_id)
        cls = machine.cls.value if machine else MachineClass.MPV.value
        per_class[cls] += 1
        per_work_type[rec.work_type.value] += 1
        per_field[rec.field_id] += 1
    return {
        "per_class": per_class,
        "per_work_type": dict(sorted(per_work_type.items())),
        "per_field": dict(sorted(per_field.items())),
        "total": sum(per_class.values()),
    }


def transit_report(
    records: Sequence[WorkRecord], fixes: Sequence[Fix]
) -> list[TransitLeg]:
    """Legs between consecutive same-day records of one machine.

    path_m follows the machine's actual fixes between the two records;
    straight_line_m is the crow-flight distance, so path/straight exposes
    routing inefficiency.
    """
    ordered = sorted(records, key=lambda r: r.start)
    legs: list[TransitLeg] = []
    for prev, nxt in zip(ordered, ordered[1:]):
        if prev.machine_id != nxt.machine_id:
            raise ValueError("transit_report expects records of one machine")
        if prev.end.astimezone(timezone.utc).date() != nxt.start.astimezone(timezone.utc).date():
            continue
        between = [f for f in fixes if prev.end <= f.t <= nxt.start]
        path_points = [prev.trajectory[-1], *between, nxt.trajectory[0]]
        legs.append(
            TransitLeg(
                machine_id=prev.machine_id,
                from_record_id=prev.id,
                to_record_id=nxt.id,
                duration_s=(nxt.start - prev.end).total_seconds(),
                straight_line_m=geo.haversine_m(prev.trajectory[-1].pos, nxt.trajectory[0].pos),
                path_m=geo.trajectory_length_m(path_points),
            )
        )
    return legs


def compare_records(
    auto: Sequence[WorkRecord], manual: Sequence[ManualEntry]
) -> DiscrepancyReport:
    """Diff automatic records against a manual logbook on (field, work type).

    Matching dates drop out; leftover dates pair up as date mismatches and
    one-sided leftovers become missing_manual / missing_auto entries.
    """
    return compare_entries(
        [
            ManualEntry(rec.field_id, rec.work_type,
                        rec.start.astimezone(timezone.utc).date().isoformat())
            for rec in auto
        ],
        manual,
    )


def compare_entries(
    auto: Sequence[ManualEntry], manual: Sequence[ManualEntry]
) -> DiscrepancyReport:
    auto_dates: dict[tuple[str, WorkType], list[str]] = {}
    for entry in auto:
        auto_dates.setdefault((entry.field_id, entry.work_type), []).append(entry.date)
    manual_dates: dict[tuple[str, WorkType], list[str]] = {}
    for entry in manual:
        manual_dates.setdefault((entry.field_id, entry.work_type), []).append(entry.date)

    entries: list[DiscrepancyEntry] = []
    for key in sorted(set(auto_dates) | set(manual_dates), key=lambda k: (k[0], k[1].value)):
        field_id, work_type = key
        a = sorted(auto_dates.get(key, []))
        m = sorted(manual_dates.get(key, []))
        # drop exact matches (multiset intersection)
        residual_m = list(m)
        a_left = []
        for d in a:
            if d in residual_m:
                residual_m.remove(d)
            else:
                a_left.append(d)
        m_left = residual_m
        for ad, md in zip(a_left, m_left):
            entries.append(DiscrepancyEntry(field_id, work_type, "date_mismatch",
                                            auto_date=ad, manual_date=md))
        for ad in a_left[len(m_left):]:
            entries.append(DiscrepancyEntry(field_id, work_type, "missing_manual", auto_date=ad))
        for md in m_left[len(a_left):]:
            entries.append(DiscrepancyEntry(field_id, work_type, "missing_auto", manual_date=md))
    return DiscrepancyReport(entries=tuple(entries))


# ---------------------------------------------------------------------------
# exports

CSV_COLUMNS = [
    "id", "machine", "field", "work_type", "implement",
    "start", "end", "duration_s", "distance_m", "flags",
]


def _record_row(rec: WorkRecord) -> list[str]:
    return [
        rec.id,
        rec.machine_id,
        rec.field_id,
        rec.work_type.value,
        rec.implement_id or "",
        format_rfc3339(rec.start),
        format_rfc3339(rec.end),
        f"{rec.duration_s:.1f}",
        f"{rec.distance_m:.1f}",
        "|".join(sorted(rec.flags)),
    ]


def export_records_csv(records: Sequence[WorkRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in records:
        writer.writerow(_record_row(rec))
    return buf.getvalue()


def record_properties(rec: WorkRecord) -> dict:
    return {
        "id": rec.id,
        "machine": rec.machine_id,
        "field": rec.field_id,
        "work_type": rec.work_type.value,
        "implement": rec.implement_id,
        "start": format_rfc3339(rec.start),
        "end": format_rfc3339(rec.end),
        "duration_s": rec.duration_s,
        "fix_count": rec.fix_count,
        "distance_m": rec.distance_m,
        "flags": sorted(rec.flags),
    }


def export_records_geojson(records: Sequence[WorkRecord]) -> dict:
    return {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[f.pos.lon, f.pos.lat] for f in rec.trajectory],
                },
                "properties": record_properties(rec),
            }
            for rec in records
        ],
    }


def parse_manual_csv(text: str) -> list[ManualEntry]:
    """Read a manual logbook: header field_id,work_type,date (ISO 8601)."""
    reader = csv.DictReader(io.StringIO(text))
    entries = []
    for row in reader:
        entries.append(
            ManualEntry(
                field_id=row["field_id"],
                work_type=WorkType(row["work_type"]),
                date=row["date"],
            )
        )
    return entries


def auto_entries_from_csv(text: str) -> list[ManualEntry]:
    """Project an exported records CSV down to comparison keys."""
    reader = csv.DictReader(io.StringIO(text))
    entries = []
    for row in reader:
        entries.append(
            ManualEntry(
                field_id=row["field"],
                work_type=WorkType(row["work_type"]),
                date=parse_rfc3339(row["start"]).date().isoformat(),
            )
        )
    return entries
