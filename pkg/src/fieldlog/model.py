"""Domain types and registries shared by the whole pipeline.

Everything in here is plain data: no I/O, no threads. Registries are
immutable after load and safe to share between concurrent readers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Iterable, Optional


class FieldlogError(Exception):
    """Base error carrying a stable machine-readable code."""

    def __init__(self, code: str, detail: str = ""):
        self.code = code
        self.detail = detail
        super().__init__(f"{code}: {detail}" if detail else code)


class RegistryError(FieldlogError):
    pass


class WorkType(str, Enum):
    PLANTING = "planting"
    HARVESTING = "harvesting"
    SPRAYING = "spraying"
    GRASS_CUTTING = "grass_cutting"
    HARROWING = "harrowing"
    SEEDING = "seeding"
    PLOWING = "plowing"
    ROTARY_TILLING = "rotary_tilling"
    UNKNOWN = "unknown"


class MachineClass(str, Enum):
    SPV = "spv"
    MPV = "mpv"


# ---------------------------------------------------------------------------
# timestamps
#
# UTC everywhere, millisecond resolution. Display-local conversion is a UI
# concern and never happens server-side.

def parse_rfc3339(text: str) -> datetime:
    """Parse an RFC 3339 timestamp into an aware UTC datetime (ms resolution)."""
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    try:
        t = datetime.fromisoformat(raw)
    except ValueError as e:
        raise ValueError(f"bad timestamp {text!r}: {e}") from None
    if t.tzinfo is None:
        raise ValueError(f"bad timestamp {text!r}: missing timezone")
    t = t.astimezone(timezone.utc)
    # clamp sub-millisecond digits; the wire format carries at most ms
    return t.replace(microsecond=(t.microsecond // 1000) * 1000)


def format_rfc3339(t: datetime) -> str:
    t = t.astimezone(timezone.utc)
    base = t.strftime("%Y-%m-%dT%H:%M:%S")
    if t.microsecond:
        return f"{base}.{t.microsecond // 1000:03d}Z"
    return base + "Z"


def utc(year, month, day, hour=0, minute=0, second=0, ms=0) -> datetime:
    return datetime(year, month, day, hour, minute, second, ms * 1000, tzinfo=timezone.utc)


# ---------------------------------------------------------------------------
# telemetry values

@dataclass(frozen=True)
class GeoPoint:
    lat: float  # decimal degrees WGS84, -90..90
    lon: float  # decimal degrees WGS84, -180..180

    def valid(self) -> bool:
        return (
            math.isfinite(self.lat)
            and math.isfinite(self.lon)
            and -90.0 <= self.lat <= 90.0
            and -180.0 <= self.lon <= 180.0
        )


MAX_SPEED_MS = 30.0  # farm machinery bound; faster fixes are sensor junk

RSSI_MIN = -120
RSSI_MAX = 0


@dataclass(frozen=True)
class Fix:
    """One timestamped GNSS position sample for a machine."""

    machine_id: str
    t: datetime
    pos: GeoPoint
    speed: Optional[float] = None  # m/s
    heading: Optional[float] = None  # degrees 0..360
    hdop: Optional[float] = None


@dataclass(frozen=True)
class BleObservation:
    beacon_uid: str
    rssi: int  # dBm, RSSI_MIN..RSSI_MAX


@dataclass(frozen=True)
class GatewayReport:
    """One uplink line: a fix plus the BLE beacons seen at that moment.

    An empty observation list is exactly what an SPV (no BLE scanner) or an
    MPV with no beacon in range produces.
    """

    fix: Fix
    observations: tuple[BleObservation, ...] = ()


# ---------------------------------------------------------------------------
# registry entries

@dataclass(frozen=True)
class Machine:
    id: str
    name: str
    cls: MachineClass
    spv_work_type: Optional[WorkType] = None  # present iff cls == SPV


@dataclass(frozen=True)
class Implement:
    id: str
    name: str
    beacon_uid: str
    work_type: WorkType


@dataclass(frozen=True)
class FieldPolygon:
    id: str
    name: str
    ring: tuple[GeoPoint, ...]  # ordered, implicitly closed
    area_ha: float = 0.0  # derived at load


@dataclass(frozen=True)
class AttachmentInterval:
    """Time span during which one implement is attached to one machine.

    Intervals for a machine never overlap; treat [start, end) as half-open
    when reasoning about adjacency (one ends exactly where the next begins).
    """

    machine_id: str
    implement_id: str
    start: datetime
    end: datetime


@dataclass(frozen=True)
class WorkRecord:
    id: str
    machine_id: str
    field_id: str
    work_type: WorkType
    implement_id: Optional[str]
    start: datetime
    end: datetime
    duration_s: float  # active work time: gaps and excised stops don't count
    fix_count: int
    distance_m: float
    trajectory: tuple[Fix, ...]
    flags: frozenset[str] = frozenset()  # subset of {merged, had_stop, worktype_unknown}


FLAG_MERGED = "merged"
FLAG_HAD_STOP = "had_stop"
FLAG_WORKTYPE_UNKNOWN = "worktype_unknown"


@dataclass(frozen=True)
class ManualEntry:
    """One hand-written logbook row: field, work type, calendar date."""

    field_id: str
    work_type: WorkType
    date: str  # ISO 8601 date, e.g. "2024-04-01"


@dataclass(frozen=True)
class Params:
    """Pipeline thresholds. All config-overridable; defaults are conservative."""

    v_park: float = 0.2  # m/s: slower counts as not moving
    t_park: float = 180.0  # s: minimum still time that counts as a stop
    t_min_segment: float = 120.0  # s: shorter in-field runs are transitions
    min_fixes: int = 20
    t_gap_merge: float = 900.0  # s: disruptions shorter than this re-merge
    rssi_attach: float = -80.0  # dBm
    rssi_detach: float = -90.0  # dBm
    w_on: float = 60.0  # s: dwell before a beacon may attach
    w_off: float = 120.0  # s: silence after which an attachment ends
    swath_m: float = 5.0  # simulator implement width

    def validate(self) -> "Params":
        if not self.rssi_detach < self.rssi_attach:
            raise RegistryError("bad_params", "rssi_detach must be below rssi_attach")
        if not self.t_min_segment < self.t_gap_merge:
            raise RegistryError("bad_params", "t_min_segment must be below t_gap_merge")
        return self


@dataclass(frozen=True)
class Registry:
    """Static farm configuration the cloud side joins telemetry against."""

    machines: tuple[Machine, ...]
    implements: tuple[Implement, ...]
    fields: tuple[FieldPolygon, ...]  # order matters: first containing polygon wins
    params: Params = Params()

    def machine(self, machine_id: str) -> Optional[Machine]:
        return self._machines_by_id.get(machine_id)

    def implement(self, implement_id: str) -> Optional[Implement]:
        return self._implements_by_id.get(implement_id)

    def field(self, field_id: str) -> Optional[FieldPolygon]:
        return self._fields_by_id.get(field_id)

    def implement_by_beacon(self, beacon_uid: str) -> Optional[Implement]:
        return self._implements_by_beacon.get(beacon_uid)

    def __post_init__(self):
        object.__setattr__(self, "_machines_by_id", {m.id: m for m in self.machines})
        object.__setattr__(self, "_implements_by_id", {i.id: i for i in self.implements})
        object.__setattr__(self, "_fields_by_id", {f.id: f for f in self.fields})
        object.__setattr__(
            self, "_implements_by_beacon", {i.beacon_uid: i for i in self.implements}
        )


# ---------------------------------------------------------------------------
# registry loading

def _require(cond: bool, code: str, detail: str):
    if not cond:
        raise RegistryError(code, detail)


def _parse_work_type(raw, where: str) -> WorkType:
    try:
        return WorkType(raw)
    except ValueError:
        raise RegistryError("bad_work_type", f"{where}: unknown work type {raw!r}") from None


def load_registry(document) -> Registry:
    """Build a validated Registry from a config document (dict or JSON text).

    Rejects duplicate ids, duplicate beacon bindings, SPVs without a work
    type, degenerate or overlapping field polygons, and out-of-range params.
    """
    from . import geo  # deferred: geo imports this module's types

    if isinstance(document, (str, bytes)):
        document = json.loads(document)
    _require(isinstance(document, dict), "schema_violation", "registry document must be an object")

    machines: list[Machine] = []
    for entry in document.get("machines", []):
        cls = MachineClass(entry.get("class", ""))
        wt = entry.get("work_type")
        if cls is MachineClass.SPV:
            _require(wt is not None, "spv_missing_work_type", f"machine {entry.get('id')}")
            spv_wt = _parse_work_type(wt, f"machine {entry.get('id')}")
        else:
            _require(wt is None, "mpv_with_work_type", f"machine {entry.get('id')}")
            spv_wt = None
        machines.append(
            Machine(id=str(entry["id"]), name=str(entry.get("name", entry["id"])),
                    cls=cls, spv_work_type=spv_wt)
        )

    implements: list[Implement] = []
    for entry in document.get("implements", []):
        _require(bool(entry.get("beacon_uid")), "bad_beacon", f"implement {entry.get('id')}")
        implements.append(
            Implement(id=str(entry["id"]), name=str(entry.get("name", entry["id"])),
                      beacon_uid=str(entry["beacon_uid"]),
                      work_type=_parse_work_type(entry["work_type"], f"implement {entry.get('id')}"))
        )

    fields: list[FieldPolygon] = []
    for entry in document.get("fields", []):
        ring_raw = entry.get("ring", [])
        _require(len(ring_raw) >= 3, "bad_polygon",
                 f"field {entry.get('id')}: ring needs at least 3 vertices")
        ring = tuple(GeoPoint(lat=float(lat), lon=float(lon)) for lon, lat in ring_raw)
        fields.append(FieldPolygon(id=str(entry["id"]),
                                   name=str(entry.get("name", entry["id"])), ring=ring))

    params = Params(**document.get("params", {})).validate()

    # cross-reference checks
    seen_ids: set[str] = set()
    for ident in [m.id for m in machines] + [i.id for i in implements] + [f.id for f in fields]:
        _require(ident not in seen_ids, "duplicate_id", ident)
        seen_ids.add(ident)
    seen_beacons: set[str] = set()
    for imp in implements:
        _require(imp.beacon_uid not in seen_beacons, "duplicate_beacon", imp.beacon_uid)
        seen_beacons.add(imp.beacon_uid)

    # polygon geometry checks; antimeridian / polar fields are unsupported
    checked: list[FieldPolygon] = []
    for f in fields:
        for p in f.ring:
            _require(p.valid(), "bad_polygon", f"field {f.id}: vertex out of range")
            _require(abs(p.lat) <= 85.0, "unsupported_region", f"field {f.id}: polar field")
        lons = [p.lon for p in f.ring]
        _require(max(lons) - min(lons) < 180.0, "unsupported_region",
                 f"field {f.id}: crosses the antimeridian")
        for a, b in zip(f.ring, f.ring[1:] + f.ring[:1]):
            _require(a != b, "bad_polygon", f"field {f.id}: repeated consecutive vertex")
        _require(geo.ring_is_simple(f.ring), "bad_polygon", f"field {f.id}: self-intersecting ring")
        area = geo.ring_area_ha(f.ring)
        _require(area > 0.0, "bad_polygon", f"field {f.id}: zero area")
        checked.append(replace(f, area_ha=area))

    for i, a in enumerate(checked):
        for b in checked[i + 1:]:
            _require(not geo.rings_overlap(a.ring, b.ring), "overlapping_fields",
                     f"{a.id} overlaps {b.id}")

    return Registry(machines=tuple(machines), implements=tuple(implements),
                    fields=tuple(checked), params=params)


def registry_to_document(reg: Registry) -> dict:
    """Serialize a Registry back to config-document form (load round-trips)."""
    doc: dict = {
        "machines": [
            {
                "id": m.id,
                "name": m.name,
                "class": m.cls.value,
                **({"work_type": m.spv_work_type.value} if m.spv_work_type else {}),
            }
            for m in reg.machines
        ],
        "implements": [
            {"id": i.id, "name": i.name, "beacon_uid": i.beacon_uid,
             "work_type": i.work_type.value}
            for i in reg.implements
        ],
        "fields": [
            {"id": f.id, "name": f.name,
             "ring": [[p.lon, p.lat] for p in f.ring]}
            for f in reg.fields
        ],
        "params": {
            "v_park": reg.params.v_park,
            "t_park": reg.params.t_park,
            "t_min_segment": reg.params.t_min_segment,
            "min_fixes": reg.params.min_fixes,
            "t_gap_merge": reg.params.t_gap_merge,
            "rssi_attach": reg.params.rssi_attach,
            "rssi_detach": reg.params.rssi_detach,
            "w_on": reg.params.w_on,
            "w_off": reg.params.w_off,
            "swath_m": reg.params.swath_m,
        },
    }
    return doc


def work_types() -> Iterable[WorkType]:
    return list(WorkType)
