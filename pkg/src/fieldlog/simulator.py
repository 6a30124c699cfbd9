"""Ground-truth scenario generator.

Synthesizes a small fleet working rectangular paddy fields: boustrophedon
work passes, road transits between fields, in-field parks, mid-work
disruptions, brief crossings of neighboring fields, and noisy beacon RSSI
traces. Emits wire-format telemetry plus the truth records the pipeline is
expected to reproduce, which makes it the oracle for end-to-end testing.

Geometry runs on a local tangent plane at the scenario's reference
latitude (x east, y north, meters), so designed path lengths are exact at
field scale. Fields sit in a row above y=0; a virtual road runs south of
them and the yard is further southwest. All randomness is RSSI noise,
seeded per machine and beacon: identical scenarios emit identical bytes.
"""

from __future__ import annotations

import math
import random
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Optional, Sequence

from .geo import haversine_m, meters_per_degree, point_in_polygon
from .ingest import serialize_report
from .model import (
    BleObservation,
    FieldlogError,
    FieldPolygon,
    Fix,
    GatewayReport,
    GeoPoint,
    MachineClass,
    Registry,
    WorkType,
    format_rfc3339,
    load_registry,
    parse_rfc3339,
    registry_to_document,
)


class SimulationError(FieldlogError):
    pass


@dataclass(frozen=True)
class World:
    """Local tangent plane: meters east/north of a reference point."""

    ref_lat: float
    ref_lon: float

    def to_geo(self, x: float, y: float) -> GeoPoint:
        mx, my = meters_per_degree(self.ref_lat)
        return GeoPoint(lat=self.ref_lat + y / my, lon=self.ref_lon + x / mx)

    def to_xy(self, p: GeoPoint) -> tuple[float, float]:
        mx, my = meters_per_degree(self.ref_lat)
        return ((p.lon - self.ref_lon) * mx, (p.lat - self.ref_lat) * my)


def make_rect_field(
    world: World, field_id: str, name: str, x0: float, y0: float, w: float, h: float
) -> FieldPolygon:
    ring = tuple(
        world.to_geo(x, y)
        for x, y in [(x0, y0), (x0 + w, y0), (x0 + w, y0 + h), (x0, y0 + h)]
    )
    return FieldPolygon(id=field_id, name=name, ring=ring)


def _rect_from_ring(world: World, poly: FieldPolygon) -> tuple[float, float, float, float]:
    """Recover (x0, y0, w, h) of an axis-aligned rectangle field."""
    pts = [world.to_xy(p) for p in poly.ring]
    if len(pts) != 4:
        raise SimulationError("field_not_rectangular", f"{poly.id}: {len(pts)} vertices")
    xs = sorted(p[0] for p in pts)
    ys = sorted(p[1] for p in pts)
    x0, x1 = xs[0], xs[3]
    y0, y1 = ys[0], ys[3]
    corners = {(round(x, 3), round(y, 3)) for x, y in pts}
    want = {
        (round(x, 3), round(y, 3))
        for x in (x0, x1)
        for y in (y0, y1)
    }
    if corners != want or x1 - x0 <= 0 or y1 - y0 <= 0:
        raise SimulationError("field_not_rectangular", poly.id)
    return x0, y0, x1 - x0, y1 - y0


# ---------------------------------------------------------------------------
# boustrophedon work pattern

def _boustrophedon_polyline(
    x0: float, y0: float, w: float, h: float, swath_m: float
) -> list[tuple[float, float]]:
    """Parallel full-length passes along x, spaced to cover the height,
    joined by straight headland stubs on alternating ends."""
    n = max(1, round(h / swath_m))
    lane = h / n
    pts: list[tuple[float, float]] = []
    for i in range(n):
        y = y0 + (i + 0.5) * lane
        if i % 2 == 0:
            row = [(x0, y), (x0 + w, y)]
        else:
            row = [(x0 + w, y), (x0, y)]
        if i == 0:
            pts.extend(row)
        else:
            pts.append(row[0])  # headland stub from previous pass end
            pts.append(row[1])
    return pts


def _polyline_length(pts: Sequence[tuple[float, float]]) -> float:
    return sum(math.dist(a, b) for a, b in zip(pts, pts[1:]))


def boustrophedon_path(
    poly: FieldPolygon,
    swath_m: float,
    speed: float,
    sample_s: float,
    start: Optional[datetime] = None,
    machine_id: str = "sim",
) -> list[Fix]:
    """Fixes of a machine working a rectangular field in parallel passes.

    Raises field_not_rectangular for anything but an axis-alignable
    quadrilateral.
    """
    if swath_m <= 0 or speed <= 0 or sample_s <= 0:
        raise ValueError("swath_m, speed and sample_s must be positive")
    ref = poly.ring[0]
    world = World(ref_lat=ref.lat, ref_lon=ref.lon)
    x0, y0, w, h = _rect_from_ring(world, poly)
    pts = _boustrophedon_polyline(x0, y0, w, h, swath_m)
    total = _polyline_length(pts)
    t0 = start or datetime(2024, 4, 1, tzinfo=timezone.utc)

    fixes: list[Fix] = []
    k = 0
    while True:
        s = speed * k * sample_s
        if s > total:
            break
        x, y = _point_along(pts, s)
        fixes.append(
            Fix(
                machine_id=machine_id,
                t=datetime.fromtimestamp(t0.timestamp() + k * sample_s, tz=timezone.utc),
                pos=world.to_geo(x, y),
                speed=speed,
            )
        )
        k += 1
    return fixes


def _point_along(pts: Sequence[tuple[float, float]], s: float) -> tuple[float, float]:
    remaining = s
    for a, b in zip(pts, pts[1:]):
        seg = math.dist(a, b)
        if remaining <= seg:
            f = remaining / seg if seg > 0 else 0.0
            return (a[0] + (b[0] - a[0]) * f, a[1] + (b[1] - a[1]) * f)
        remaining -= seg
    return pts[-1]


# ---------------------------------------------------------------------------
# RSSI noise model

ATTACHED_RSSI = -60.0
STRAY_RSSI = -92.0
RSSI_SIGMA = 4.0
RSSI_DROPOUT = 0.05


def rssi_trace(
    attached: bool,
    duration_s: float,
    seed,
    cadence_s: float = 5.0,
    base: Optional[float] = None,
    sigma: float = RSSI_SIGMA,
    dropout: float = RSSI_DROPOUT,
) -> list[tuple[float, int]]:
    """Seeded (offset_s, rssi) samples for one beacon: Gaussian noise around
    the attached or nearby-stray baseline with a few samples dropped."""
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    level = base if base is not None else (ATTACHED_RSSI if attached else STRAY_RSSI)
    rng = random.Random(seed)
    out: list[tuple[float, int]] = []
    offset = 0.0
    while offset < duration_s:
        keep = rng.random() >= dropout
        value = rng.normalvariate(level, sigma)
        if keep:
            out.append((offset, max(-120, min(0, round(value)))))
        offset += cadence_s
    return out


# ---------------------------------------------------------------------------
# scenario definition

@dataclass(frozen=True)
class SimConfig:
    spv_sample_s: float = 1.0
    mpv_sample_s: float = 5.0
    transit_speed: float = 4.0
    cross_speed: float = 1.25  # slow cut across a neighboring paddy
    attached_rssi: float = ATTACHED_RSSI
    stray_rssi: float = STRAY_RSSI
    rssi_sigma: float = RSSI_SIGMA
    dropout: float = RSSI_DROPOUT


@dataclass(frozen=True)
class ScheduleEntry:
    machine_id: str
    field_id: str
    start: datetime
    speed: float  # work speed m/s
    implement_id: Optional[str] = None  # MPV only; None means bare tractor
    parks: tuple[tuple[float, float], ...] = ()  # (after_s of active work, duration_s)
    disruptions: tuple[tuple[float, float], ...] = ()  # leave the field and come back
    cross_field: Optional[str] = None  # cut through this field on the way in
    via: tuple[GeoPoint, ...] = ()  # explicit transit waypoints (replaces road routing)


@dataclass(frozen=True)
class TruthRecord:
    machine_id: str
    field_id: str
    work_type: WorkType
    implement_id: Optional[str]
    start: datetime
    end: datetime
    duration_s: float
    distance_m: float
    flags: frozenset[str]

    @property
    def id(self) -> str:
        return f"{self.machine_id}:{format_rfc3339(self.start)}"


@dataclass(frozen=True)
class Scenario:
    seed: int
    registry: Registry
    schedule: tuple[ScheduleEntry, ...]
    strays: dict[str, tuple[str, ...]] = field(default_factory=dict)  # machine -> beacon uids
    ref_lat: float = 34.95
    ref_lon: float = 136.88
    yard_xy: tuple[float, float] = (-200.0, -120.0)
    sim: SimConfig = SimConfig()

    @property
    def world(self) -> World:
        return World(ref_lat=self.ref_lat, ref_lon=self.ref_lon)


ROAD_Y = -30.0
GAP_OFFSET = 10.0  # lateral clearance when skirting a field edge
POWER_LEAD_S = 60.0
POWER_TAIL_S = 10.0


@dataclass
class _Seg:
    t0: float
    t1: float
    p0: tuple[float, float]
    p1: tuple[float, float]
    speed: float


class _Timeline:
    def __init__(self):
        self.segs: list[_Seg] = []

    @property
    def t_end(self) -> float:
        return self.segs[-1].t1 if self.segs else 0.0

    def wait(self, t0: float, duration: float, pos: Optional[tuple[float, float]] = None):
        if pos is None:
            pos = self.segs[-1].p1 if self.segs else (0.0, 0.0)
        if duration > 0:
            self.segs.append(_Seg(t0, t0 + duration, pos, pos, 0.0))

    def move(self, t0: float, p0, p1, speed: float) -> float:
        d = math.dist(p0, p1)
        if d == 0:
            return t0
        t1 = t0 + d / speed
        self.segs.append(_Seg(t0, t1, p0, p1, speed))
        return t1

    def sample(self, t: float) -> tuple[float, float, float]:
        """(x, y, speed) at time t."""
        starts = [s.t0 for s in self.segs]
        i = bisect_right(starts, t) - 1
        if i < 0:
            s = self.segs[0]
            return (*s.p0, 0.0)
        s = self.segs[i]
        if t >= s.t1:
            return (*s.p1, 0.0)
        f = (t - s.t0) / (s.t1 - s.t0)
        return (
            s.p0[0] + (s.p1[0] - s.p0[0]) * f,
            s.p0[1] + (s.p1[1] - s.p0[1]) * f,
            s.speed,
        )


@dataclass
class _EntryMeta:
    entry: ScheduleEntry
    transit_t0: float  # when the machine departed toward the field
    work_t0: float
    work_t1: float
    excursions: list[tuple[float, float]]
    had_park_stop: bool
    field_poly: FieldPolygon
    work_type: WorkType


def _route_via_road(cur: tuple[float, float], target: tuple[float, float],
                    rects: dict[str, tuple[float, float, float, float]],
                    cross: Optional[str], cfg: SimConfig) -> list[tuple[tuple[float, float], float]]:
    """Waypoint list (point, speed) from cur to target along the south road."""
    legs: list[tuple[tuple[float, float], float]] = []
    v = cfg.transit_speed
    if abs(cur[1] - ROAD_Y) > 1e-9:
        legs.append(((cur[0], ROAD_Y), v))
    if cross is not None:
        cx0, cy0, cw, ch = rects[cross]
        cyc = cy0 + ch / 2.0
        eastbound = cur[0] <= cx0
        x_in = cx0 if eastbound else cx0 + cw
        x_out = cx0 + cw if eastbound else cx0
        side_in = x_in - GAP_OFFSET if eastbound else x_in + GAP_OFFSET
        side_out = x_out + GAP_OFFSET if eastbound else x_out - GAP_OFFSET
        legs.append(((side_in, ROAD_Y), v))
        legs.append(((side_in, cyc), v))
        legs.append(((x_in, cyc), v))
        legs.append(((x_out, cyc), cfg.cross_speed))
        legs.append(((side_out, cyc), v))
        legs.append(((side_out, ROAD_Y), v))
    legs.append(((target[0] - GAP_OFFSET, ROAD_Y), v))
    legs.append(((target[0] - GAP_OFFSET, target[1]), v))
    legs.append((target, v))
    return legs


def _build_machine_timeline(
    scenario: Scenario,
    machine_id: str,
    entries: list[ScheduleEntry],
    rects: dict[str, tuple[float, float, float, float]],
) -> tuple[_Timeline, list[_EntryMeta], float, float]:
    world = scenario.world
    cfg = scenario.sim
    registry = scenario.registry
    timeline = _Timeline()
    metas: list[_EntryMeta] = []

    cur = scenario.yard_xy
    cur_t: Optional[float] = None

    for entry in sorted(entries, key=lambda e: e.start):
        poly = registry.field(entry.field_id)
        if poly is None:
            raise SimulationError("unknown_field", entry.field_id)
        x0, y0, w, h = rects[entry.field_id]
        work_pts = _boustrophedon_polyline(x0, y0, w, h, registry.params.swath_m)
        work_start_pos = work_pts[0]

        if entry.via:
            waypoints = [(world.to_xy(p), cfg.transit_speed) for p in entry.via]
            waypoints.append((work_start_pos, cfg.transit_speed))
        else:
            waypoints = _route_via_road(cur, work_start_pos, rects, entry.cross_field, cfg)

        transit_s = 0.0
        prev = cur
        for point, speed in waypoints:
            transit_s += math.dist(prev, point) / speed
            prev = point

        t_start = entry.start.timestamp()
        depart = t_start - transit_s
        if cur_t is None:
            cur_t = depart - POWER_LEAD_S
            power_on = cur_t
        if depart < cur_t - 1e-9:
            raise SimulationError(
                "schedule_overlap",
                f"{machine_id}: entry at {entry.start.isoformat()} leaves no time for transit",
            )
        timeline.wait(cur_t, depart - cur_t, pos=cur)
        t = depart
        prev = cur
        for point, speed in waypoints:
            t = timeline.move(t, prev, point, speed)
            prev = point
        cur = prev

        # work phase: walk the passes, weaving in parks and excursions
        events = sorted(
            [(after, dur, "park") for after, dur in entry.parks]
            + [(after, dur, "excursion") for after, dur in entry.disruptions]
        )
        total_len = _polyline_length(work_pts)
        for after, dur, kind in events:
            if not 0 < after * entry.speed < total_len:
                raise SimulationError("bad_event", f"{machine_id}: event outside the work path")

        excursions: list[tuple[float, float]] = []
        had_park_stop = False
        walked = 0.0  # active (moving) work seconds so far
        pos = work_start_pos
        work_t0 = t
        for after, dur, kind in events:
            t, pos = _walk_work(timeline, t, work_pts, pos, walked, after, entry.speed)
            walked = after
            if kind == "park":
                timeline.wait(t, dur)
                t += dur
                if dur >= registry.params.t_park:
                    had_park_stop = True
            else:
                out_point = (pos[0], y0 - GAP_OFFSET - 20.0)
                leg_s = math.dist(pos, out_point) / cfg.transit_speed
                if 2 * leg_s >= dur:
                    raise SimulationError("bad_event", "excursion too short to leave the field")
                exc_start = t
                t = timeline.move(t, pos, out_point, cfg.transit_speed)
                timeline.wait(t, dur - 2 * leg_s)
                t += dur - 2 * leg_s
                t = timeline.move(t, out_point, pos, cfg.transit_speed)
                excursions.append((exc_start, t))
        active_total = total_len / entry.speed
        t, pos = _walk_work(timeline, t, work_pts, pos, walked, active_total, entry.speed)
        work_t1 = t
        cur = pos

        # leave through the nearest side gap, then down to the road
        side = x0 - GAP_OFFSET if abs(pos[0] - x0) < abs(pos[0] - (x0 + w)) else x0 + w + GAP_OFFSET
        t = timeline.move(t, cur, (side, pos[1]), cfg.transit_speed)
        t = timeline.move(t, (side, pos[1]), (side, ROAD_Y), cfg.transit_speed)
        cur = (side, ROAD_Y)
        cur_t = t

        if entry.implement_id is not None:
            implement = registry.implement(entry.implement_id)
            if implement is None:
                raise SimulationError("unknown_implement", entry.implement_id)
            work_type = implement.work_type
        else:
            machine = registry.machine(machine_id)
            work_type = machine.spv_work_type if machine.cls is MachineClass.SPV else WorkType.UNKNOWN

        metas.append(
            _EntryMeta(
                entry=entry,
                transit_t0=depart,
                work_t0=work_t0,
                work_t1=work_t1,
                excursions=excursions,
                had_park_stop=had_park_stop,
                field_poly=poly,
                work_type=work_type,
            )
        )

    timeline.wait(cur_t, POWER_TAIL_S)
    return timeline, metas, power_on, timeline.t_end


def _walk_work(
    timeline: _Timeline,
    t: float,
    pts: Sequence[tuple[float, float]],
    pos: tuple[float, float],
    from_active_s: float,
    to_active_s: float,
    speed: float,
) -> tuple[float, tuple[float, float]]:
    """Advance along the work polyline from one active-time offset to another."""
    s_from = from_active_s * speed
    s_to = to_active_s * speed
    # corner points strictly between the two offsets
    acc = 0.0
    targets: list[tuple[float, float]] = []
    for a, b in zip(pts, pts[1:]):
        seg = math.dist(a, b)
        if acc + seg > s_from + 1e-9 and acc < s_to - 1e-9:
            end_s = min(acc + seg, s_to)
            targets.append(_point_along(pts, end_s))
        acc += seg
        if acc >= s_to:
            break
    for target in targets:
        t = timeline.move(t, pos, target, speed)
        pos = target
    return t, pos


# ---------------------------------------------------------------------------
# emission

def emit_scenario(scenario: Scenario) -> tuple[list[str], list[TruthRecord]]:
    """Render a scenario to wire-format lines plus its truth records.

    Lines are interleaved in (timestamp, machine) order. Truth start/end
    are the first/last in-field fixes of each work phase, so a correct
    pipeline matches them exactly.
    """
    registry = scenario.registry
    world = scenario.world
    cfg = scenario.sim
    rects = {f.id: _rect_from_ring(world, f) for f in registry.fields}

    by_machine: dict[str, list[ScheduleEntry]] = {}
    for entry in scenario.schedule:
        machine = registry.machine(entry.machine_id)
        if machine is None:
            raise SimulationError("unknown_machine", entry.machine_id)
        if machine.cls is MachineClass.SPV and entry.implement_id is not None:
            raise SimulationError("bad_schedule", f"SPV {machine.id} cannot carry an implement")
        by_machine.setdefault(entry.machine_id, []).append(entry)

    lines: list[tuple[float, str, str]] = []
    truth: list[TruthRecord] = []

    for machine_id in sorted(by_machine):
        machine = registry.machine(machine_id)
        entries = by_machine[machine_id]
        timeline, metas, power_on, power_off = _build_machine_timeline(
            scenario, machine_id, entries, rects
        )
        cadence = cfg.spv_sample_s if machine.cls is MachineClass.SPV else cfg.mpv_sample_s

        # beacon visibility windows: the hitched implement from transit
        # departure through work end, strays whenever the gateway is powered
        windows: list[tuple[str, float, float, float]] = []  # uid, t0, t1, base rssi
        if machine.cls is MachineClass.MPV:
            for meta in metas:
                if meta.entry.implement_id is not None:
                    implement = registry.implement(meta.entry.implement_id)
                    # hitched before driving out, dropped right after finishing
                    windows.append(
                        (implement.beacon_uid, meta.transit_t0, meta.work_t1, cfg.attached_rssi)
                    )
            for uid in scenario.strays.get(machine_id, ()):
                windows.append((uid, power_on, power_off, cfg.stray_rssi))

        rngs = {
            uid: random.Random(f"{scenario.seed}/{machine_id}/{uid}")
            for uid, *_ in windows
        }

        entry_fixes: dict[int, list[GeoPoint]] = {i: [] for i in range(len(metas))}
        entry_span: dict[int, list[float]] = {}
        entry_active: dict[int, list[tuple[float, bool]]] = {i: [] for i in range(len(metas))}

        t = math.ceil(power_on)
        while t <= power_off:
            x, y, speed = timeline.sample(float(t))
            pos = world.to_geo(x, y)
            observations = []
            for uid, w0, w1, base in windows:
                if w0 <= t <= w1:
                    rng = rngs[uid]
                    keep = rng.random() >= cfg.dropout
                    value = rng.normalvariate(base, cfg.rssi_sigma)
                    if keep:
                        observations.append(
                            BleObservation(beacon_uid=uid, rssi=max(-120, min(0, round(value))))
                        )
            fix = Fix(
                machine_id=machine_id,
                t=datetime.fromtimestamp(float(t), tz=timezone.utc),
                pos=pos,
                speed=speed,
            )
            lines.append((float(t), machine_id, serialize_report(
                GatewayReport(fix=fix, observations=tuple(observations))
            )))

            for i, meta in enumerate(metas):
                if meta.work_t0 <= t <= meta.work_t1 and point_in_polygon(pos, meta.field_poly.ring):
                    entry_fixes[i].append(pos)
                    span = entry_span.setdefault(i, [float(t), float(t)])
                    span[1] = float(t)
                    entry_active[i].append((float(t), speed >= registry.params.v_park))
            t += cadence

        for i, meta in enumerate(metas):
            if i not in entry_span:
                continue
            pts = entry_fixes[i]
            distance = sum(haversine_m(a, b) for a, b in zip(pts, pts[1:]))
            duration = _active_duration(entry_active[i], cadence)
            flags = set()
            if meta.had_park_stop:
                flags.update(("had_stop", "merged"))
            if meta.excursions:
                flags.add("merged")
            if machine.cls is MachineClass.MPV and meta.entry.implement_id is None:
                flags.add("worktype_unknown")
            truth.append(
                TruthRecord(
                    machine_id=machine_id,
                    field_id=meta.entry.field_id,
                    work_type=meta.work_type,
                    implement_id=meta.entry.implement_id,
                    start=datetime.fromtimestamp(entry_span[i][0], tz=timezone.utc),
                    end=datetime.fromtimestamp(entry_span[i][1], tz=timezone.utc),
                    duration_s=duration,
                    distance_m=distance,
                    flags=frozenset(flags),
                )
            )

    lines.sort(key=lambda item: (item[0], item[1]))
    truth.sort(key=lambda r: (r.start, r.machine_id))
    return [line for _, _, line in lines], truth


def _active_duration(samples: list[tuple[float, bool]], cadence: float) -> float:
    """Sum of moving spans, breaking at still fixes and at time gaps."""
    total = 0.0
    span_start: Optional[float] = None
    prev_t: Optional[float] = None
    for t, moving in samples:
        gap = prev_t is not None and t - prev_t > cadence * 1.5
        if not moving or gap:
            if span_start is not None and prev_t is not None:
                total += prev_t - span_start
            span_start = t if moving else None
        elif span_start is None:
            span_start = t
        prev_t = t
    if span_start is not None and prev_t is not None:
        total += prev_t - span_start
    return total


# ---------------------------------------------------------------------------
# scenario (de)serialization

def scenario_to_document(scenario: Scenario) -> dict:
    return {
        "seed": scenario.seed,
        "ref": [scenario.ref_lon, scenario.ref_lat],
        "yard": list(scenario.yard_xy),
        "sim": {
            "spv_sample_s": scenario.sim.spv_sample_s,
            "mpv_sample_s": scenario.sim.mpv_sample_s,
            "transit_speed": scenario.sim.transit_speed,
            "cross_speed": scenario.sim.cross_speed,
            "attached_rssi": scenario.sim.attached_rssi,
            "stray_rssi": scenario.sim.stray_rssi,
            "rssi_sigma": scenario.sim.rssi_sigma,
            "dropout": scenario.sim.dropout,
        },
        "registry": registry_to_document(scenario.registry),
        "strays": {m: list(uids) for m, uids in scenario.strays.items()},
        "schedule": [
            {
                "machine": e.machine_id,
                "field": e.field_id,
                "start": format_rfc3339(e.start),
                "speed": e.speed,
                **({"implement": e.implement_id} if e.implement_id else {}),
                **({"parks": [list(p) for p in e.parks]} if e.parks else {}),
                **({"disruptions": [list(d) for d in e.disruptions]} if e.disruptions else {}),
                **({"cross_field": e.cross_field} if e.cross_field else {}),
                **({"via": [[p.lon, p.lat] for p in e.via]} if e.via else {}),
            }
            for e in scenario.schedule
        ],
    }


def scenario_from_document(doc: dict) -> Scenario:
    registry = load_registry(doc["registry"])
    ref = doc.get("ref", [136.88, 34.95])
    entries = []
    for raw in doc.get("schedule", []):
        entries.append(
            ScheduleEntry(
                machine_id=raw["machine"],
                field_id=raw["field"],
                start=parse_rfc3339(raw["start"]),
                speed=float(raw["speed"]),
                implement_id=raw.get("implement"),
                parks=tuple((float(a), float(d)) for a, d in raw.get("parks", [])),
                disruptions=tuple((float(a), float(d)) for a, d in raw.get("disruptions", [])),
                cross_field=raw.get("cross_field"),
                via=tuple(GeoPoint(lat=lat, lon=lon) for lon, lat in raw.get("via", [])),
            )
        )
    return Scenario(
        seed=int(doc.get("seed", 0)),
        registry=registry,
        schedule=tuple(entries),
        strays={m: tuple(uids) for m, uids in doc.get("strays", {}).items()},
        ref_lat=float(ref[1]),
        ref_lon=float(ref[0]),
        yard_xy=tuple(doc.get("yard", (-200.0, -120.0))),
        sim=SimConfig(**doc.get("sim", {})),
    )


def truth_to_csv(truth: Sequence[TruthRecord]) -> str:
    import csv as _csv
    import io as _io

    buf = _io.StringIO()
    writer = _csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["id", "machine", "field", "work_type", "implement",
         "start", "end", "duration_s", "distance_m", "flags"]
    )
    for rec in truth:
        writer.writerow(
            [
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
        )
    return buf.getvalue()
