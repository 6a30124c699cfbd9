"""Raw telemetry parsing: NMEA 0183 sentences and gateway report lines.

All parsers are pure and reentrant. Stream validation is stateful per
machine; never share one validator across machine streams.

Wire format (one UTF-8 JSON object per line):
    {"v":1,"machine":"tr-01","t":"2024-04-01T02:15:30Z","lat":34.95,"lon":136.89,
     "spd":1.2,"hdg":90.0,"hdop":0.8,"ble":[{"uid":"B-07","rssi":-72}]}
`v` must be 1; `spd`, `hdg`, `hdop` and `ble` are optional.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional

from .geo import haversine_m
from .model import (
    MAX_SPEED_MS,
    RSSI_MAX,
    RSSI_MIN,
    BleObservation,
    FieldlogError,
    Fix,
    GatewayReport,
    GeoPoint,
    format_rfc3339,
    parse_rfc3339,
)

MAX_LINE_BYTES = 4096

KNOTS_TO_MS = 0.514444


class ParseError(FieldlogError):
    pass


@dataclass(frozen=True)
class RawLine:
    """One raw telemetry line as received, tagged with its source unit."""

    source_machine_id: str
    payload: bytes  # one line, no trailing newline, <= MAX_LINE_BYTES

    def text(self) -> str:
        if len(self.payload) > MAX_LINE_BYTES:
            raise ParseError("schema_violation", "line too long")
        return self.payload.decode("utf-8", errors="strict")


def parse_raw_line(raw: RawLine) -> GatewayReport:
    """Dispatch a raw line by format: NMEA sentences ('$...') come from SPV
    units and take their machine id from the envelope; JSON lines carry it
    inline."""
    text = raw.text().strip()
    if text.startswith("$"):
        fix = parse_nmea_rmc(text, machine_id=raw.source_machine_id)
        return GatewayReport(fix=fix)
    return parse_gateway_report(text)


# ---------------------------------------------------------------------------
# NMEA 0183

def nmea_checksum(payload: str) -> int:
    """XOR of all payload bytes (the text between '$' and '*')."""
    cs = 0
    for b in payload.encode("ascii"):
        cs ^= b
    return cs


def _sexagesimal_to_degrees(raw: str, hemi: str, width: int) -> float:
    if len(raw) <= width:
        raise ParseError("malformed_field", f"coordinate {raw!r}")
    try:
        deg = int(raw[:width])
        minutes = float(raw[width:])
    except ValueError:
        raise ParseError("malformed_field", f"coordinate {raw!r}") from None
    value = deg + minutes / 60.0
    if hemi in ("S", "W"):
        value = -value
    elif hemi not in ("N", "E"):
        raise ParseError("malformed_field", f"hemisphere {hemi!r}")
    return value


def parse_nmea_rmc(sentence: str, machine_id: str = "") -> Fix:
    """Parse one $..RMC sentence into a Fix (caller supplies the machine id).

    Raises ParseError with code checksum_mismatch, malformed_field, void_fix,
    or unsupported_sentence_type (callers skip the latter, it is not fatal).
    """
    line = sentence.strip()
    if not line.startswith("$") or "*" not in line:
        raise ParseError("malformed_field", "missing frame characters")
    body, _, cs_text = line[1:].partition("*")
    if "$" in body or "*" in body:
        raise ParseError("malformed_field", "stray frame character in payload")
    try:
        want = int(cs_text[:2], 16)
    except ValueError:
        raise ParseError("malformed_field", f"checksum {cs_text!r}") from None
    if nmea_checksum(body) != want:
        raise ParseError("checksum_mismatch", line)

    parts = body.split(",")
    if not parts[0].endswith("RMC"):
        raise ParseError("unsupported_sentence_type", parts[0])
    if len(parts) < 10:
        raise ParseError("malformed_field", "too few RMC fields")

    hhmmss, status, lat_raw, ns, lon_raw, ew, sog, cog, ddmmyy = parts[1:10]
    if status == "V":
        raise ParseError("void_fix", line)
    if status != "A":
        raise ParseError("malformed_field", f"status {status!r}")

    try:
        day = int(ddmmyy[0:2])
        month = int(ddmmyy[2:4])
        yy = int(ddmmyy[4:6])
        year = 2000 + yy if yy < 70 else 1900 + yy
        hour = int(hhmmss[0:2])
        minute = int(hhmmss[2:4])
        sec = float(hhmmss[4:])
    except (ValueError, IndexError):
        raise ParseError("malformed_field", f"date/time {ddmmyy!r} {hhmmss!r}") from None
    whole = int(sec)
    t = parse_rfc3339(
        f"{year:04d}-{month:02d}-{day:02d}T{hour:02d}:{minute:02d}:{whole:02d}"
        f".{int(round((sec - whole) * 1000)):03d}Z"
    )

    pos = GeoPoint(
        lat=_sexagesimal_to_degrees(lat_raw, ns, 2),
        lon=_sexagesimal_to_degrees(lon_raw, ew, 3),
    )
    if not pos.valid():
        raise ParseError("malformed_field", "coordinate out of range")

    speed = None
    if sog:
        try:
            speed = float(sog) * KNOTS_TO_MS
        except ValueError:
            raise ParseError("malformed_field", f"speed {sog!r}") from None
    heading = None
    if cog:
        try:
            heading = float(cog) % 360.0
        except ValueError:
            raise ParseError("malformed_field", f"heading {cog!r}") from None

    return Fix(machine_id=machine_id, t=t, pos=pos, speed=speed, heading=heading)


def fixes_from_nmea(machine_id: str, lines: Iterable[str]) -> tuple[list[Fix], Counter]:
    """Parse an SPV unit's sentence stream; skipped lines are counted by reason."""
    fixes: list[Fix] = []
    skipped: Counter = Counter()
    for line in lines:
        if not line.strip():
            continue
        try:
            fixes.append(parse_nmea_rmc(line, machine_id))
        except ParseError as e:
            skipped[e.code] += 1
    return fixes, skipped


# ---------------------------------------------------------------------------
# gateway wire format

def parse_gateway_report(line: str) -> GatewayReport:
    """Parse one wire-format line; duplicate beacon UIDs collapse to the strongest RSSI."""
    raw = line.strip()
    if len(raw.encode("utf-8")) > MAX_LINE_BYTES:
        raise ParseError("schema_violation", "line too long")
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ParseError("schema_violation", f"bad json: {e}") from None
    if not isinstance(obj, dict):
        raise ParseError("schema_violation", "line is not an object")
    if obj.get("v") != 1:
        raise ParseError("schema_violation", f"unsupported version {obj.get('v')!r}")

    try:
        machine = str(obj["machine"])
        t = parse_rfc3339(str(obj["t"]))
        lat = float(obj["lat"])
        lon = float(obj["lon"])
    except KeyError as e:
        raise ParseError("schema_violation", f"missing field {e.args[0]}") from None
    except (TypeError, ValueError) as e:
        raise ParseError("schema_violation", str(e)) from None
    if not machine:
        raise ParseError("schema_violation", "empty machine id")

    pos = GeoPoint(lat=lat, lon=lon)
    if not pos.valid():
        raise ParseError("coordinate_out_of_range", f"{lat},{lon}")

    def opt_float(key: str, lo: float, hi: float) -> Optional[float]:
        if key not in obj or obj[key] is None:
            return None
        try:
            val = float(obj[key])
        except (TypeError, ValueError):
            raise ParseError("schema_violation", f"bad {key}") from None
        if not lo <= val <= hi:
            raise ParseError("schema_violation", f"{key} out of range: {val}")
        return val

    speed = opt_float("spd", 0.0, 1000.0)
    heading = opt_float("hdg", 0.0, 360.0)
    hdop = opt_float("hdop", 0.0, 100.0)

    best: dict[str, int] = {}
    order: list[str] = []
    for item in obj.get("ble", []):
        if not isinstance(item, dict) or "uid" not in item or "rssi" not in item:
            raise ParseError("schema_violation", f"bad ble entry {item!r}")
        uid = str(item["uid"])
        if not uid:
            raise ParseError("schema_violation", "empty beacon uid")
        try:
            rssi = int(item["rssi"])
        except (TypeError, ValueError):
            raise ParseError("schema_violation", f"bad rssi {item['rssi']!r}") from None
        if not RSSI_MIN <= rssi <= RSSI_MAX:
            raise ParseError("rssi_out_of_range", f"{uid}: {rssi}")
        if uid not in best:
            order.append(uid)
            best[uid] = rssi
        else:
            best[uid] = max(best[uid], rssi)

    fix = Fix(machine_id=machine, t=t, pos=pos, speed=speed, heading=heading, hdop=hdop)
    return GatewayReport(fix=fix, observations=tuple(
        BleObservation(beacon_uid=u, rssi=best[u]) for u in order
    ))


def serialize_report(report: GatewayReport) -> str:
    """Canonical wire line for a report; parse(serialize(r)) == r."""
    fix = report.fix
    obj: dict = {
        "v": 1,
        "machine": fix.machine_id,
        "t": format_rfc3339(fix.t),
        "lat": fix.pos.lat,
        "lon": fix.pos.lon,
    }
    if fix.speed is not None:
        obj["spd"] = fix.speed
    if fix.heading is not None:
        obj["hdg"] = fix.heading
    if fix.hdop is not None:
        obj["hdop"] = fix.hdop
    obj["ble"] = [{"uid": o.beacon_uid, "rssi": o.rssi} for o in report.observations]
    return json.dumps(obj, separators=(",", ":"))


def read_telemetry(lines: Iterable[str]) -> tuple[list[GatewayReport], Counter]:
    """Parse a whole telemetry stream; bad lines are counted, never fatal."""
    reports: list[GatewayReport] = []
    skipped: Counter = Counter()
    for line in lines:
        if not line.strip():
            continue
        try:
            reports.append(parse_gateway_report(line))
        except ParseError as e:
            skipped[e.code] += 1
    return reports, skipped


# ---------------------------------------------------------------------------
# stream validation

MAX_HDOP = 5.0


def validate_stream(fixes: Iterable[Fix]) -> tuple[list[Fix], Counter]:
    """Drop junk fixes from one machine's stream (lossy filter, never fatal).

    Drops non-monotone timestamps, hdop > 5, reported speed at or above the
    farm-machinery bound, and fixes whose implied speed from the previous
    kept fix exceeds it. Output is always strictly time-monotone. Returns
    the kept fixes plus a per-reason drop counter.
    """
    kept: list[Fix] = []
    drops: Counter = Counter()
    for fix in fixes:
        if kept and fix.t <= kept[-1].t:
            drops["non_monotone"] += 1
            continue
        if fix.hdop is not None and fix.hdop > MAX_HDOP:
            drops["high_hdop"] += 1
            continue
        if fix.speed is not None and fix.speed >= MAX_SPEED_MS:
            drops["overspeed"] += 1
            continue
        if kept:
            dt = (fix.t - kept[-1].t).total_seconds()
            if haversine_m(kept[-1].pos, fix.pos) / dt > MAX_SPEED_MS:
                drops["implied_speed"] += 1
                continue
        kept.append(fix)
    return kept, drops
