import random
import string

import pytest

from fieldlog.ingest import (
    ParseError,
    fixes_from_nmea,
    nmea_checksum,
    parse_gateway_report,
    parse_nmea_rmc,
    read_telemetry,
    serialize_report,
    validate_stream,
)
from fieldlog.model import BleObservation, Fix, GatewayReport, GeoPoint, utc
from oracles import xor_checksum

CANONICAL_RMC = "$GPRMC,123519,A,4807.038,N,01131.000,E,022.4,084.4,230394,003.1,W*6A"
CANONICAL_PAYLOAD = CANONICAL_RMC[1:-3]


# ---------------------------------------------------------------------------
# checksum

def test_checksum_trivial_cases():
    assert nmea_checksum("") == 0x00
    assert nmea_checksum("A") == 0x41


def test_checksum_canonical_sentence():
    assert nmea_checksum(CANONICAL_PAYLOAD) == 0x6A


def test_checksum_agrees_with_xor_oracle_on_1000_random_payloads():
    rng = random.Random(1)
    alphabet = string.ascii_uppercase + string.digits + ",."
    for _ in range(1000):
        payload = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 80)))
        assert nmea_checksum(payload) == xor_checksum(payload)


# ---------------------------------------------------------------------------
# RMC parsing

def test_parse_canonical_rmc():
    fix = parse_nmea_rmc(CANONICAL_RMC, machine_id="sp-01")
    assert fix.machine_id == "sp-01"
    assert fix.pos.lat == pytest.approx(48.117300, abs=1e-6)
    assert fix.pos.lon == pytest.approx(11.516667, abs=1e-6)
    assert fix.speed == pytest.approx(11.524, abs=0.001)
    assert fix.heading == pytest.approx(84.4)
    assert fix.t == utc(1994, 3, 23, 12, 35, 19)


def test_rmc_checksum_mismatch():
    bad = CANONICAL_RMC[:-2] + "6B"
    with pytest.raises(ParseError) as err:
        parse_nmea_rmc(bad)
    assert err.value.code == "checksum_mismatch"


def test_rmc_void_status():
    payload = "GPRMC,123519,V,4807.038,N,01131.000,E,022.4,084.4,230394,003.1,W"
    sentence = f"${payload}*{nmea_checksum(payload):02X}"
    with pytest.raises(ParseError) as err:
        parse_nmea_rmc(sentence)
    assert err.value.code == "void_fix"


def test_non_rmc_sentence_is_unsupported_not_fatal():
    payload = "GPGGA,123519,4807.038,N,01131.000,E,1,08,0.9,545.4,M,46.9,M,,"
    sentence = f"${payload}*{nmea_checksum(payload):02X}"
    with pytest.raises(ParseError) as err:
        parse_nmea_rmc(sentence)
    assert err.value.code == "unsupported_sentence_type"


def test_rmc_southern_western_hemispheres():
    payload = "GPRMC,000130,A,3723.246,S,14507.362,W,000.0,360.0,010124,,"
    sentence = f"${payload}*{nmea_checksum(payload):02X}"
    fix = parse_nmea_rmc(sentence)
    assert fix.pos.lat == pytest.approx(-(37 + 23.246 / 60), abs=1e-6)
    assert fix.pos.lon == pytest.approx(-(145 + 7.362 / 60), abs=1e-6)
    assert fix.t == utc(2024, 1, 1, 0, 1, 30)


def test_fixes_from_nmea_skips_and_counts():
    lines = [
        CANONICAL_RMC,
        "$GPGGA,123519,4807.038,N,01131.000,E,1,08,0.9,545.4,M,46.9,M,,*47",
        "garbage",
        CANONICAL_RMC[:-2] + "00",
    ]
    fixes, skipped = fixes_from_nmea("sp-01", lines)
    assert len(fixes) == 1
    assert skipped["malformed_field"] >= 1
    assert skipped["checksum_mismatch"] == 1


# ---------------------------------------------------------------------------
# gateway wire format

GOOD_LINE = (
    '{"v":1,"machine":"tr-01","t":"2024-04-01T02:15:30Z",'
    '"lat":34.95123,"lon":136.89012,"spd":1.2,"ble":[{"uid":"B-07","rssi":-72}]}'
)


def test_parse_gateway_report_single_observation():
    report = parse_gateway_report(GOOD_LINE)
    assert report.fix.machine_id == "tr-01"
    assert report.fix.t == utc(2024, 4, 1, 2, 15, 30)
    assert report.fix.pos == GeoPoint(lat=34.95123, lon=136.89012)
    assert report.fix.speed == 1.2
    assert report.observations == (BleObservation(beacon_uid="B-07", rssi=-72),)


def test_parse_gateway_report_empty_ble_is_spv_style():
    report = parse_gateway_report(GOOD_LINE.replace('[{"uid":"B-07","rssi":-72}]', "[]"))
    assert report.observations == ()


def test_parse_gateway_report_rssi_out_of_range():
    with pytest.raises(ParseError) as err:
        parse_gateway_report(GOOD_LINE.replace('"rssi":-72', '"rssi":5'))
    assert err.value.code == "rssi_out_of_range"


def test_parse_gateway_report_coordinate_out_of_range():
    with pytest.raises(ParseError) as err:
        parse_gateway_report(GOOD_LINE.replace('"lat":34.95123', '"lat":91.0'))
    assert err.value.code == "coordinate_out_of_range"


def test_parse_gateway_report_requires_version_1():
    with pytest.raises(ParseError) as err:
        parse_gateway_report(GOOD_LINE.replace('"v":1', '"v":2'))
    assert err.value.code == "schema_violation"


def test_duplicate_beacons_collapse_to_strongest():
    line = GOOD_LINE.replace(
        '[{"uid":"B-07","rssi":-72}]',
        '[{"uid":"B-07","rssi":-80},{"uid":"B-07","rssi":-70},{"uid":"B-08","rssi":-90}]',
    )
    report = parse_gateway_report(line)
    assert report.observations == (
        BleObservation(beacon_uid="B-07", rssi=-70),
        BleObservation(beacon_uid="B-08", rssi=-90),
    )


def random_report(rng: random.Random) -> GatewayReport:
    n_obs = rng.randint(0, 4)
    uids = rng.sample([f"B-{i:02d}" for i in range(1, 30)], n_obs)
    return GatewayReport(
        fix=Fix(
            machine_id=rng.choice(["tr-01", "tr-02", "sp-01"]),
            t=utc(2024, 4, 1, rng.randint(0, 23), rng.randint(0, 59),
                  rng.randint(0, 59), rng.randint(0, 999)),
            pos=GeoPoint(lat=rng.uniform(-85, 85), lon=rng.uniform(-179, 179)),
            speed=rng.choice([None, rng.uniform(0, 25)]),
            heading=rng.choice([None, rng.uniform(0, 360)]),
            hdop=rng.choice([None, rng.uniform(0, 9)]),
        ),
        observations=tuple(
            BleObservation(beacon_uid=uid, rssi=rng.randint(-120, 0)) for uid in uids
        ),
    )


def test_1000_wire_format_round_trips_are_byte_stable():
    rng = random.Random(42)
    for _ in range(1000):
        report = random_report(rng)
        line = serialize_report(report)
        parsed = parse_gateway_report(line)
        assert parsed == report
        assert serialize_report(parsed) == line


def test_raw_line_dispatch():
    from fieldlog.ingest import RawLine, parse_raw_line

    nmea = parse_raw_line(RawLine("sp-01", CANONICAL_RMC.encode()))
    assert nmea.fix.machine_id == "sp-01"
    assert nmea.observations == ()
    gateway = parse_raw_line(RawLine("ignored", GOOD_LINE.encode()))
    assert gateway.fix.machine_id == "tr-01"
    with pytest.raises(ParseError) as err:
        parse_raw_line(RawLine("sp-01", b"$" + b"x" * 5000))
    assert err.value.code == "schema_violation"


def test_read_telemetry_counts_bad_lines():
    lines = [GOOD_LINE, "", "not json", GOOD_LINE.replace('"rssi":-72', '"rssi":7')]
    reports, skipped = read_telemetry(lines)
    assert len(reports) == 1
    assert skipped["schema_violation"] == 1
    assert skipped["rssi_out_of_range"] == 1


# ---------------------------------------------------------------------------
# stream validation

def make_fix(t_s: int, lat=34.95, lon=136.88, speed=1.0, hdop=None) -> Fix:
    return Fix(machine_id="m", t=utc(2024, 4, 1, 0, t_s // 60, t_s % 60),
               pos=GeoPoint(lat=lat, lon=lon), speed=speed, hdop=hdop)


def test_validate_stream_keeps_clean_monotone_stream():
    fixes = [make_fix(i) for i in range(100)]
    kept, drops = validate_stream(fixes)
    assert len(kept) == 100
    assert not drops


def test_validate_stream_drops_repeated_timestamp():
    fixes = [make_fix(0), make_fix(0)] + [make_fix(i) for i in range(1, 99)]
    kept, drops = validate_stream(fixes)
    assert len(kept) == 99
    assert drops["non_monotone"] == 1


def test_validate_stream_drops_teleport():
    # 500 m in 1 s is 500 m/s: far beyond anything a tractor does
    a = make_fix(0)
    b = make_fix(1, lat=34.95 + 500 / 111_195)
    kept, drops = validate_stream([a, b])
    assert kept == [a]
    assert drops["implied_speed"] == 1


def test_validate_stream_drops_bad_hdop_and_overspeed():
    fixes = [make_fix(0), make_fix(1, hdop=9.0), make_fix(2, speed=35.0), make_fix(3)]
    kept, drops = validate_stream(fixes)
    assert [f.t.second for f in kept] == [0, 3]
    assert drops["high_hdop"] == 1 and drops["overspeed"] == 1


def test_validate_stream_output_always_monotone():
    rng = random.Random(3)
    times = [rng.randint(0, 500) for _ in range(300)]
    fixes = [make_fix(t) for t in times]
    kept, _ = validate_stream(fixes)
    assert all(a.t < b.t for a, b in zip(kept, kept[1:]))
