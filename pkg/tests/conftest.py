"""Shared scenario builders for the test suite."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make tests/oracles.py importable

from fieldlog.model import GeoPoint, load_registry, utc
from fieldlog.simulator import Scenario, ScheduleEntry, World, make_rect_field

WORLD = World(ref_lat=34.95, ref_lon=136.88)

# five 100 m x 50 m paddies in a row, 20 m gaps, road strip to the south
FIELD_RECTS = {
    "F1": (0.0, 0.0, 100.0, 50.0),
    "F2": (120.0, 0.0, 100.0, 50.0),
    "F3": (240.0, 0.0, 100.0, 50.0),
    "F4": (360.0, 0.0, 100.0, 50.0),
    "F5": (480.0, 0.0, 100.0, 50.0),
}

IMPLEMENT_TYPES = [
    "rotary_tilling", "plowing", "harrowing", "seeding", "grass_cutting",
    "plowing", "harrowing", "seeding", "grass_cutting", "rotary_tilling",
    "plowing", "seeding", "grass_cutting", "harrowing", "rotary_tilling",
    "seeding", "plowing",
]


def field_ring(field_id: str) -> list[list[float]]:
    x0, y0, w, h = FIELD_RECTS[field_id]
    poly = make_rect_field(WORLD, field_id, field_id, x0, y0, w, h)
    return [[p.lon, p.lat] for p in poly.ring]


def registry_document() -> dict:
    """3 machines (1 SPV planter, 2 MPV tractors), 17 implements, 5 fields."""
    return {
        "machines": [
            {"id": "sp-01", "name": "Planter 1", "class": "spv", "work_type": "planting"},
            {"id": "tr-01", "name": "Tractor 1", "class": "mpv"},
            {"id": "tr-02", "name": "Tractor 2", "class": "mpv"},
        ],
        "implements": [
            {
                "id": f"im-{i+1:02d}",
                "name": f"Implement {i+1}",
                "beacon_uid": f"B-{i+1:02d}",
                "work_type": IMPLEMENT_TYPES[i],
            }
            for i in range(17)
        ],
        "fields": [
            {"id": fid, "name": f"Paddy {fid}", "ring": field_ring(fid)}
            for fid in FIELD_RECTS
        ],
    }


def build_acceptance_scenario(seed: int = 2024) -> Scenario:
    """The canonical end-to-end scenario: 12 work entries across 3 machines,
    with parks, a mid-work disruption, and adjacent-field crossings injected."""
    registry = load_registry(registry_document())
    day = lambda h, m: utc(2024, 4, 1, h, m)  # noqa: E731
    schedule = (
        # SPV planter, 1 Hz reporting
        ScheduleEntry("sp-01", "F1", day(0, 0), 1.5),
        ScheduleEntry("sp-01", "F2", day(0, 30), 1.5, parks=((300.0, 240.0),)),
        ScheduleEntry("sp-01", "F3", day(1, 0), 1.5),
        ScheduleEntry("sp-01", "F4", day(1, 30), 1.5),
        # tractor 1: rotary tiller then plow; one disruption, one crossing
        ScheduleEntry("tr-01", "F5", day(0, 10), 1.5, implement_id="im-01"),
        ScheduleEntry("tr-01", "F1", day(0, 40), 1.5, implement_id="im-01",
                      disruptions=((300.0, 420.0),)),
        ScheduleEntry("tr-01", "F3", day(1, 20), 1.5, implement_id="im-02",
                      cross_field="F2"),
        ScheduleEntry("tr-01", "F5", day(2, 0), 1.5, implement_id="im-02",
                      parks=((350.0, 300.0),)),
        # tractor 2: harrow, seeder, grass cutter; one crossing
        ScheduleEntry("tr-02", "F2", day(1, 5), 1.5, implement_id="im-03"),
        ScheduleEntry("tr-02", "F4", day(1, 40), 1.5, implement_id="im-04",
                      cross_field="F3"),
        ScheduleEntry("tr-02", "F1", day(2, 20), 1.5, implement_id="im-05"),
        ScheduleEntry("tr-02", "F5", day(2, 55), 1.5, implement_id="im-03"),
    )
    return Scenario(
        seed=seed,
        registry=registry,
        schedule=schedule,
        strays={
            "tr-01": ("B-10", "B-11"),
            "tr-02": ("B-12", "B-13"),
        },
        ref_lat=WORLD.ref_lat,
        ref_lon=WORLD.ref_lon,
    )


@pytest.fixture(scope="session")
def acceptance_scenario() -> Scenario:
    return build_acceptance_scenario()


@pytest.fixture(scope="session")
def acceptance_emitted(acceptance_scenario):
    from fieldlog.simulator import emit_scenario

    lines, truth = emit_scenario(acceptance_scenario)
    return acceptance_scenario, lines, truth


def geopoint_at(x: float, y: float) -> GeoPoint:
    return WORLD.to_geo(x, y)
