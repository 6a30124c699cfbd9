"""Geospatial primitives: distance, containment, trajectory length, boundary digitization.

Fields here are small (< 1 km extent), so lon/lat is treated as planar for
containment and a local equirectangular scaling is good enough for areas.
No projection layer, no geodesic-exact distances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from shapely.geometry import Polygon as _ShapelyPolygon

from .model import FieldlogError, Fix, GeoPoint

EARTH_RADIUS_M = 6_371_000.0
_DEG_TO_M = math.pi * EARTH_RADIUS_M / 180.0  # meters per degree of latitude


class GeoError(FieldlogError):
    pass


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters (spherical earth, R = 6,371 km)."""
    la1 = math.radians(a.lat)
    la2 = math.radians(b.lat)
    dla = la2 - la1
    dlo = math.radians(b.lon - a.lon)
    h = math.sin(dla / 2.0) ** 2 + math.cos(la1) * math.cos(la2) * math.sin(dlo / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


_EDGE_EPS = 1e-12  # degrees²; well below any real coordinate noise


def _on_segment(px: float, py: float, x1: float, y1: float, x2: float, y2: float) -> bool:
    cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
    if abs(cross) > _EDGE_EPS:
        return False
    return (
        min(x1, x2) - _EDGE_EPS <= px <= max(x1, x2) + _EDGE_EPS
        and min(y1, y2) - _EDGE_EPS <= py <= max(y1, y2) + _EDGE_EPS
    )


def point_in_polygon(p: GeoPoint, ring: Sequence[GeoPoint]) -> bool:
    """Ray-casting containment in planar lon/lat; boundary points count as inside.

    Boundary-inclusive on purpose: a machine driving the bund line is still
    in the field.
    """
    px, py = p.lon, p.lat
    n = len(ring)
    inside = False
    for i in range(n):
        a = ring[i]
        b = ring[(i + 1) % n]
        x1, y1, x2, y2 = a.lon, a.lat, b.lon, b.lat
        if _on_segment(px, py, x1, y1, x2, y2):
            return True
        if (y1 > py) != (y2 > py):
            x_at = (x2 - x1) * (py - y1) / (y2 - y1) + x1
            if px < x_at:
                inside = not inside
    return inside


def trajectory_length_m(fixes: Sequence[Fix]) -> float:
    """Sum of consecutive haversine steps; 0 for fewer than 2 fixes."""
    total = 0.0
    for prev, cur in zip(fixes, fixes[1:]):
        total += haversine_m(prev.pos, cur.pos)
    return total


# ---------------------------------------------------------------------------
# local planar helpers (equirectangular at a reference latitude)

def meters_per_degree(ref_lat: float) -> tuple[float, float]:
    """(m per degree lon, m per degree lat) at the given latitude."""
    return _DEG_TO_M * math.cos(math.radians(ref_lat)), _DEG_TO_M


def _ring_to_local_m(ring: Sequence[GeoPoint]) -> list[tuple[float, float]]:
    ref_lat = sum(p.lat for p in ring) / len(ring)
    ref_lon = ring[0].lon
    mx, my = meters_per_degree(ref_lat)
    return [((p.lon - ref_lon) * mx, (p.lat - ref_lat) * my) for p in ring]


def ring_area_ha(ring: Sequence[GeoPoint]) -> float:
    """Shoelace area of the ring in hectares, in the local tangent plane."""
    pts = _ring_to_local_m(ring)
    s = 0.0
    for (x1, y1), (x2, y2) in zip(pts, pts[1:] + pts[:1]):
        s += x1 * y2 - x2 * y1
    return abs(s) / 2.0 / 10_000.0


def ring_is_simple(ring: Sequence[GeoPoint]) -> bool:
    return _ShapelyPolygon([(p.lon, p.lat) for p in ring]).is_valid


def rings_overlap(a: Sequence[GeoPoint], b: Sequence[GeoPoint]) -> bool:
    """True when the two polygons share interior area (touching edges don't count)."""
    pa = _ShapelyPolygon([(p.lon, p.lat) for p in a])
    pb = _ShapelyPolygon([(p.lon, p.lat) for p in b])
    return pa.intersection(pb).area > 0.0


def rings_iou(a: Sequence[GeoPoint], b: Sequence[GeoPoint]) -> float:
    """Intersection-over-union of two polygons.

    Computed directly in lon/lat: IoU is an area ratio and the local
    meters-per-degree scaling cancels out at field scale.
    """
    pa = _ShapelyPolygon([(p.lon, p.lat) for p in a])
    pb = _ShapelyPolygon([(p.lon, p.lat) for p in b])
    inter = pa.intersection(pb).area
    union = pa.union(pb).area
    return inter / union if union > 0.0 else 0.0


# ---------------------------------------------------------------------------
# boundary digitization

@dataclass(frozen=True)
class BoundaryEstimate:
    """Convex field outline recovered from work trajectories."""

    ring: tuple[GeoPoint, ...]
    source_fix_count: int
    iou_vs_registered: Optional[float] = None


def convex_hull(points: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    """Andrew's monotone chain; returns the hull counter-clockwise."""
    pts = sorted(set(points))
    if len(pts) < 3:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[tuple[float, float]] = []
    for p in pts:
        while len(lower) > 1 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(pts):
        while len(upper) > 1 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


_MITER_LIMIT = 3.0


def _buffer_convex_m(pts: list[tuple[float, float]], d: float) -> list[tuple[float, float]]:
    """Offset each vertex of a CCW convex polygon outward by d (miter joins)."""
    n = len(pts)
    out = []
    for i in range(n):
        x0, y0 = pts[(i - 1) % n]
        x1, y1 = pts[i]
        x2, y2 = pts[(i + 1) % n]
        # outward normals of the two edges meeting at vertex i (CCW ⇒ right side)
        def normal(ax, ay, bx, by):
            dx, dy = bx - ax, by - ay
            ln = math.hypot(dx, dy)
            return (dy / ln, -dx / ln)

        n1 = normal(x0, y0, x1, y1)
        n2 = normal(x1, y1, x2, y2)
        bx, by = n1[0] + n2[0], n1[1] + n2[1]
        ln = math.hypot(bx, by)
        if ln < 1e-12:
            continue
        bx, by = bx / ln, by / ln
        cos_half = max(1.0 / _MITER_LIMIT, (1.0 + n1[0] * n2[0] + n1[1] * n2[1]) / 2.0) ** 0.5
        scale = d / cos_half
        out.append((x1 + bx * scale, y1 + by * scale))
    return out


def digitize_boundary(
    fixes: Sequence[Fix],
    swath_m: float,
    min_fixes: int = 3,
    registered_ring: Optional[Sequence[GeoPoint]] = None,
) -> BoundaryEstimate:
    """Recover a field outline from work fixes.

    Convex hull of the positions, then an outward buffer of half the swath
    (the machine center never reaches the true boundary). Raises
    ``too_few_fixes`` for thin input or a degenerate (collinear) hull.
    """
    if len(fixes) < max(min_fixes, 3):
        raise GeoError("too_few_fixes", f"{len(fixes)} fixes, need {max(min_fixes, 3)}")

    ref_lat = sum(f.pos.lat for f in fixes) / len(fixes)
    ref_lon = fixes[0].pos.lon
    mx, my = meters_per_degree(ref_lat)
    local = [((f.pos.lon - ref_lon) * mx, (f.pos.lat - ref_lat) * my) for f in fixes]
    hull = convex_hull(local)
    if len(hull) < 3:
        raise GeoError("too_few_fixes", "degenerate hull (collinear fixes)")

    buffered = _buffer_convex_m(hull, swath_m / 2.0)
    ring = tuple(
        GeoPoint(lat=ref_lat + y / my, lon=ref_lon + x / mx) for x, y in buffered
    )

    iou = rings_iou(ring, registered_ring) if registered_ring is not None else None
    return BoundaryEstimate(ring=ring, source_fix_count=len(fixes), iou_vs_registered=iou)


def boundary_to_geojson(est: BoundaryEstimate, field_id: str = "") -> dict:
    props: dict = {"source_fix_count": est.source_fix_count}
    if field_id:
        props["field"] = field_id
    if est.iou_vs_registered is not None:
        props["iou_vs_registered"] = est.iou_vs_registered
    coords = [[p.lon, p.lat] for p in est.ring]
    coords.append(coords[0])
    return {
        "type": "Feature",
        "geometry": {"type": "Polygon", "coordinates": [coords]},
        "properties": props,
    }
