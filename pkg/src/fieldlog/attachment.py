"""Implement attachment inference from BLE beacon observations.

An MPV carries at most one implement at a time. A beacon attaches only
after its median RSSI over a dwell window clears the attach threshold,
which is what rejects nearby-but-unattached implements sitting in the yard;
hysteresis (a lower detach threshold plus a silence timeout) keeps multipath
dips from chopping one attachment into many.

Evaluation runs on a fixed 1 s grid: simpler to verify against a brute-force
replay than an event-driven machine, and cheap at this scale.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from collections import Counter
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable, Mapping, Optional, Sequence

from .model import AttachmentInterval, BleObservation, GatewayReport, Params


@dataclass(frozen=True)
class BeaconTimeline:
    """Ordered (t, rssi) sightings of one beacon by one machine's gateway."""

    machine_id: str
    beacon_uid: str
    samples: tuple[tuple[datetime, int], ...]  # t strictly increasing


def build_timelines(reports: Sequence[GatewayReport]) -> list[BeaconTimeline]:
    """Group a machine's reports into per-beacon timelines (report order = time order)."""
    by_uid: dict[str, list[tuple[datetime, int]]] = {}
    machine_id = reports[0].fix.machine_id if reports else ""
    for rep in reports:
        for obs in rep.observations:
            by_uid.setdefault(obs.beacon_uid, []).append((rep.fix.t, obs.rssi))
    return [
        BeaconTimeline(machine_id=machine_id, beacon_uid=uid, samples=tuple(samples))
        for uid, samples in sorted(by_uid.items())
    ]


def _median_lower(values: list[int]) -> int:
    return sorted(values)[(len(values) - 1) // 2]


def window_median_rssi(
    timeline: BeaconTimeline, t_end: datetime, window_s: float
) -> Optional[int]:
    """Median RSSI of samples in (t_end − window_s, t_end]; None when empty.

    Even-count windows take the lower of the two middle values, so the
    result is always an observed sample and the rule is deterministic.
    """
    end = t_end.timestamp()
    ts = [t.timestamp() for t, _ in timeline.samples]
    lo = bisect_right(ts, end - window_s)
    hi = bisect_right(ts, end)
    if lo >= hi:
        return None
    return _median_lower([rssi for _, rssi in timeline.samples[lo:hi]])


class _BeaconState:
    __slots__ = ("uid", "ts", "rssi", "first_t")

    def __init__(self, timeline: BeaconTimeline):
        self.uid = timeline.beacon_uid
        self.ts = [t.timestamp() for t, _ in timeline.samples]
        self.rssi = [r for _, r in timeline.samples]
        self.first_t = self.ts[0]

    def median(self, t: float, window_s: float) -> Optional[int]:
        lo = bisect_right(self.ts, t - window_s)
        hi = bisect_right(self.ts, t)
        if lo >= hi:
            return None
        return _median_lower(self.rssi[lo:hi])

    def age(self, t: float) -> float:
        hi = bisect_right(self.ts, t)
        if hi == 0:
            return math.inf
        return t - self.ts[hi - 1]


def infer_attachments(
    timelines: Iterable[BeaconTimeline],
    implements_by_beacon: Mapping[str, str],
    params: Params,
) -> tuple[list[AttachmentInterval], Counter]:
    """Run the hysteresis state machine over one machine's beacon timelines.

    Per grid second: a beacon is a candidate once it has a full w_on of
    history and its trailing-window median clears rssi_attach; the candidate
    with the greatest median is attached (ties to the lexicographically
    smallest UID). An attachment survives quiet spells until its median
    drops below rssi_detach or the beacon stays silent for w_off or longer.
    Intervals shorter than w_on are discarded.

    Beacons missing from the registry are ignored; their sample counts come
    back in the second return value.
    """
    timelines = list(timelines)
    unknown: Counter = Counter()
    machine_id = timelines[0].machine_id if timelines else ""
    states: list[_BeaconState] = []
    for tl in timelines:
        if tl.machine_id != machine_id:
            raise ValueError("timelines span multiple machines")
        if tl.beacon_uid not in implements_by_beacon:
            unknown[tl.beacon_uid] += len(tl.samples)
            continue
        if tl.samples:
            states.append(_BeaconState(tl))
    if not states:
        return [], unknown

    t_lo = math.ceil(min(s.first_t for s in states))
    t_hi_exact = max(s.ts[-1] for s in states)
    t_hi = math.floor(t_hi_exact)

    raw: list[tuple[str, float, float]] = []  # (uid, start, end)
    current: Optional[_BeaconState] = None
    cur_start = 0.0

    def close(end: float):
        nonlocal current
        if current is not None:
            raw.append((current.uid, cur_start, end))
            current = None

    t = float(t_lo)
    while t <= t_hi:
        meds = {s.uid: s.median(t, params.w_on) for s in states}

        if current is not None:
            med_cur = meds[current.uid]
            if (med_cur is not None and med_cur < params.rssi_detach) or (
                current.age(t) >= params.w_off
            ):
                close(t)

        candidates = [
            s
            for s in states
            if meds[s.uid] is not None
            and meds[s.uid] >= params.rssi_attach
            and s.first_t <= t - params.w_on
        ]
        if candidates:
            best = min(candidates, key=lambda s: (-meds[s.uid], s.uid))
            if current is None:
                current = best
                cur_start = t
            elif best.uid != current.uid:
                close(t)
                current = best
                cur_start = t
        t += 1.0

    close(t_hi_exact)

    intervals = [
        AttachmentInterval(
            machine_id=machine_id,
            implement_id=implements_by_beacon[uid],
            start=datetime.fromtimestamp(start, tz=timezone.utc),
            end=datetime.fromtimestamp(end, tz=timezone.utc),
        )
        for uid, start, end in raw
        if end - start >= params.w_on
    ]
    return intervals, unknown


def attachment_at(
    intervals: Sequence[AttachmentInterval], t: datetime
) -> Optional[str]:
    """Implement attached at instant t, or None. Intervals must be disjoint.

    When one interval ends exactly where the next starts, the newer one wins.
    """
    starts = [iv.start for iv in intervals]
    idx = bisect_right(starts, t) - 1
    if idx < 0:
        return None
    iv = intervals[idx]
    return iv.implement_id if t <= iv.end else None
