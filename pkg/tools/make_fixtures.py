"""Regenerate the bundled low/high-density zone fixtures and the calibrated trace spec.

Run from the repository root: ``python tools/make_fixtures.py``.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

from witnessing.trace import SessionRecord, TraceSpec, ZoneMap, serialize_sessions, serialize_zone_map

DATA = Path(__file__).resolve().parent.parent / "src" / "witnessing" / "data"


def low_density() -> tuple[list[SessionRecord], ZoneMap]:
    """Zone 4ap5: two neighbor APs and at most six persistent devices (10:00-11:30)."""
    z = "4ap5"
    s = [
        SessionRecord("ld-night", z, 0, 300, 0.4),
        SessionRecord("ld-01", z, 480, 1020, 1.2),
        SessionRecord("ld-02", z, 540, 960, 0.9),
        SessionRecord("ld-03", z, 570, 750, 2.1),
        SessionRecord("ld-04", z, 600, 690, 0.7),
        SessionRecord("ld-05", z, 600, 690, 1.5),
        SessionRecord("ld-06", z, 600, 690, 0.3),
        # shorter than an epoch: filtered out
        SessionRecord("ld-07", z, 615, 620, 3.0),
        SessionRecord("ld-08", z, 700, 705, 0.8),
        SessionRecord("ld-09", z, 800, 806, 1.1),
        # switches zone mid-epoch
        SessionRecord("ld-10", z, 830, 845, 0.6),
        SessionRecord("ld-10", "4ap4", 845, 900, 0.6),
    ]
    zones = ZoneMap.from_pairs([(z, "4ap4"), (z, "4ap6")])
    return s, zones


def high_density() -> tuple[list[SessionRecord], ZoneMap]:
    """Zone 4ap2: six neighbor APs, five all-day devices plus nineteen daytime ones."""
    z = "4ap2"
    s = [SessionRecord(f"hd-fix{i}", z, 0, 1439, 0.5) for i in range(5)]
    for j in range(19):
        s.append(SessionRecord(f"hd-{j:02d}", z, 540 + 10 * j, 750 + 15 * j, round(0.5 + 0.1 * j, 2)))
    s += [
        SessionRecord("hd-short1", z, 612, 618, 1.0),
        SessionRecord("hd-short2", z, 905, 911, 1.0),
        SessionRecord("hd-roam", z, 700, 715, 0.8),
        SessionRecord("hd-roam", "4ap3", 715, 800, 0.8),
    ]
    neighbors = ["4ap1", "4ap3", "4ap4", "4ap5", "4ap6", "4ap7"]
    return s, ZoneMap.from_pairs([(z, n) for n in neighbors])


def main() -> None:
    DATA.mkdir(parents=True, exist_ok=True)
    for name, build in (("low_density", low_density), ("high_density", high_density)):
        sessions, zones = build()
        sessions.sort(key=lambda r: (r.assoc_minute, r.zone, r.device_hash))
        (DATA / f"{name}_sessions.csv").write_text(serialize_sessions(sessions))
        (DATA / f"{name}_zones.csv").write_text(serialize_zone_map(zones))
    spec = asdict(TraceSpec())
    spec["hourly_profile"] = list(spec["hourly_profile"])
    (DATA / "calibrated_trace_spec.json").write_text(json.dumps(spec, indent=2) + "\n")


if __name__ == "__main__":
    main()
