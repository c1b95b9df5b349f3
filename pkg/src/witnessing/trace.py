"""WiFi session traces: parsing, epoch availability, synthetic generation and CCDFs.

A session covers epoch ``[start, end)`` when ``assoc <= start`` and
``disassoc >= end``. A session overlaps the epoch when the two intervals
share positive length (``assoc < end`` and ``disassoc > start``). A
device is a low-class witness for a zone in an epoch only if exactly one
of its sessions covers the epoch in that zone and none of its sessions in
other zones overlaps the epoch. Minute 1439 is the last loggable minute,
so the day's final epoch only needs coverage through 1439.
"""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .errors import DomainError, SpecError, TraceFormatError
from .seeding import derive_seed

MINUTES_PER_DAY = 1440
LAST_MINUTE = MINUTES_PER_DAY - 1
SESSION_FIELDS = ("device_hash", "zone", "assoc_minute", "disassoc_minute", "avg_throughput_mbps")


@dataclass(frozen=True)
class SessionRecord:
    device_hash: str
    zone: str
    assoc_minute: int
    disassoc_minute: int
    avg_throughput: float = 0.0

    def __post_init__(self) -> None:
        if not 0 <= self.assoc_minute <= self.disassoc_minute <= LAST_MINUTE:
            raise DomainError(
                f"session minutes must satisfy 0 <= assoc <= disassoc <= {LAST_MINUTE}, "
                f"got {self.assoc_minute}, {self.disassoc_minute}"
            )

    @property
    def duration(self) -> int:
        return self.disassoc_minute - self.assoc_minute

    def covers(self, start: int, end: int) -> bool:
        return self.assoc_minute <= start and self.disassoc_minute >= end

    def overlaps(self, start: int, end: int) -> bool:
        return self.assoc_minute < end and self.disassoc_minute > start


@dataclass(frozen=True)
class ZoneMap:
    zones: frozenset[str]
    neighbors: Mapping[str, frozenset[str]]

    def __post_init__(self) -> None:
        for z, ns in self.neighbors.items():
            if z in ns:
                raise DomainError(f"zone {z} lists itself as a neighbor")
            for n in ns:
                if z not in self.neighbors.get(n, ()):
                    raise DomainError(f"neighbor relation {z}-{n} is not symmetric")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str | None]]) -> ZoneMap:
        """Build a symmetric map; a ``None`` neighbor declares an isolated zone."""
        adj: dict[str, set[str]] = defaultdict(set)
        for a, b in pairs:
            adj[a]
            if b is None or b == "":
                continue
            if a == b:
                raise DomainError(f"zone {a} cannot neighbor itself")
            adj[a].add(b)
            adj[b].add(a)
        return cls(frozenset(adj), {z: frozenset(ns) for z, ns in adj.items()})

    def degree(self, zone: str) -> int:
        if zone not in self.zones:
            raise DomainError(f"unknown zone {zone!r}")
        return len(self.neighbors.get(zone, ()))

    def pairs(self) -> list[tuple[str, str]]:
        return sorted((a, b) for a, ns in self.neighbors.items() for b in ns if a < b)


def _rows(text: str, header: Sequence[str]) -> Iterable[tuple[int, list[str]]]:
    reader = csv.reader(io.StringIO(text))
    first = next(reader, None)
    if first is None:
        return
    if [c.strip() for c in first] != list(header):
        raise TraceFormatError(f"expected header {','.join(header)}", line=1)
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        yield lineno, [c.strip() for c in row]


def parse_sessions(text: str) -> list[SessionRecord]:
    """Parse the comma-separated session log (header row required unless empty)."""
    out = []
    for lineno, row in _rows(text, SESSION_FIELDS):
        if len(row) != len(SESSION_FIELDS):
            raise TraceFormatError(f"expected {len(SESSION_FIELDS)} columns, got {len(row)}", lineno)
        device, zone, a, d, tput = row
        try:
            rec = SessionRecord(device, zone, int(a), int(d), float(tput))
        except ValueError as exc:
            raise TraceFormatError(str(exc), lineno) from exc
        out.append(rec)
    return out


def serialize_sessions(sessions: Iterable[SessionRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SESSION_FIELDS)
    for s in sessions:
        w.writerow([s.device_hash, s.zone, s.assoc_minute, s.disassoc_minute, repr(float(s.avg_throughput))])
    return buf.getvalue()


ZONE_FIELDS = ("zone", "neighbor")


def parse_zone_map(text: str) -> ZoneMap:
    """Parse ``zone,neighbor`` pairs; an empty neighbor declares an isolated zone."""
    pairs = []
    for lineno, row in _rows(text, ZONE_FIELDS):
        if len(row) not in (1, 2) or not row[0]:
            raise TraceFormatError("expected zone,neighbor", lineno)
        b = row[1] if len(row) == 2 else ""
        if b == row[0]:
            raise TraceFormatError(f"zone {b} cannot neighbor itself", lineno)
        pairs.append((row[0], b or None))
    return ZoneMap.from_pairs(pairs)


def serialize_zone_map(zones: ZoneMap) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ZONE_FIELDS)
    for a, b in zones.pairs():
        w.writerow([a, b])
    for z in sorted(zones.zones):
        if not zones.neighbors.get(z):
            w.writerow([z, ""])
    return buf.getvalue()


@dataclass(frozen=True)
class EpochScenario:
    zone: str
    epoch_id: int
    epoch_minutes: tuple[int, int]
    high_available: int
    low_available: int


def epoch_bounds(epoch_id: int, epoch_length: int = 10) -> tuple[int, int]:
    if epoch_length < 1 or MINUTES_PER_DAY % epoch_length:
        raise DomainError(f"epoch length must divide {MINUTES_PER_DAY}, got {epoch_length}")
    if not 0 <= epoch_id < MINUTES_PER_DAY // epoch_length:
        raise DomainError(f"epoch {epoch_id} outside the day for {epoch_length}-minute epochs")
    return epoch_id * epoch_length, (epoch_id + 1) * epoch_length


@dataclass
class EpochCensus:
    """Per (zone, epoch) counts before and after the persistence filter."""

    overlapping_sessions: int = 0
    retained_sessions: int = 0
    devices: set[str] = field(default_factory=set)

    @property
    def low_available(self) -> int:
        return self.retained_sessions

    @property
    def removed_fraction(self) -> float | None:
        if not self.overlapping_sessions:
            return None
        return 1.0 - self.retained_sessions / self.overlapping_sessions


def census(
    sessions: Iterable[SessionRecord], epoch_length: int = 10
) -> dict[tuple[str, int], EpochCensus]:
    """Apply the persistence filter to every (zone, epoch) touched by a session."""
    epochs = MINUTES_PER_DAY // epoch_length
    epoch_bounds(0, epoch_length)
    by_device: dict[str, list[SessionRecord]] = defaultdict(list)
    for s in sessions:
        by_device[s.device_hash].append(s)

    out: dict[tuple[str, int], EpochCensus] = defaultdict(EpochCensus)
    for device in sorted(by_device):
        # epoch -> sessions of this device overlapping it
        touching: dict[int, list[SessionRecord]] = defaultdict(list)
        for s in by_device[device]:
            first = s.assoc_minute // epoch_length
            last = min(epochs - 1, s.disassoc_minute // epoch_length)
            for e in range(first, last + 1):
                if s.overlaps(e * epoch_length, (e + 1) * epoch_length):
                    touching[e].append(s)
        for e, ss in touching.items():
            start, end = e * epoch_length, (e + 1) * epoch_length
            need = min(end, LAST_MINUTE)
            zones_here = {s.zone for s in ss}
            for s in ss:
                c = out[(s.zone, e)]
                c.overlapping_sessions += 1
                c.devices.add(device)
            if len(zones_here) != 1:
                continue
            covering = [s for s in ss if s.covers(start, need)]
            if len(covering) == 1:
                out[(covering[0].zone, e)].retained_sessions += 1
    return dict(out)


def epoch_availability(
    sessions: Iterable[SessionRecord],
    zones: ZoneMap,
    epoch_id: int,
    zone: str,
    epoch_length: int = 10,
) -> EpochScenario:
    bounds = epoch_bounds(epoch_id, epoch_length)
    high = zones.degree(zone)
    start, end = bounds
    relevant = [s for s in sessions if s.overlaps(start, end)]
    c = census(relevant, epoch_length).get((zone, epoch_id))
    return EpochScenario(zone, epoch_id, bounds, high, c.low_available if c else 0)


def availability_table(
    sessions: Sequence[SessionRecord], zones: ZoneMap, epoch_length: int = 10
) -> list[EpochScenario]:
    """Scenarios for every (zone, epoch), ordered by zone then epoch."""
    counts = census(sessions, epoch_length)
    rows = []
    for zone in sorted(zones.zones):
        high = zones.degree(zone)
        for e in range(MINUTES_PER_DAY // epoch_length):
            c = counts.get((zone, e))
            rows.append(EpochScenario(zone, e, epoch_bounds(e, epoch_length), high, c.low_available if c else 0))
    unknown = {z for z, _ in counts} - zones.zones
    if unknown:
        raise DomainError(f"sessions reference unknown zones: {', '.join(sorted(unknown))}")
    return rows


def availability_csv(rows: Iterable[EpochScenario]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["zone", "epoch", "H_avail", "L_avail"])
    for r in rows:
        w.writerow([r.zone, r.epoch_id, r.high_available, r.low_available])
    return buf.getvalue()


def mean_removed_fraction(sessions: Sequence[SessionRecord], epoch_length: int = 10) -> float:
    """Average, over (zone, epoch) cells with any overlapping session, of the share filtered out."""
    fracs = [c.removed_fraction for c in census(sessions, epoch_length).values()]
    fracs = [f for f in fracs if f is not None]
    if not fracs:
        raise DomainError("no session overlaps any epoch")
    return float(np.mean(fracs))


# -- CCDF -------------------------------------------------------------------


def ccdf(values: Iterable[float]) -> list[tuple[float, float]]:
    """Points ``(v, P(X > v))`` at each distinct value ``v`` in ascending order.

    Below the smallest value the CCDF is 1; use :func:`ccdf_at` to evaluate
    arbitrary thresholds.
    """
    arr = np.sort(np.asarray(list(values), dtype=float))
    if arr.size == 0:
        raise DomainError("ccdf of an empty sequence")
    distinct = np.unique(arr)
    above = arr.size - np.searchsorted(arr, distinct, side="right")
    return [(float(v), float(c) / arr.size) for v, c in zip(distinct, above)]


def ccdf_at(values: Sequence[float], threshold: float) -> float:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise DomainError("ccdf of an empty sequence")
    return float(np.count_nonzero(arr > threshold)) / arr.size


# -- synthetic traces ---------------------------------------------------------


@dataclass(frozen=True)
class DurationMixture:
    """Two-component log-normal mixture of session durations in minutes."""

    short_weight: float = 0.51
    short_median: float = 3.0
    short_sigma: float = 1.0
    long_median: float = 70.0
    long_sigma: float = 1.0

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        short = rng.random(size) < self.short_weight
        med = np.where(short, self.short_median, self.long_median)
        sig = np.where(short, self.short_sigma, self.long_sigma)
        return np.maximum(1, np.rint(med * np.exp(sig * rng.standard_normal(size)))).astype(int)


# relative arrival intensity by hour of day; busy during 8am-5pm
DEFAULT_HOURLY_PROFILE = (
    0.15, 0.1, 0.1, 0.1, 0.1, 0.15, 0.3, 0.6,
    1.0, 1.4, 1.6, 1.6, 1.8, 1.6, 1.5, 1.4,
    1.3, 1.0, 0.7, 0.5, 0.4, 0.3, 0.25, 0.2,
)


@dataclass(frozen=True)
class TraceSpec:
    zone_count: int = 31
    zone_names: tuple[str, ...] | None = None
    degree_mean: float = 5.0
    degree_min: int = 1
    degree_max: int = 11
    degree_sequence: tuple[int, ...] | None = None
    sessions_per_zone_per_hour: float = 10.0
    zone_density_sigma: float = 0.5
    hourly_profile: tuple[float, ...] = DEFAULT_HOURLY_PROFILE
    durations: DurationMixture = DurationMixture()
    roam_probability: float = 0.2

    def __post_init__(self) -> None:
        if self.zone_count < 2:
            raise SpecError("zone_count", "need at least 2 zones")
        if self.zone_names is not None and len(self.zone_names) != self.zone_count:
            raise SpecError("zone_names", f"expected {self.zone_count} names")
        if not 1 <= self.degree_min <= self.degree_mean <= self.degree_max < self.zone_count:
            raise SpecError("degree_mean", "need 1 <= degree_min <= degree_mean <= degree_max < zone_count")
        if self.degree_sequence is not None:
            if len(self.degree_sequence) != self.zone_count:
                raise SpecError("degree_sequence", f"expected {self.zone_count} entries")
            if not nx.is_graphical(list(self.degree_sequence)):
                raise SpecError("degree_sequence", "not realizable as a simple graph")
        if self.sessions_per_zone_per_hour < 0:
            raise SpecError("sessions_per_zone_per_hour", "must be non-negative")
        if self.zone_density_sigma < 0:
            raise SpecError("zone_density_sigma", "must be non-negative")
        if len(self.hourly_profile) != 24 or min(self.hourly_profile) < 0:
            raise SpecError("hourly_profile", "need 24 non-negative weights")
        d = self.durations
        if not 0 <= d.short_weight <= 1:
            raise SpecError("durations.short_weight", "must be in [0, 1]")
        if min(d.short_median, d.long_median) <= 0 or min(d.short_sigma, d.long_sigma) < 0:
            raise SpecError("durations", "medians must be positive and sigmas non-negative")
        if not 0 <= self.roam_probability < 1:
            raise SpecError("roam_probability", "must be in [0, 1)")

    def names(self) -> list[str]:
        if self.zone_names is not None:
            return list(self.zone_names)
        # building-style AP names: level (g, 1, 2, ...) + ap + index
        levels = ["g"] + [str(i) for i in range(1, 10)]
        per_level = -(-self.zone_count // 6)
        return [f"{levels[i // per_level]}ap{i % per_level + 1}" for i in range(self.zone_count)]

    @classmethod
    def from_dict(cls, raw: Mapping) -> TraceSpec:
        if not isinstance(raw, Mapping):
            raise SpecError("<root>", "trace spec must be a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        for key in raw:
            if key not in known:
                raise SpecError(key, "unknown field")
        kwargs = dict(raw)
        try:
            if "durations" in kwargs:
                dur = kwargs["durations"]
                dkeys = DurationMixture.__dataclass_fields__
                if not isinstance(dur, Mapping):
                    raise SpecError("durations", "must be an object")
                for key in dur:
                    if key not in dkeys:
                        raise SpecError(f"durations.{key}", "unknown field")
                kwargs["durations"] = DurationMixture(**{k: float(v) for k, v in dur.items()})
            for key in ("zone_names", "degree_sequence", "hourly_profile"):
                if kwargs.get(key) is not None:
                    if not isinstance(kwargs[key], list):
                        raise SpecError(key, "must be a list")
                    kwargs[key] = tuple(kwargs[key])
            for key in ("zone_count", "degree_min", "degree_max"):
                if key in kwargs and not isinstance(kwargs[key], int):
                    raise SpecError(key, "must be an integer")
            for key in ("degree_mean", "sessions_per_zone_per_hour", "zone_density_sigma", "roam_probability"):
                if key in kwargs and not isinstance(kwargs[key], (int, float)):
                    raise SpecError(key, "must be a number")
        except TypeError as exc:
            raise SpecError("<root>", str(exc)) from exc
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text: str) -> TraceSpec:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError("<json>", str(exc)) from exc
        return cls.from_dict(raw)


def _degree_sequence(spec: TraceSpec, rng: np.random.Generator) -> list[int]:
    if spec.degree_sequence is not None:
        return list(spec.degree_sequence)
    lo, hi, mean = spec.degree_min, spec.degree_max, spec.degree_mean
    target = round(mean * spec.zone_count)
    for _ in range(1000):
        # geometric-ish spread around the mean, pinned to both extremes
        raw = lo + rng.poisson(mean - lo, size=spec.zone_count)
        seq = np.clip(raw, lo, hi)
        seq[0], seq[1] = hi, lo
        # nudge interior entries until the total hits the target
        idx = 2
        while seq.sum() != target and idx < 10 * spec.zone_count:
            j = 2 + idx % (spec.zone_count - 2)
            if seq.sum() > target and seq[j] > lo:
                seq[j] -= 1
            elif seq.sum() < target and seq[j] < hi:
                seq[j] += 1
            idx += 1
        if seq.sum() % 2:
            j = int(np.argmax((seq > lo) & (seq < hi)))
            seq[j] += 1 if seq[j] < hi else -1
        perm = rng.permutation(spec.zone_count)
        seq = seq[perm]
        if nx.is_graphical(seq.tolist()):
            return seq.astype(int).tolist()
    raise SpecError("degree_mean", "could not draw a realizable degree sequence")


def generate_zone_map(spec: TraceSpec, rng: np.random.Generator) -> ZoneMap:
    names = spec.names()
    degrees = _degree_sequence(spec, rng)
    graph = nx.havel_hakimi_graph(degrees)
    edges = graph.number_of_edges()
    if edges >= 2:
        try:
            nx.double_edge_swap(graph, nswap=4 * edges, max_tries=100 * edges,
                                seed=int(rng.integers(2**31)))
        except nx.NetworkXException:
            pass  # keep the deterministic Havel-Hakimi realization
    pairs: list[tuple[str, str | None]] = [(names[a], names[b]) for a, b in sorted(graph.edges())]
    pairs += [(names[i], None) for i in range(len(names))]
    return ZoneMap.from_pairs(pairs)


def generate_synthetic(spec: TraceSpec, seed: int) -> tuple[list[SessionRecord], ZoneMap]:
    """Seeded synthetic day of sessions over a generated zone graph.

    Arrivals per zone and hour are Poisson with rate
    ``sessions_per_zone_per_hour * zone_density * hourly_profile[h]``,
    where each zone's density is log-normal. A device may roam to a
    neighbor zone when a session ends, which produces the mid-epoch zone
    switches the availability filter removes.
    """
    rng = np.random.default_rng(seed)
    zones = generate_zone_map(spec, rng)
    names = sorted(zones.zones)
    density = np.exp(spec.zone_density_sigma * rng.standard_normal(len(names)))
    sessions = []
    device_counter = 0
    for zi, zone in enumerate(names):
        for hour in range(24):
            lam = spec.sessions_per_zone_per_hour * density[zi] * spec.hourly_profile[hour]
            count = int(rng.poisson(lam))
            starts = np.sort(rng.integers(hour * 60, hour * 60 + 60, size=count))
            for start in starts:
                device_counter += 1
                device = f"{derive_seed('device', seed, device_counter):016x}"
                here, t = zone, int(start)
                while t < LAST_MINUTE:
                    dur = int(spec.durations.sample(rng, 1)[0])
                    end = min(LAST_MINUTE, t + dur)
                    tput = round(float(rng.gamma(2.0, 0.8)), 3)
                    sessions.append(SessionRecord(device, here, t, end, tput))
                    nbrs = sorted(zones.neighbors.get(here, ()))
                    if not nbrs or rng.random() >= spec.roam_probability:
                        break
                    here, t = nbrs[int(rng.integers(len(nbrs)))], end
    sessions.sort(key=lambda s: (s.assoc_minute, s.zone, s.device_hash, s.disassoc_minute))
    return sessions, zones


def trace_summary(sessions: Sequence[SessionRecord], zones: ZoneMap, epoch_length: int = 10) -> dict:
    durations = [s.duration for s in sessions]
    degrees = [zones.degree(z) for z in sorted(zones.zones)]
    return {
        "zones": len(zones.zones),
        "sessions": len(sessions),
        "degree_mean": float(np.mean(degrees)),
        "degree_min": int(min(degrees)),
        "degree_max": int(max(degrees)),
        "p_duration_gt_10": ccdf_at(durations, 10) if durations else 0.0,
        "mean_removed_fraction": mean_removed_fraction(sessions, epoch_length) if sessions else 0.0,
    }
