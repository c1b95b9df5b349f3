"""Trace-driven simulation of the witnessing protocol, one contract per (zone, epoch).

Each epoch runs request, offers, select and submits through a private
:class:`~witnessing.ledger.Ledger`. Witnesses hear the sensor's true
packets; the adversary perturbs only the copy delivered to the HSP, which
then checks it against the submitted statements.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .bloom import DEFAULT_FILTER_BITS, params_from_error
from .errors import DomainError, SpecError
from .ledger import Ledger, Role
from .seeding import derive_seed
from .select import TwoClassMarket, budget_units, select_two_class, to_units
from .statement import Packet, build_statements
from .trace import EpochScenario, SessionRecord, ZoneMap, availability_table, ccdf
from .verify import verify_epoch

PAYLOAD_BYTES = 32


@dataclass(frozen=True)
class SimConfig:
    filter_bits: int = DEFAULT_FILTER_BITS
    packets_per_minute: int = 15
    epoch_minutes: int = 10
    f_high: float = 0.15
    f_low: float = 0.35
    statement_price: float = 2.77
    budget: float = 90.0
    tamper_rate: float = 0.1
    master_seed: int = 0
    daytime_start_hour: int = 8
    daytime_end_hour: int = 17

    def __post_init__(self) -> None:
        for name in ("filter_bits", "packets_per_minute", "epoch_minutes", "statement_price"):
            if getattr(self, name) <= 0:
                raise SpecError(name, "must be positive")
        if self.budget < 0:
            raise SpecError("budget", "must be non-negative")
        for name in ("f_high", "f_low"):
            if not 0 < getattr(self, name) < 1:
                raise SpecError(name, "must be in (0, 1)")
        if not 0 <= self.tamper_rate <= 1:
            raise SpecError("tamper_rate", "must be in [0, 1]")
        if 1440 % self.epoch_minutes:
            raise SpecError("epoch_minutes", "must divide 1440")
        if not 0 <= self.daytime_start_hour < self.daytime_end_hour <= 24:
            raise SpecError("daytime_start_hour", "need 0 <= start < end <= 24")

    @property
    def total_packets(self) -> int:
        return self.packets_per_minute * self.epoch_minutes

    @property
    def epochs_per_day(self) -> int:
        return 1440 // self.epoch_minutes

    def market(self, high_available: int | None = None, low_available: int | None = None) -> TwoClassMarket:
        return TwoClassMarket.from_prices(
            self.f_high, self.f_low, self.statement_price, self.total_packets,
            self.filter_bits, high_available, low_available,
        )

    def is_daytime(self, epoch_id: int) -> bool:
        start = epoch_id * self.epoch_minutes
        return self.daytime_start_hour * 60 <= start < self.daytime_end_hour * 60

    def to_text(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)!r}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text: str) -> SimConfig:
        """Parse ``key=value`` lines; ``#`` starts a comment, unknown keys are rejected."""
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SpecError(f"line {lineno}", "expected key=value")
            key, value = (p.strip() for p in line.split("=", 1))
            if key not in types:
                raise SpecError(key, "unknown config key")
            conv = int if types[key] in (int, "int") else float
            try:
                kwargs[key] = conv(value)
            except ValueError:
                raise SpecError(key, f"cannot parse {value!r}") from None
        return cls(**kwargs)


@dataclass(frozen=True)
class EpochOutcome:
    zone: str
    epoch_id: int
    high_available: int
    low_available: int
    high_selected: int
    low_selected: int
    total_cost: float
    theoretical_error: float
    flagged_count: int
    tampered_count: int
    detected_count: int
    optimization_engaged: bool
    all_witness_cost: float


def make_packets(total: int, epoch_id: int, rng: np.random.Generator) -> list[Packet]:
    """``seq || epoch || 32 random bytes`` for seq = 1..total."""
    payload = rng.bytes(PAYLOAD_BYTES * total)
    return [
        (seq, seq.to_bytes(4, "big") + epoch_id.to_bytes(4, "big")
         + payload[(seq - 1) * PAYLOAD_BYTES:seq * PAYLOAD_BYTES])
        for seq in range(1, total + 1)
    ]


def tamper(
    packets: Sequence[Packet], rate: float, rng: np.random.Generator
) -> tuple[list[Packet], frozenset[int]]:
    """Independently corrupt each packet with probability ``rate``.

    A corrupted packet has one payload byte XORed with a non-zero mask,
    so it always differs from the original.
    """
    if not 0 <= rate <= 1:
        raise DomainError(f"tamper rate must be in [0, 1], got {rate}")
    hit = rng.random(len(packets)) < rate
    out, tampered = [], set()
    for (seq, data), h in zip(packets, hit):
        if h:
            buf = bytearray(data)
            i = int(rng.integers(min(8, len(buf) - 1), len(buf)))
            buf[i] ^= int(rng.integers(1, 256))
            data = bytes(buf)
            tampered.add(seq)
        out.append((seq, data))
    return out, frozenset(tampered)


def run_protocol_epoch(scenario: EpochScenario, config: SimConfig, seed: int) -> EpochOutcome:
    N = config.total_packets
    market = config.market(scenario.high_available, scenario.low_available)
    hp = params_from_error(config.filter_bits, config.f_high)
    lp = params_from_error(config.filter_bits, config.f_low)

    ledger = Ledger()
    ledger.open_account("hsp", Role.HSP, config.budget)
    high_ids = [f"{scenario.zone}/ap{i}" for i in range(scenario.high_available)]
    low_ids = [f"{scenario.zone}/dev{j}" for j in range(scenario.low_available)]
    for wid in high_ids + low_ids:
        ledger.open_account(wid, Role.WITNESS)
    funds = ledger.total_funds()

    device = f"{derive_seed('sensor', scenario.zone):016x}"
    ledger.request("hsp", device, scenario.zone, 1, N)
    for wid in high_ids:
        ledger.offer(wid, scenario.zone, hp.capacity, market.c_high, fpr=config.f_high)
    for wid in low_ids:
        ledger.offer(wid, scenario.zone, lp.capacity, market.c_low, fpr=config.f_low)

    choice = select_two_class(market, config.budget)
    all_units = (scenario.high_available * to_units(market.c_high)
                 + scenario.low_available * to_units(market.c_low))
    chosen = {w: market.c_high for w in high_ids[:choice.high]}
    chosen.update({w: market.c_low for w in low_ids[:choice.low]})
    ledger.select("hsp", chosen)

    rng = np.random.default_rng(seed)
    packets = make_packets(N, scenario.epoch_id, rng)
    statements = []
    for wid in chosen:
        params = hp if wid in high_ids[:choice.high] else lp
        mine = build_statements(packets, params, wid, scenario.epoch_id, seed)
        for s in mine:
            ledger.submit(wid, s)
        statements.extend(mine)

    received, tampered = tamper(packets, config.tamper_rate, rng)
    if statements:
        report = verify_epoch(received, statements, scenario.epoch_id, tampered)
        flags = {v.seq for v in report.verdicts if v.flagged}
    else:
        flags = set()

    if ledger.total_funds() != funds or not ledger.verify():
        raise AssertionError(f"ledger invariant broken in {scenario.zone} epoch {scenario.epoch_id}")

    return EpochOutcome(
        zone=scenario.zone,
        epoch_id=scenario.epoch_id,
        high_available=scenario.high_available,
        low_available=scenario.low_available,
        high_selected=choice.high,
        low_selected=choice.low,
        total_cost=choice.total_cost,
        theoretical_error=math.exp(market.log_error(choice.high, choice.low)),
        flagged_count=len(flags),
        tampered_count=len(tampered),
        detected_count=len(flags & tampered),
        optimization_engaged=all_units > budget_units(config.budget),
        all_witness_cost=round(all_units / 100, 2),
    )


def epoch_seed(config: SimConfig, zone: str, epoch_id: int) -> int:
    return derive_seed("epoch", config.master_seed, zone, epoch_id)


def _run_zone(args: tuple[SimConfig, list[EpochScenario]]) -> list[EpochOutcome]:
    config, scenarios = args
    return [run_protocol_epoch(s, config, epoch_seed(config, s.zone, s.epoch_id)) for s in scenarios]


@dataclass
class DayReport:
    config: SimConfig
    outcomes: dict[str, list[EpochOutcome]] = field(default_factory=dict)

    def daytime(self) -> list[EpochOutcome]:
        return [o for zone in sorted(self.outcomes) for o in self.outcomes[zone]
                if self.config.is_daytime(o.epoch_id)]

    def all_witness_costs(self) -> list[float]:
        return [o.all_witness_cost for o in self.daytime()]

    def max_cost_per_zone(self) -> list[float]:
        per_zone: dict[str, float] = {}
        for o in self.daytime():
            per_zone[o.zone] = max(per_zone.get(o.zone, 0.0), o.all_witness_cost)
        return [per_zone[z] for z in sorted(per_zone)]

    def cost_ccdf(self) -> list[tuple[float, float]]:
        return ccdf(self.all_witness_costs())

    def max_cost_ccdf(self) -> list[tuple[float, float]]:
        return ccdf(self.max_cost_per_zone())

    def rows(self) -> Iterable[EpochOutcome]:
        for zone in sorted(self.outcomes):
            yield from self.outcomes[zone]

    def epochs_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["zone", "epoch", "H_avail", "L_avail", "H_sel", "L_sel", "cost",
                    "error", "flagged", "tampered", "detected", "engaged", "all_cost"])
        for o in self.rows():
            w.writerow([o.zone, o.epoch_id, o.high_available, o.low_available,
                        o.high_selected, o.low_selected, f"{o.total_cost:.2f}",
                        f"{o.theoretical_error:.6e}", o.flagged_count, o.tampered_count,
                        o.detected_count, int(o.optimization_engaged), f"{o.all_witness_cost:.2f}"])
        return buf.getvalue()


def ccdf_csv(points: Iterable[tuple[float, float]]) -> str:
    return "x,fraction\n" + "".join(f"{x:.2f},{y:.6f}\n" for x, y in points)


def run_day(
    sessions: Sequence[SessionRecord],
    zones: ZoneMap,
    config: SimConfig,
    focus: Iterable[str] | None = None,
    workers: int = 1,
) -> DayReport:
    """Simulate every epoch of the day for each zone (or just the ``focus`` zones).

    Results do not depend on ``workers``: each epoch's randomness is
    derived from (master_seed, zone, epoch).
    """
    table = availability_table(sessions, zones, config.epoch_minutes)
    wanted = set(zones.zones) if focus is None else set(focus)
    missing = wanted - zones.zones
    if missing:
        raise DomainError(f"unknown zones: {', '.join(sorted(missing))}")
    by_zone: dict[str, list[EpochScenario]] = {}
    for s in table:
        if s.zone in wanted:
            by_zone.setdefault(s.zone, []).append(s)

    jobs = [(config, by_zone[z]) for z in sorted(by_zone)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_zone, jobs))
    else:
        results = [_run_zone(j) for j in jobs]
    return DayReport(config, {z: r for z, r in zip(sorted(by_zone), results)})


