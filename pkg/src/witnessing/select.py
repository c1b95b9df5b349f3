"""Budget-constrained witness selection.

Selecting witnesses to minimize the joint miss probability ``prod(f_i)``
under a budget is a 0/1 knapsack once the objective is taken in log
space: each offer has weight ``c_i`` and value ``-ln f_i``. Costs are
handled as integer hundredths of a cent so feasibility is exact.

Ties are broken by (1) lower log-error, (2) lower total cost, (3) fewer
witnesses, (4) lexicographic witness ids.
"""

from __future__ import annotations

import enum
import itertools
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from .bloom import DEFAULT_FILTER_BITS, capacity_for
from .errors import DomainError

# log-errors are compared after rounding so ln4 and 2*ln2 tie
_LOG_DIGITS = 9


def to_units(cents: float) -> int:
    """Cents to integer hundredths of a cent."""
    return round(cents * 100)


def budget_units(cents: float) -> int:
    if cents < 0:
        raise DomainError(f"budget must be non-negative, got {cents}")
    # tolerate float noise such as 27.699999999
    return math.floor(cents * 100 + 1e-6)


def from_units(units: int) -> float:
    return round(units / 100, 2)


def witness_cost(total_packets: int, filter_bits: int, fpr: float, statement_price: float) -> float:
    """Price of one witness's full statement set, ``ceil(N/n(f)) * alpha``, in cents.

    >>> witness_cost(150, 256, 0.15, 2.77)
    8.31
    """
    if statement_price <= 0:
        raise DomainError(f"statement price must be positive, got {statement_price}")
    if total_packets < 1:
        raise DomainError(f"packet count must be >= 1, got {total_packets}")
    n = capacity_for(filter_bits, fpr)
    if n < 1:
        raise DomainError(f"a {filter_bits}-bit filter cannot reach fpr={fpr}")
    return round(math.ceil(total_packets / n) * statement_price, 2)


class WitnessClass(enum.Enum):
    HIGH = "high"
    LOW = "low"
    OTHER = "other"


@dataclass(frozen=True)
class WitnessOffer:
    witness_id: str
    declared_fpr: float
    cost: float
    statement_price: float | None = None
    class_hint: WitnessClass = WitnessClass.OTHER

    def __post_init__(self) -> None:
        if not 0.0 < self.declared_fpr < 1.0:
            raise DomainError(f"offer {self.witness_id}: fpr must be in (0, 1), got {self.declared_fpr}")
        if self.cost <= 0 or to_units(self.cost) <= 0:
            raise DomainError(f"offer {self.witness_id}: cost must be positive, got {self.cost}")

    @classmethod
    def priced(
        cls,
        witness_id: str,
        fpr: float,
        statement_price: float,
        total_packets: int = 150,
        filter_bits: int = DEFAULT_FILTER_BITS,
        class_hint: WitnessClass = WitnessClass.OTHER,
    ) -> WitnessOffer:
        cost = witness_cost(total_packets, filter_bits, fpr, statement_price)
        return cls(witness_id, fpr, cost, statement_price, class_hint)

    @property
    def log_error(self) -> float:
        return math.log(self.declared_fpr)


@dataclass(frozen=True)
class SelectionResult:
    chosen: tuple[str, ...]
    total_cost: float
    log_error: float
    high: int | None = None
    low: int | None = None

    @property
    def verification_error(self) -> float:
        return math.exp(self.log_error)

    @property
    def count(self) -> int:
        if self.high is not None:
            return self.high + (self.low or 0)
        return len(self.chosen)

    @property
    def empty(self) -> bool:
        return self.count == 0


EMPTY = SelectionResult((), 0.0, 0.0)


def _key(log_error: float, units: int, count: int, ids: tuple[str, ...] = ()) -> tuple:
    return (round(log_error, _LOG_DIGITS), units, count, ids)


def select_general(offers: Sequence[WitnessOffer], budget: float) -> SelectionResult:
    """Exact 0/1 knapsack over offers, minimizing the summed log false-positive rate.

    The DP keeps, for every exactly reachable total cost, the best subset
    reaching it; the answer is the best state at or below the budget.
    """
    cap = budget_units(budget)
    ordered = sorted(offers, key=lambda o: o.witness_id)
    ids = [o.witness_id for o in ordered]
    if len(set(ids)) != len(ids):
        raise DomainError("duplicate witness ids among offers")

    # state: total units -> (key, raw log-error, chosen indices)
    states: dict[int, tuple[tuple, float, tuple[int, ...]]] = {0: (_key(0.0, 0, 0), 0.0, ())}
    for idx, offer in enumerate(ordered):
        w = to_units(offer.cost)
        if w > cap:
            continue
        lf = offer.log_error
        updates = {}
        for units, (_, raw, picked) in states.items():
            total = units + w
            if total > cap:
                continue
            new_picked = picked + (idx,)
            new_raw = raw + lf
            new_key = _key(new_raw, total, len(new_picked), tuple(ids[i] for i in new_picked))
            best = updates.get(total) or states.get(total)
            if best is None or new_key < best[0]:
                updates[total] = (new_key, new_raw, new_picked)
        states.update(updates)

    *_, picked = min(states.values(), key=lambda s: s[0])
    return _result([ordered[i] for i in picked])


def _result(chosen: Sequence[WitnessOffer]) -> SelectionResult:
    units = sum(to_units(o.cost) for o in chosen)
    log_error = math.fsum(o.log_error for o in chosen)
    return SelectionResult(tuple(sorted(o.witness_id for o in chosen)), from_units(units), log_error)


def select_brute_force(offers: Sequence[WitnessOffer], budget: float) -> SelectionResult:
    """Enumerate every subset. Exponential; an oracle for small instances only."""
    cap = budget_units(budget)
    best = None
    for r in range(len(offers) + 1):
        for combo in itertools.combinations(offers, r):
            units = sum(to_units(o.cost) for o in combo)
            if units > cap:
                continue
            lf = math.fsum(o.log_error for o in combo)
            key = _key(lf, units, r, tuple(sorted(o.witness_id for o in combo)))
            if best is None or key < best[0]:
                best = (key, combo)
    return _result(best[1])


@dataclass(frozen=True)
class TwoClassMarket:
    """Identical high-class and low-class offers; ``None`` availability is unbounded."""

    f_high: float
    f_low: float
    c_high: float
    c_low: float
    high_available: int | None = None
    low_available: int | None = None

    def __post_init__(self) -> None:
        for name in ("f_high", "f_low"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise DomainError(f"{name} must be in (0, 1), got {v}")
        for name in ("c_high", "c_low"):
            if to_units(getattr(self, name)) <= 0:
                raise DomainError(f"{name} must be positive")
        for name in ("high_available", "low_available"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise DomainError(f"{name} must be non-negative")

    @classmethod
    def from_prices(
        cls,
        f_high: float = 0.15,
        f_low: float = 0.35,
        statement_price: float = 2.77,
        total_packets: int = 150,
        filter_bits: int = DEFAULT_FILTER_BITS,
        high_available: int | None = None,
        low_available: int | None = None,
    ) -> TwoClassMarket:
        return cls(
            f_high,
            f_low,
            witness_cost(total_packets, filter_bits, f_high, statement_price),
            witness_cost(total_packets, filter_bits, f_low, statement_price),
            high_available,
            low_available,
        )

    @property
    def conventional(self) -> bool:
        """True in the expected regime: high class is both better and dearer."""
        return self.f_high < self.f_low and self.c_high > self.c_low

    def capped(self, high_available: int | None, low_available: int | None) -> TwoClassMarket:
        return TwoClassMarket(
            self.f_high, self.f_low, self.c_high, self.c_low, high_available, low_available
        )

    def log_error(self, high: int, low: int) -> float:
        return high * math.log(self.f_high) + low * math.log(self.f_low)

    def expand(self) -> list[WitnessOffer]:
        """Materialize availability as individual offers (availability must be finite)."""
        if self.high_available is None or self.low_available is None:
            raise DomainError("cannot expand a market with unbounded availability")
        offers = [
            WitnessOffer(f"h{i:03d}", self.f_high, self.c_high, class_hint=WitnessClass.HIGH)
            for i in range(self.high_available)
        ]
        offers += [
            WitnessOffer(f"l{i:03d}", self.f_low, self.c_low, class_hint=WitnessClass.LOW)
            for i in range(self.low_available)
        ]
        return offers

    def _grid(self, budget: float) -> Iterable[tuple[int, int, int]]:
        """Feasible (H, L, units) with L maximal for each H."""
        cap = budget_units(budget)
        uh, ul = to_units(self.c_high), to_units(self.c_low)
        h_max = cap // uh
        if self.high_available is not None:
            h_max = min(h_max, self.high_available)
        for h in range(h_max + 1):
            low = (cap - h * uh) // ul
            if self.low_available is not None:
                low = min(low, self.low_available)
            yield h, low, h * uh + low * ul

    def _result(self, high: int, low: int) -> SelectionResult:
        units = high * to_units(self.c_high) + low * to_units(self.c_low)
        return SelectionResult((), from_units(units), self.log_error(high, low), high, low)


def select_two_class(market: TwoClassMarket, budget: float) -> SelectionResult:
    """Optimal (H, L) by enumerating H and filling the remainder with low-class witnesses.

    Taking the most low-class witnesses that fit for each H is optimal
    because every extra witness lowers the error.
    """
    best = min(
        market._grid(budget),
        key=lambda g: _key(market.log_error(g[0], g[1]), g[2], g[0] + g[1]),
    )
    return market._result(best[0], best[1])


def select_max_spend(market: TwoClassMarket, budget: float) -> SelectionResult:
    """Maximize spend ``c_h H + c_l L`` under the budget, the linearized form of the problem.

    Many (H, L) points share the maximal spend when costs are whole
    multiples of one statement price; ties go to the lower log-error,
    then lower cost.
    """
    cap = budget_units(budget)
    uh, ul = to_units(market.c_high), to_units(market.c_low)
    h_max = cap // uh if market.high_available is None else min(cap // uh, market.high_available)
    best = None
    for h in range(h_max + 1):
        l_max = (cap - h * uh) // ul
        if market.low_available is not None:
            l_max = min(l_max, market.low_available)
        for low in range(l_max + 1):
            units = h * uh + low * ul
            key = (-units, round(market.log_error(h, low), _LOG_DIGITS), units, h + low)
            if best is None or key < best[0]:
                best = (key, h, low)
    return market._result(best[1], best[2])


@dataclass(frozen=True)
class SweepRow:
    budget: float
    result: SelectionResult = field(repr=False)

    @property
    def high(self) -> int:
        return self.result.high or 0

    @property
    def low(self) -> int:
        return self.result.low or 0

    @property
    def error(self) -> float:
        return self.result.verification_error


def budget_sweep(market: TwoClassMarket, budgets: Iterable[float]) -> list[SweepRow]:
    return [SweepRow(c, select_two_class(market, c)) for c in budgets]
