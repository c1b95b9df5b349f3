"""A simulated blockchain hosting the witnessing contract.

Consensus is abstracted away: every accepted transaction is final the
moment it is applied, and the log is a hash chain over the serialized
transactions. Money is tracked in integer hundredths of a cent.

The contract walks ``IDLE -> AWAITING_OFFERS -> AWAITING_STATEMENTS ->
SETTLED``. ``request`` and ``select`` are reserved for the HSP, ``offer``
requires the caller's zone to match the request, and ``submit`` releases a
witness's escrowed price once it has delivered all committed statements.
A rejected transaction raises and leaves every piece of state untouched.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any

from .errors import DomainError, WitnessingError
from .select import from_units, to_units
from .statement import WitnessStatement

GENESIS_HASH = "0" * 64
CONTRACT_ID = "witnessing-contract"


class ContractError(WitnessingError):
    """A transaction was rejected by the contract."""


class AccessDenied(ContractError):
    pass


class InvalidPhase(ContractError):
    pass


class IneligibleWitness(ContractError):
    pass


class InsufficientFunds(ContractError):
    pass


class UnknownWitness(ContractError):
    pass


class NotSelected(ContractError):
    pass


class UnknownAccount(ContractError):
    pass


class Role(enum.Enum):
    HSP = "hsp"
    WITNESS = "witness"
    OTHER = "other"


class Phase(enum.Enum):
    IDLE = "idle"
    AWAITING_OFFERS = "awaiting_offers"
    AWAITING_STATEMENTS = "awaiting_statements"
    SETTLED = "settled"


@dataclass(frozen=True)
class GasSchedule:
    gas_per_submit: int = 23_000
    eth_per_megagas: float = 0.0075
    usd_per_eth: float = 160.36

    def __post_init__(self) -> None:
        if self.gas_per_submit <= 0 or self.eth_per_megagas <= 0 or self.usd_per_eth <= 0:
            raise DomainError("gas schedule entries must all be positive")

    @property
    def statement_price(self) -> float:
        return gas_cost_cents(self, self.gas_per_submit)


def gas_cost_cents(schedule: GasSchedule, gas: int) -> float:
    """Convert gas units to cents at the schedule's ETH and dollar rates.

    >>> gas_cost_cents(GasSchedule(), 23_000)
    2.77
    """
    if gas <= 0:
        raise DomainError(f"gas must be positive, got {gas}")
    return round(gas / 1e6 * schedule.eth_per_megagas * schedule.usd_per_eth * 100, 2)


@dataclass
class Account:
    id: str
    role: Role
    balance: int = 0  # hundredths of a cent

    @property
    def balance_cents(self) -> float:
        return from_units(self.balance)


@dataclass(frozen=True)
class Transaction:
    """The four fields of an on-chain transaction: sender, recipient, data, reward."""

    sender: str
    to: str
    data: dict[str, Any]
    reward: int = 0

    @property
    def function(self) -> str:
        return self.data["function"]

    def serialize(self) -> bytes:
        body = {"from": self.sender, "to": self.to, "data": self.data, "reward": self.reward}
        return json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")

    def payload_digest(self) -> str:
        raw = json.dumps(self.data, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return hashlib.sha256(raw).hexdigest()


@dataclass(frozen=True)
class LogEntry:
    index: int
    prev_hash: str
    record: bytes
    hash: str

    @property
    def transaction(self) -> Transaction:
        body = json.loads(self.record)
        return Transaction(body["from"], body["to"], body["data"], body["reward"])


def entry_hash(index: int, prev_hash: str, record: bytes) -> str:
    h = hashlib.sha256()
    h.update(index.to_bytes(8, "big"))
    h.update(prev_hash.encode("ascii"))
    h.update(record)
    return h.hexdigest()


def verify_chain(entries: list[LogEntry]) -> bool:
    prev = GENESIS_HASH
    for i, e in enumerate(entries):
        if e.index != i or e.prev_hash != prev:
            return False
        if entry_hash(e.index, e.prev_hash, e.record) != e.hash:
            return False
        prev = e.hash
    return True


@dataclass
class OfferRecord:
    witness_id: str
    eligibility: str
    granularity: int
    cost: int
    deadline: int | None = None
    fpr: float | None = None


@dataclass
class ContractState:
    phase: Phase = Phase.IDLE
    hsp: str | None = None
    target_device: str | None = None
    zone: str | None = None
    duration: int = 0
    packets_per_epoch: int = 0
    offers: dict[str, OfferRecord] = field(default_factory=dict)
    selected: dict[str, int] = field(default_factory=dict)
    committed_statements: dict[str, int] = field(default_factory=dict)
    received_statements: dict[str, int] = field(default_factory=dict)
    paid: set[str] = field(default_factory=set)
    escrow: int = 0


@dataclass(frozen=True)
class Receipt:
    index: int
    function: str
    hash: str
    paid: int = 0  # hundredths transferred to the sender by this transaction


class Ledger:
    """Accounts, one witnessing contract instance and the ordered transaction log.

    Mutation is single-writer; the class does no locking.
    """

    def __init__(self, contract_id: str = CONTRACT_ID) -> None:
        self.contract_id = contract_id
        self.accounts: dict[str, Account] = {}
        self.state = ContractState()
        self.log: list[LogEntry] = []

    # -- accounts ---------------------------------------------------------

    def open_account(self, account_id: str, role: Role, balance_cents: float = 0.0) -> Account:
        if account_id in self.accounts:
            raise DomainError(f"account {account_id} already exists")
        units = to_units(balance_cents)
        if units < 0:
            raise DomainError("opening balance must be non-negative")
        acct = Account(account_id, role, units)
        self.accounts[account_id] = acct
        return acct

    def balance(self, account_id: str) -> float:
        return self._account(account_id).balance_cents

    def total_funds(self) -> int:
        """Sum of balances plus escrow, in hundredths. Conserved by every transaction."""
        return sum(a.balance for a in self.accounts.values()) + self.state.escrow

    def snapshot(self) -> tuple:
        """Comparable copy of the complete mutable state, as plain values."""
        s = self.state
        offers = tuple(
            (w, o.eligibility, o.granularity, o.cost, o.deadline, o.fpr)
            for w, o in sorted(s.offers.items())
        )
        contract = (
            s.phase, s.hsp, s.target_device, s.zone, s.duration, s.packets_per_epoch, offers,
            tuple(sorted(s.selected.items())), tuple(sorted(s.committed_statements.items())),
            tuple(sorted(s.received_statements.items())), tuple(sorted(s.paid)), s.escrow,
        )
        accounts = tuple((a.id, a.role, a.balance) for a in self.accounts.values())
        return accounts, contract, tuple(self.log)

    def _account(self, account_id: str) -> Account:
        try:
            return self.accounts[account_id]
        except KeyError:
            raise UnknownAccount(f"no account {account_id}") from None

    def _require_phase(self, *phases: Phase) -> None:
        if self.state.phase not in phases:
            names = " or ".join(p.value for p in phases)
            raise InvalidPhase(f"contract is {self.state.phase.value}, expected {names}")

    def _append(self, tx: Transaction) -> LogEntry:
        prev = self.log[-1].hash if self.log else GENESIS_HASH
        record = tx.serialize()
        entry = LogEntry(len(self.log), prev, record, entry_hash(len(self.log), prev, record))
        self.log.append(entry)
        return entry

    # -- contract functions -------------------------------------------------
    # Each function validates everything before its first mutation.

    def request(
        self,
        sender: str,
        device_hash: str,
        zone: str,
        duration: int = 1,
        packets_per_epoch: int = 150,
        reward: int = 0,
    ) -> Receipt:
        acct = self._account(sender)
        if acct.role is not Role.HSP:
            raise AccessDenied("request can only be called by the HSP")
        self._require_phase(Phase.IDLE)
        if duration < 1 or packets_per_epoch < 1:
            raise DomainError("duration and packets_per_epoch must be >= 1")

        tx = Transaction(sender, self.contract_id, {
            "function": "request", "device": device_hash, "zone": zone,
            "duration": duration, "packets": packets_per_epoch,
        }, reward)
        s = self.state
        s.phase = Phase.AWAITING_OFFERS
        s.hsp, s.target_device, s.zone = sender, device_hash, zone
        s.duration, s.packets_per_epoch = duration, packets_per_epoch
        entry = self._append(tx)
        return Receipt(entry.index, "request", entry.hash)

    def offer(
        self,
        sender: str,
        eligibility: str,
        granularity: int,
        cost_cents: float,
        deadline: int | None = None,
        fpr: float | None = None,
        reward: int = 0,
    ) -> Receipt:
        acct = self._account(sender)
        self._require_phase(Phase.AWAITING_OFFERS)
        if acct.role is not Role.WITNESS:
            raise AccessDenied(f"{sender} is not a witness account")
        if eligibility != self.state.zone:
            raise IneligibleWitness(f"{sender} answered {eligibility!r}, request is for {self.state.zone!r}")
        units = to_units(cost_cents)
        if granularity < 1 or units <= 0:
            raise DomainError("granularity and cost must be positive")

        data: dict[str, Any] = {
            "function": "offer", "eligibility": eligibility,
            "granularity": granularity, "cost": units, "deadline": deadline,
        }
        if fpr is not None:
            data["fpr"] = fpr
        tx = Transaction(sender, self.contract_id, data, reward)
        self.state.offers[sender] = OfferRecord(sender, eligibility, granularity, units, deadline, fpr)
        entry = self._append(tx)
        return Receipt(entry.index, "offer", entry.hash)

    def select(self, sender: str, chosen: dict[str, float], reward: int = 0) -> Receipt:
        acct = self._account(sender)
        if acct.role is not Role.HSP or sender != self.state.hsp:
            raise AccessDenied("access to select is restricted to the requesting HSP")
        self._require_phase(Phase.AWAITING_OFFERS)
        unknown = sorted(set(chosen) - set(self.state.offers))
        if unknown:
            raise UnknownWitness(f"no offer from {', '.join(unknown)}")
        prices = {w: to_units(p) for w, p in chosen.items()}
        if any(p <= 0 for p in prices.values()):
            raise DomainError("committed prices must be positive")
        total = sum(prices.values())
        if total > acct.balance:
            raise InsufficientFunds(
                f"HSP holds {from_units(acct.balance)}c, selection costs {from_units(total)}c"
            )

        tx = Transaction(sender, self.contract_id, {
            "function": "select", "chosen": {w: prices[w] for w in sorted(prices)},
        }, reward)
        s = self.state
        acct.balance -= total
        s.escrow += total
        s.selected = dict(prices)
        for w in prices:
            per_epoch = math.ceil(s.packets_per_epoch / s.offers[w].granularity)
            s.committed_statements[w] = per_epoch * s.duration
            s.received_statements[w] = 0
        s.phase = Phase.AWAITING_STATEMENTS if prices else Phase.SETTLED
        entry = self._append(tx)
        return Receipt(entry.index, "select", entry.hash)

    def submit(self, sender: str, statement: WitnessStatement, reward: int = 0) -> Receipt:
        acct = self._account(sender)
        self._require_phase(Phase.AWAITING_STATEMENTS)
        s = self.state
        if sender not in s.selected:
            raise NotSelected(f"{sender} was not selected")
        if statement.witness_id != sender:
            raise AccessDenied(f"{sender} cannot submit a statement signed for {statement.witness_id}")

        tx = Transaction(sender, self.contract_id, {
            "function": "submit", "epoch": statement.epoch_id,
            "start": statement.start, "end": statement.end,
            "filter": statement.filter.hex(),
        }, reward)
        s.received_statements[sender] += 1
        paid = 0
        if sender not in s.paid and s.received_statements[sender] >= s.committed_statements[sender]:
            paid = s.selected[sender]
            s.escrow -= paid
            acct.balance += paid
            s.paid.add(sender)
            if s.paid == set(s.selected):
                s.phase = Phase.SETTLED
        entry = self._append(tx)
        return Receipt(entry.index, "submit", entry.hash, paid)

    # -- export -----------------------------------------------------------

    def verify(self) -> bool:
        return verify_chain(self.log)

    def dump(self) -> str:
        """One comma-separated row per transaction: index, prev_hash, from, function, digest, reward."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "prev_hash", "from", "function", "payload_digest", "reward"])
        for e in self.log:
            tx = e.transaction
            w.writerow([e.index, e.prev_hash, tx.sender, tx.function, tx.payload_digest(), tx.reward])
        return buf.getvalue()
