"""Slicing one epoch of overheard packets into bloom-filter witness statements."""

from __future__ import annotations

import bisect
import csv
import io
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from .bloom import BloomFilter, BloomParams
from .errors import DomainError, StatementNotFound, TraceFormatError
from .seeding import derive_seed

Packet = tuple[int, bytes]


@dataclass(frozen=True)
class StatementPlan:
    total_packets: int
    per_filter: int
    statement_count: int


def plan_statements(total_packets: int, per_filter: int) -> StatementPlan:
    """Number of statements needed to cover ``total_packets`` at ``per_filter`` each.

    Rounds up: 150 packets at 64 per filter need 3 statements.
    """
    if total_packets < 1 or per_filter < 1:
        raise DomainError(
            f"packet count and filter capacity must be >= 1, got {total_packets}, {per_filter}"
        )
    return StatementPlan(total_packets, per_filter, math.ceil(total_packets / per_filter))


@dataclass(frozen=True)
class WitnessStatement:
    witness_id: str
    epoch_id: int
    seq_range: tuple[int, int]
    filter: BloomFilter
    declared_fpr: float

    def __post_init__(self) -> None:
        start, end = self.seq_range
        if end < start:
            raise DomainError(f"empty sequence range {self.seq_range}")
        if end - start + 1 > self.filter.params.capacity:
            raise DomainError("sequence range exceeds filter capacity")
        if self.filter.inserted_count != end - start + 1:
            raise DomainError("inserted_count does not match the sequence range")
        if self.declared_fpr != self.filter.params.target_fpr:
            raise DomainError("declared fpr differs from the filter's target")

    @property
    def start(self) -> int:
        return self.seq_range[0]

    @property
    def end(self) -> int:
        return self.seq_range[1]

    def covers(self, seq: int) -> bool:
        return self.seq_range[0] <= seq <= self.seq_range[1]


def statement_seed(witness_id: str, epoch_id: int, index: int, seed: int = 0) -> int:
    return derive_seed("statement", seed, witness_id, epoch_id, index)


def build_statements(
    packets: Sequence[Packet],
    params: BloomParams,
    witness_id: str,
    epoch_id: int,
    seed: int = 0,
) -> list[WitnessStatement]:
    """Partition ``packets`` in order into filters of ``params.capacity`` packets.

    Sequence numbers must be consecutive. Packet bytes are inserted verbatim. Each statement gets its own hash
    seed derived from (seed, witness, epoch, index) so false positives are
    independent across witnesses.
    """
    prev = None
    for seq, _ in packets:
        if prev is not None and seq <= prev:
            kind = "duplicate" if seq == prev else "non-increasing"
            raise DomainError(f"{kind} packet sequence number {seq} after {prev}")
        if prev is not None and seq != prev + 1:
            # a statement's range must equal its inserted count
            raise DomainError(f"gap in packet sequence between {prev} and {seq}")
        prev = seq

    n = params.capacity
    statements = []
    for index, lo in enumerate(range(0, len(packets), n)):
        chunk = packets[lo:lo + n]
        bf = BloomFilter(params, statement_seed(witness_id, epoch_id, index, seed))
        for _, payload in chunk:
            bf.insert(payload)
        statements.append(
            WitnessStatement(witness_id, epoch_id, (chunk[0][0], chunk[-1][0]), bf, params.target_fpr)
        )
    return statements


def statement_covering(statements: Sequence[WitnessStatement], seq: int) -> WitnessStatement:
    """Return the statement whose range contains ``seq``.

    ``statements`` must be sorted by range start, as produced by
    :func:`build_statements`.
    """
    starts = [s.start for s in statements]
    i = bisect.bisect_right(starts, seq) - 1
    if i >= 0 and statements[i].covers(seq):
        return statements[i]
    raise StatementNotFound(f"no statement covers packet {seq}")


STATEMENT_FIELDS = ("witness_id", "epoch_id", "start", "end", "fpr", "filter_hex")


def dump_statements(statements: Iterable[WitnessStatement]) -> str:
    """Newline-delimited export, one comma-separated record per statement."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STATEMENT_FIELDS)
    for s in statements:
        w.writerow([s.witness_id, s.epoch_id, s.start, s.end, repr(s.declared_fpr), s.filter.hex()])
    return buf.getvalue()


def load_statements(text: str) -> list[WitnessStatement]:
    rows = csv.reader(io.StringIO(text))
    header = next(rows, None)
    if header is None:
        return []
    if tuple(header) != STATEMENT_FIELDS:
        raise TraceFormatError(f"unexpected statement header {header}", line=1)
    out = []
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        try:
            wid, epoch, start, end, fpr, hexed = row
            bf = BloomFilter.from_hex(hexed)
            out.append(WitnessStatement(wid, int(epoch), (int(start), int(end)), bf, float(fpr)))
        except (ValueError, DomainError) as exc:
            raise TraceFormatError(str(exc), line=lineno) from exc
    return out
