"""Checking received packets against the selected witnesses' statements."""

from __future__ import annotations

import bisect
import enum
import io
import math
from collections.abc import Collection, Iterable, Mapping, Sequence
from dataclasses import dataclass

from .bloom import MembershipResult
from .errors import CoverageError, DomainError
from .statement import Packet, WitnessStatement


def verification_probability(fprs: Iterable[float]) -> float:
    """Probability that at least one witness rejects a tampered packet: ``1 - prod(f_i)``."""
    product = 1.0
    for f in fprs:
        if not 0.0 < f < 1.0:
            raise DomainError(f"false-positive rate must be in (0, 1), got {f}")
        product *= f
    return 1.0 - product


class Verdict(enum.Enum):
    FLAGGED_TAMPERED = "flagged"
    CONSISTENT = "consistent"


@dataclass(frozen=True)
class PacketVerdict:
    seq: int
    verdict: Verdict
    dissenting_witnesses: tuple[str, ...] = ()

    @property
    def flagged(self) -> bool:
        return self.verdict is Verdict.FLAGGED_TAMPERED


def _group(statements: Iterable[WitnessStatement]) -> dict[str, list[WitnessStatement]]:
    grouped: dict[str, list[WitnessStatement]] = {}
    for s in statements:
        grouped.setdefault(s.witness_id, []).append(s)
    for group in grouped.values():
        group.sort(key=lambda s: s.start)
    return grouped


def _index(grouped: Mapping[str, Sequence[WitnessStatement]]) -> list[tuple[str, list[int], Sequence[WitnessStatement]]]:
    return [(wid, [s.start for s in ss], ss) for wid, ss in grouped.items()]


def _check(packet: Packet, index) -> PacketVerdict:
    seq, payload = packet
    dissent = []
    for wid, starts, statements in index:
        i = bisect.bisect_right(starts, seq) - 1
        if i < 0 or not statements[i].covers(seq):
            raise CoverageError(f"witness {wid} has no statement covering packet {seq}")
        if statements[i].filter.contains(payload) is MembershipResult.DEFINITELY_ABSENT:
            dissent.append(wid)
    if dissent:
        return PacketVerdict(seq, Verdict.FLAGGED_TAMPERED, tuple(dissent))
    return PacketVerdict(seq, Verdict.CONSISTENT)


def verify_packet(
    packet: Packet, statements_by_witness: Mapping[str, Sequence[WitnessStatement]]
) -> PacketVerdict:
    """Flag ``packet`` if any witness's covering statement definitely lacks it."""
    grouped = {w: sorted(ss, key=lambda s: s.start) for w, ss in statements_by_witness.items()}
    return _check(packet, _index(grouped))


@dataclass(frozen=True)
class VerificationReport:
    epoch_id: int
    verdicts: tuple[PacketVerdict, ...]
    flagged_count: int
    verification_probability: float
    # None when no ground truth was supplied or nothing was tampered
    empirical_detection_rate: float | None

    def to_text(self) -> str:
        """Tabular export: ``seq,verdict,dissenting`` rows and a summary comment line."""
        buf = io.StringIO()
        buf.write("seq,verdict,dissenting\n")
        for v in self.verdicts:
            buf.write(f"{v.seq},{v.verdict.value},{len(v.dissenting_witnesses)}\n")
        rate = "" if self.empirical_detection_rate is None else f"{self.empirical_detection_rate:.6f}"
        buf.write(
            f"# epoch={self.epoch_id} tau={self.verification_probability:.6f} "
            f"flagged={self.flagged_count} detection_rate={rate}\n"
        )
        return buf.getvalue()


def verify_epoch(
    received: Sequence[Packet],
    statements: Iterable[WitnessStatement],
    epoch_id: int = 0,
    tampered: Collection[int] | None = None,
) -> VerificationReport:
    """Verify every received packet and summarize the epoch.

    ``tampered`` is the adversary's ground-truth set of sequence numbers;
    when given, the report carries the fraction of them that got flagged.
    """
    grouped = _group(statements)
    index = _index(grouped)
    verdicts = tuple(_check(p, index) for p in received)
    flagged = sum(v.flagged for v in verdicts)
    tau = verification_probability(group[0].declared_fpr for group in grouped.values())

    rate = None
    if tampered:
        hits = sum(1 for v in verdicts if v.flagged and v.seq in tampered)
        rate = hits / len(tampered)
    return VerificationReport(epoch_id, verdicts, flagged, tau, rate)


def miss_probability(fprs: Iterable[float]) -> float:
    """Chance that a tampered packet slips past every witness, ``prod(f_i)``."""
    return math.prod(fprs)
