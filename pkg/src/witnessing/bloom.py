"""Fixed-size bloom filters sized from a target false-positive rate.

A witness statement is one of these filters. The filter size ``M`` is
fixed (256 bits by default, one on-chain transaction), and the number of
elements it may hold follows from the false-positive rate the witness
commits to::

    n = floor(-M (ln 2)^2 / ln f)
    k = max(1, round((M / n) ln 2))

Bit positions use double hashing, ``h1 + i*h2 mod M`` for ``i < k``,
where ``h1`` and ``h2`` are the two halves of the 128-bit XXH3 hash of the
element under the filter's 64-bit seed.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field

import xxhash

from .errors import CapacityError, DomainError

DEFAULT_FILTER_BITS = 256

LN2 = math.log(2.0)

# magic, version, M, n, inserted_count, k, seed, f
_HEADER = struct.Struct(">2sBIIIHQd")
_MAGIC = b"WB"
_VERSION = 1
HEADER_SIZE = _HEADER.size


@dataclass(frozen=True)
class BloomParams:
    filter_bits: int
    capacity: int
    hash_count: int
    target_fpr: float

    def __post_init__(self) -> None:
        if not 0.0 < self.target_fpr < 1.0:
            raise DomainError(f"target_fpr must be in (0, 1), got {self.target_fpr}")
        if self.filter_bits < 8 or self.filter_bits % 8:
            raise DomainError(f"filter_bits must be a multiple of 8 and >= 8, got {self.filter_bits}")
        if self.capacity < 1:
            raise DomainError(f"capacity must be >= 1, got {self.capacity}")
        if self.hash_count < 1:
            raise DomainError(f"hash_count must be >= 1, got {self.hash_count}")

    @property
    def payload_bytes(self) -> int:
        return self.filter_bits // 8


def capacity_for(filter_bits: int, fpr: float) -> int:
    """Largest element count keeping a ``filter_bits`` filter at ``fpr``."""
    if not 0.0 < fpr < 1.0:
        raise DomainError(f"false-positive rate must be in (0, 1), got {fpr}")
    if filter_bits < 8:
        raise DomainError(f"filter must hold at least 8 bits, got {filter_bits}")
    return math.floor(-filter_bits * LN2 * LN2 / math.log(fpr))


def optimal_hash_count(filter_bits: int, capacity: int) -> int:
    return max(1, round(filter_bits / capacity * LN2))


def params_from_error(filter_bits: int = DEFAULT_FILTER_BITS, fpr: float = 0.15) -> BloomParams:
    """Derive capacity and hash count for a filter of ``filter_bits`` bits.

    >>> p = params_from_error(256, 0.15)
    >>> (p.capacity, p.hash_count)
    (64, 3)
    """
    n = capacity_for(filter_bits, fpr)
    if n < 1:
        # only reachable for tiny M with f close to 0
        raise DomainError(f"a {filter_bits}-bit filter cannot reach fpr={fpr} with one element")
    return BloomParams(filter_bits, n, optimal_hash_count(filter_bits, n), fpr)


def theoretical_fpr(filter_bits: int, hash_count: int, inserted: int) -> float:
    """Expected false-positive probability ``(1 - e^(-k n / M))^k``."""
    if filter_bits <= 0 or hash_count <= 0 or inserted < 0:
        raise DomainError("filter_bits and hash_count must be positive, inserted non-negative")
    return (1.0 - math.exp(-hash_count * inserted / filter_bits)) ** hash_count


def expected_fill_ratio(filter_bits: int, hash_count: int, inserted: int) -> float:
    return 1.0 - math.exp(-hash_count * inserted / filter_bits)


class MembershipResult(enum.Enum):
    DEFINITELY_ABSENT = "definitely_absent"
    POSSIBLY_PRESENT = "possibly_present"

    def __bool__(self) -> bool:
        return self is MembershipResult.POSSIBLY_PRESENT


_MASK64 = (1 << 64) - 1
_hash128 = xxhash.xxh3_128_intdigest


def base_hashes(element: bytes, seed: int) -> tuple[int, int]:
    h = _hash128(element, seed)
    # odd step so the k probes stay distinct when M is a power of two
    return h >> 64, (h & _MASK64) | 1


@dataclass(eq=True)
class BloomFilter:
    """A bloom filter of ``params.filter_bits`` bits.

    Bits are stored most-significant-bit first: bit 0 is the high bit of
    byte 0, matching the serialized payload layout.
    """

    params: BloomParams
    hash_seed: int = 0
    bits: bytearray = field(default=None)  # type: ignore[assignment]
    inserted_count: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.hash_seed < 2**64:
            raise DomainError(f"hash_seed must fit in 64 bits, got {self.hash_seed}")
        if self.bits is None:
            self.bits = bytearray(self.params.payload_bytes)
        elif len(self.bits) != self.params.payload_bytes:
            raise DomainError(
                f"bit array holds {len(self.bits)} bytes, expected {self.params.payload_bytes}"
            )
        else:
            self.bits = bytearray(self.bits)

    @classmethod
    def from_error(cls, filter_bits: int, fpr: float, hash_seed: int = 0) -> BloomFilter:
        return cls(params_from_error(filter_bits, fpr), hash_seed)

    def positions(self, element: bytes) -> list[int]:
        m = self.params.filter_bits
        h1, h2 = base_hashes(element, self.hash_seed)
        return [(h1 + i * h2) % m for i in range(self.params.hash_count)]

    @property
    def is_full(self) -> bool:
        return self.inserted_count >= self.params.capacity

    # insert/contains inline the hashing; they run millions of times per simulated day

    def insert(self, element: bytes) -> BloomFilter:
        p = self.params
        if self.inserted_count >= p.capacity:
            raise CapacityError(f"filter already holds its capacity of {p.capacity} elements")
        m, bits = p.filter_bits, self.bits
        h = _hash128(element, self.hash_seed)
        h1, h2 = h >> 64, (h & _MASK64) | 1
        for _ in range(p.hash_count):
            pos = h1 % m
            bits[pos >> 3] |= 0x80 >> (pos & 7)
            h1 += h2
        self.inserted_count += 1
        return self

    def contains(self, element: bytes) -> MembershipResult:
        p = self.params
        m, bits = p.filter_bits, self.bits
        h = _hash128(element, self.hash_seed)
        h1, h2 = h >> 64, (h & _MASK64) | 1
        for _ in range(p.hash_count):
            pos = h1 % m
            if not bits[pos >> 3] & (0x80 >> (pos & 7)):
                return MembershipResult.DEFINITELY_ABSENT
            h1 += h2
        return MembershipResult.POSSIBLY_PRESENT

    def __contains__(self, element: bytes) -> bool:
        return self.contains(element) is MembershipResult.POSSIBLY_PRESENT

    def popcount(self) -> int:
        return int.from_bytes(self.bits, "big").bit_count()

    def fill_ratio(self) -> float:
        return self.popcount() / self.params.filter_bits

    def expected_fpr(self) -> float:
        """False-positive rate implied by the current load, not the declared target."""
        return theoretical_fpr(self.params.filter_bits, self.params.hash_count, self.inserted_count)

    def to_bytes(self) -> bytes:
        """Serialize as a fixed 33-byte header followed by exactly ``M/8`` payload bytes.

        Header (big-endian): magic ``b"WB"``, version u8, M u32, n u32,
        inserted_count u32, k u16, seed u64, target f as float64.
        """
        p = self.params
        header = _HEADER.pack(
            _MAGIC, _VERSION, p.filter_bits, p.capacity, self.inserted_count,
            p.hash_count, self.hash_seed, p.target_fpr,
        )
        return header + bytes(self.bits)

    @classmethod
    def from_bytes(cls, data: bytes) -> BloomFilter:
        if len(data) < HEADER_SIZE:
            raise DomainError(f"need at least {HEADER_SIZE} bytes, got {len(data)}")
        magic, version, m, n, inserted, k, seed, f = _HEADER.unpack_from(data)
        if magic != _MAGIC or version != _VERSION:
            raise DomainError("not a serialized witness bloom filter")
        params = BloomParams(m, n, k, f)
        payload = data[HEADER_SIZE:]
        if len(payload) != params.payload_bytes:
            raise DomainError(f"payload is {len(payload)} bytes, header says {params.payload_bytes}")
        return cls(params, seed, bytearray(payload), inserted)

    def hex(self) -> str:
        return self.to_bytes().hex()

    @classmethod
    def from_hex(cls, text: str) -> BloomFilter:
        return cls.from_bytes(bytes.fromhex(text))
