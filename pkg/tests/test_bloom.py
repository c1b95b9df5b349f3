from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from witnessing.bloom import (
    HEADER_SIZE,
    BloomFilter,
    BloomParams,
    MembershipResult,
    capacity_for,
    params_from_error,
    theoretical_fpr,
)
from witnessing.errors import CapacityError, DomainError


def _exact_fpr(m: int, k: int, n: int) -> float:
    """Expected FPR of a filter after n inserts of k distinct uniform positions each.

    Exact Markov chain over the number of set bits, no exponential approximation.
    """
    dist = {0: 1.0}
    for _ in range(n):
        nxt: dict[int, float] = {}
        for x, p in dist.items():
            for new in range(k + 1):
                if new > m - x or k - new > x:
                    continue
                q = math.comb(m - x, new) * math.comb(x, k - new) / math.comb(m, k)
                nxt[x + new] = nxt.get(x + new, 0.0) + p * q
        dist = nxt
    return sum(p * math.comb(x, k) / math.comb(m, k) for x, p in dist.items())


def _capacity_oracle(m: int, f: float) -> int:
    # largest n whose optimal-k error exp(-(M/n) ln2^2) stays at or below f
    n = 0
    while math.exp(-(m / (n + 1)) * math.log(2) ** 2) <= f:
        n += 1
    return n


@pytest.mark.parametrize(
    "f, n, k",
    [(0.15, 64, 3), (0.35, 117, 2), (0.5, 177, 1)],
)
def test_reference_sizes(f, n, k):
    p = params_from_error(256, f)
    assert (p.capacity, p.hash_count) == (n, k)


@given(st.sampled_from([64, 128, 256, 512, 1024]), st.floats(0.01, 0.9))
def test_capacity_matches_search_oracle(m, f):
    assert capacity_for(m, f) == _capacity_oracle(m, f)


@pytest.mark.parametrize("f", [0.0, 1.0, -0.1, 1.5])
def test_fpr_outside_unit_interval_rejected(f):
    with pytest.raises(DomainError):
        params_from_error(256, f)


def test_tiny_filter_cannot_hold_one_element():
    with pytest.raises(DomainError):
        params_from_error(8, 1e-6)


def test_params_validation():
    with pytest.raises(DomainError):
        BloomParams(100, 10, 2, 0.1)
    with pytest.raises(DomainError):
        BloomParams(256, 0, 2, 0.1)


def test_insert_then_contains():
    bf = BloomFilter.from_error(256, 0.15, hash_seed=7)
    items = [i.to_bytes(4, "big") for i in range(64)]
    for x in items:
        bf.insert(x)
    assert all(bf.contains(x) is MembershipResult.POSSIBLY_PRESENT for x in items)
    assert all(x in bf for x in items)
    assert bf.is_full


def test_empty_filter_rejects_everything():
    bf = BloomFilter.from_error(256, 0.15)
    assert bf.contains(b"anything") is MembershipResult.DEFINITELY_ABSENT
    assert not bf.contains(b"anything")


def test_overfill_raises():
    bf = BloomFilter.from_error(256, 0.5)
    for i in range(bf.params.capacity):
        bf.insert(i.to_bytes(4, "big"))
    with pytest.raises(CapacityError):
        bf.insert(b"one too many")


def test_positions_match_insert_layout():
    bf = BloomFilter.from_error(256, 0.15, hash_seed=99)
    bf.insert(b"x")
    expected = 0
    for pos in bf.positions(b"x"):
        expected |= 1 << (255 - pos)
    assert int.from_bytes(bf.bits, "big") == expected


def test_seed_changes_positions():
    a = BloomFilter.from_error(256, 0.15, hash_seed=1)
    b = BloomFilter.from_error(256, 0.15, hash_seed=2)
    assert a.positions(b"same") != b.positions(b"same")


def test_fill_ratio_near_expectation():
    ratios = []
    for seed in range(50):
        bf = BloomFilter.from_error(256, 0.15, hash_seed=seed)
        for i in range(64):
            bf.insert(f"{seed}-{i}".encode())
        ratios.append(bf.fill_ratio())
    # 1 - (1 - 1/M)^(kn), computed independently of the exponential approximation
    exact = 1 - (1 - 1 / 256) ** (3 * 64)
    assert abs(np.mean(ratios) - exact) < 0.01


def test_empirical_fpr_close_to_closed_form():
    rng = np.random.default_rng(5)
    bf = BloomFilter.from_error(256, 0.35, hash_seed=11)
    for _ in range(bf.params.capacity):
        bf.insert(rng.bytes(16))
    probes = 20_000
    hits = sum(rng.bytes(17) in bf for _ in range(probes))
    # single filter: compare against its own realized fill, k probes per lookup
    realized = bf.fill_ratio() ** bf.params.hash_count
    assert abs(hits / probes - realized) < 4 * math.sqrt(realized * (1 - realized) / probes) + 0.02


def test_theoretical_fpr_values():
    assert theoretical_fpr(256, 3, 64) == pytest.approx(0.14689, abs=1e-5)
    assert theoretical_fpr(256, 3, 0) == 0.0
    with pytest.raises(DomainError):
        theoretical_fpr(0, 3, 1)


@given(
    st.sampled_from([0.05, 0.15, 0.35, 0.5]),
    st.integers(0, 2**64 - 1),
    st.lists(st.binary(min_size=1, max_size=40), max_size=60, unique=True),
)
def test_roundtrip(f, seed, items):
    bf = BloomFilter.from_error(256, f, hash_seed=seed)
    for x in items[: bf.params.capacity]:
        bf.insert(x)
    data = bf.to_bytes()
    assert len(data) == HEADER_SIZE + 32
    back = BloomFilter.from_bytes(data)
    assert back == bf
    assert BloomFilter.from_hex(bf.hex()) == bf
    assert all(x in back for x in items[: bf.params.capacity])


def test_from_bytes_rejects_garbage():
    bf = BloomFilter.from_error(256, 0.15)
    data = bf.to_bytes()
    with pytest.raises(DomainError):
        BloomFilter.from_bytes(data[:10])
    with pytest.raises(DomainError):
        BloomFilter.from_bytes(b"XX" + data[2:])
    with pytest.raises(DomainError):
        BloomFilter.from_bytes(data + b"\x00")


def test_wrong_bit_array_length():
    with pytest.raises(DomainError):
        BloomFilter(params_from_error(256, 0.15), 0, bytearray(31))


@pytest.mark.parametrize("f, exact", [(0.15, 0.147597), (0.35, 0.360078)])
def test_full_filter_fpr_matches_exact_chain(f, exact):
    p = params_from_error(256, f)
    assert _exact_fpr(256, p.hash_count, p.capacity) == pytest.approx(exact, abs=1e-6)
    rng = np.random.default_rng(17)
    rates = []
    for _ in range(300):
        bf = BloomFilter(p, int(rng.integers(2**63)))
        data = rng.bytes(16 * p.capacity)
        for j in range(p.capacity):
            bf.insert(data[16 * j:16 * j + 16])
        probes = rng.bytes(17 * 300)
        rates.append(sum(probes[17 * j:17 * j + 17] in bf for j in range(300)) / 300)
    se = np.std(rates, ddof=1) / math.sqrt(len(rates))
    assert abs(np.mean(rates) - exact) < 4 * se
