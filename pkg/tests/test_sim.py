from __future__ import annotations

from dataclasses import replace
from importlib import resources

import numpy as np
import pytest

from witnessing.errors import DomainError, SpecError
from witnessing.sim import (
    SimConfig,
    ccdf_csv,
    epoch_seed,
    make_packets,
    run_day,
    run_protocol_epoch,
    tamper,
)
from witnessing.trace import EpochScenario, TraceSpec, generate_synthetic, parse_sessions, parse_zone_map

CONFIG = SimConfig()


def _fixture(stem):
    data = resources.files("witnessing") / "data"
    return (
        parse_sessions((data / f"{stem}_sessions.csv").read_text()),
        parse_zone_map((data / f"{stem}_zones.csv").read_text()),
    )


def _scenario(h, l, epoch=60):
    return EpochScenario("z", epoch, (epoch * 10, epoch * 10 + 10), h, l)


def test_defaults():
    assert CONFIG.total_packets == 150
    assert CONFIG.epochs_per_day == 144
    m = CONFIG.market()
    assert (m.c_high, m.c_low) == (8.31, 5.54)
    assert CONFIG.is_daytime(48) and not CONFIG.is_daytime(47) and not CONFIG.is_daytime(102)


def test_config_text_roundtrip():
    cfg = replace(CONFIG, budget=42.5, master_seed=9)
    assert SimConfig.from_text(cfg.to_text()) == cfg
    assert SimConfig.from_text("# only a comment\nbudget = 30\n").budget == 30.0


@pytest.mark.parametrize(
    "text, field",
    [("nope=1\n", "nope"), ("budget=abc\n", "budget"), ("f_high=1.5\n", "f_high"),
     ("epoch_minutes=7\n", "epoch_minutes"), ("junk\n", "line 1")],
)
def test_config_errors_name_field(text, field):
    with pytest.raises(SpecError) as err:
        SimConfig.from_text(text)
    assert err.value.field == field


def test_make_packets():
    p = make_packets(150, 3, np.random.default_rng(0))
    assert [s for s, _ in p] == list(range(1, 151))
    assert all(len(d) == 40 and d[:4] == s.to_bytes(4, "big") for s, d in p)
    assert p == make_packets(150, 3, np.random.default_rng(0))


def test_tamper_changes_exactly_the_reported_packets():
    rng = np.random.default_rng(1)
    packets = make_packets(2000, 0, rng)
    received, hit = tamper(packets, 0.3, rng)
    changed = {s for (s, a), (_, b) in zip(packets, received) if a != b}
    assert changed == hit
    assert abs(len(hit) / 2000 - 0.3) < 0.04
    assert tamper(packets, 0, rng)[1] == frozenset()
    with pytest.raises(DomainError):
        tamper(packets, 1.5, rng)


def test_epoch_without_witnesses():
    o = run_protocol_epoch(_scenario(0, 0), CONFIG, 1)
    assert (o.high_selected, o.low_selected, o.total_cost, o.theoretical_error) == (0, 0, 0.0, 1.0)
    assert o.flagged_count == 0 and not o.optimization_engaged


def test_low_density_epoch_buys_everyone():
    o = run_protocol_epoch(_scenario(2, 6), CONFIG, 1)
    assert (o.high_selected, o.low_selected, o.total_cost) == (2, 6, 49.86)
    assert o.theoretical_error == pytest.approx(4.13578e-5, rel=1e-4)
    assert not o.optimization_engaged


def test_high_density_epoch_saturates():
    o = run_protocol_epoch(_scenario(6, 24), CONFIG, 1)
    assert (o.high_selected, o.low_selected, o.total_cost) == (6, 7, 88.64)
    assert o.optimization_engaged
    assert o.all_witness_cost == 182.82


def test_flags_only_tampered_and_detection_near_theory():
    detected = tampered = 0
    for seed in range(60):
        o = run_protocol_epoch(_scenario(1, 1), replace(CONFIG, tamper_rate=0.5), seed)
        assert o.flagged_count == o.detected_count
        detected += o.detected_count
        tampered += o.tampered_count
    tau = 1 - 0.15 * 0.35
    se = (tau * (1 - tau) / tampered) ** 0.5
    assert abs(detected / tampered - tau) < 4 * se


def test_epoch_seed_is_stable_and_distinct():
    assert epoch_seed(CONFIG, "a", 1) == epoch_seed(CONFIG, "a", 1)
    assert len({epoch_seed(CONFIG, z, e) for z in "ab" for e in range(3)}) == 6


def test_fixture_days():
    low = run_day(*_fixture("low_density"), CONFIG, focus=["4ap5"])
    rows = list(low.rows())
    assert len(rows) == 144
    assert not any(o.optimization_engaged for o in rows)
    assert min(o.theoretical_error for o in rows) == pytest.approx(0.15**2 * 0.35**6, rel=1e-9)
    assert max(o.low_available for o in rows) <= 6

    high = run_day(*_fixture("high_density"), CONFIG, focus=["4ap2"])
    rows = list(high.rows())
    assert any(o.optimization_engaged for o in rows)
    assert max(o.total_cost for o in rows) <= 90
    assert min(o.theoretical_error for o in rows) <= 2.6e-8
    assert max(o.low_available for o in rows) == 24
    assert rows[-1].low_available == 5


def test_unknown_focus_zone():
    with pytest.raises(DomainError):
        run_day(*_fixture("low_density"), CONFIG, focus=["nope"])


def test_workers_do_not_change_results():
    spec = replace(TraceSpec(), zone_count=6, degree_mean=2, degree_max=4, sessions_per_zone_per_hour=3)
    sessions, zones = generate_synthetic(spec, 4)
    focus = sorted(zones.zones)[:2]
    a = run_day(sessions, zones, CONFIG, focus=focus, workers=1)
    b = run_day(sessions, zones, CONFIG, focus=focus, workers=2)
    assert a.epochs_csv() == b.epochs_csv()


def test_report_tables():
    report = run_day(*_fixture("low_density"), CONFIG, focus=["4ap5"])
    assert len(report.daytime()) == 54
    assert len(report.max_cost_per_zone()) == 1
    text = report.epochs_csv().splitlines()
    assert text[0].startswith("zone,epoch,H_avail,L_avail,H_sel,L_sel,cost,error")
    assert len(text) == 145
    assert ccdf_csv([(1.0, 0.5)]) == "x,fraction\n1.00,0.500000\n"
