from __future__ import annotations

import json
import subprocess
import sys

import pytest

from witnessing.cli import EXIT_DOMAIN, EXIT_STALE, EXIT_USAGE, main


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def files(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


@pytest.mark.parametrize(
    "argv, expected",
    [
        (["--f", "0.15"], "n=64 k=3 m=3"),
        (["--M", "256", "--f", "0.15", "--N", "150"], "n=64 k=3 m=3"),
        (["--f", "0.35", "--N", "150"], "n=117 k=2 m=2"),
    ],
)
def test_params(argv, expected, capsys):
    code, out, _ = run(["params", *argv], capsys)
    assert code == 0 and out.strip() == expected


@pytest.mark.parametrize("bad", [["--f", "1.5"], ["--f", "0"], ["--f", "x"], ["--M", "0", "--f", ".1"]])
def test_params_usage_errors(bad, capsys):
    with pytest.raises(SystemExit) as err:
        main(["params", *bad])
    assert err.value.code == EXIT_USAGE


def test_params_domain_error(capsys):
    code, _, err = run(["params", "--M", "8", "--f", "0.000001"], capsys)
    assert code == EXIT_DOMAIN and "cannot reach" in err


def test_select_budget(capsys):
    code, out, _ = run(["select", "--budget", "30"], capsys)
    assert code == 0
    assert out.splitlines()[1] == "30.00,2,2,4,27.70,2.756250e-03"
    _, out, _ = run(["select", "--budget", "5"], capsys)
    assert out.splitlines()[1] == "5.00,0,0,0,0.00,1.000000e+00"


def test_select_sweep(capsys):
    code, out, _ = run(["select", "--sweep", "0..120"], capsys)
    rows = out.splitlines()[1:]
    assert code == 0 and len(rows) == 121
    errors = [float(r.split(",")[-1]) for r in rows]
    assert all(a >= b for a, b in zip(errors, errors[1:]))


def test_select_sweep_step_and_bad_range(capsys):
    _, out, _ = run(["select", "--sweep", "0..100:25"], capsys)
    assert [r.split(",")[0] for r in out.splitlines()[1:]] == ["0.00", "25.00", "50.00", "75.00", "100.00"]
    with pytest.raises(SystemExit):
        main(["select", "--sweep", "10..0"])


def test_select_ilp_and_caps(capsys):
    _, out, _ = run(["select", "--budget", "90", "--high-avail", "6", "--low-avail", "24"], capsys)
    assert out.splitlines()[1] == "90.00,6,7,13,88.64,7.328648e-09"
    _, out, _ = run(["select", "--budget", "90", "--ilp"], capsys)
    assert out.splitlines()[1].startswith("90.00,10,1,11,88.64")


def test_select_offers_file(tmp_path, capsys):
    offers = tmp_path / "offers.txt"
    offers.write_text("# id, f, alpha\nap1, 0.15, 2.77\ndev1, 0.35, 2.77\ndev2, 0.35, 2.77\n")
    code, out, _ = run(["select", "--offers", str(offers), "--budget", "14"], capsys)
    assert code == 0
    assert out.splitlines()[1] == "14.00,ap1 dev1,2,13.85,5.250000e-02"
    offers.write_text("ap1, 0.15\n")
    code, _, err = run(["select", "--offers", str(offers), "--budget", "14"], capsys)
    assert code == EXIT_USAGE and "offers line 1" in err


def test_select_plot(tmp_path, capsys):
    code, _, _ = run(["select", "--sweep", "0..120:10", "--plot", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert (tmp_path / "sweep.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_simulate_fixtures(tmp_path, capsys):
    code, out, _ = run(["simulate", "--fixture", "low-density", "--out", str(tmp_path / "low")], capsys)
    assert code == 0 and "engaged=0 " in out
    rows = (tmp_path / "low" / "epochs.csv").read_text().splitlines()[1:]
    assert all(r.split(",")[11] == "0" for r in rows)

    code, out, _ = run(["simulate", "--fixture", "high-density", "--out", str(tmp_path / "high")], capsys)
    assert code == 0 and "max_cost=88.64" in out
    names = set(files(tmp_path / "high"))
    assert {"availability.csv", "epochs.csv", "ccdf_cost.csv", "ccdf_max_cost.csv",
            "config.conf", "manifest.json"} <= names


def test_simulate_needs_inputs(capsys):
    code, _, err = run(["simulate"], capsys)
    assert code == EXIT_USAGE and "--sessions" in err


def test_simulate_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.conf"
    cfg.write_text("budgett=90\n")
    code, _, err = run(["simulate", "--fixture", "low-density", "--config", str(cfg)], capsys)
    assert code == EXIT_USAGE and "budgett" in err


def test_simulate_config_and_seed_recorded(tmp_path, capsys):
    cfg = tmp_path / "c.conf"
    cfg.write_text("budget=30\n")
    out = tmp_path / "o"
    code, _, _ = run(["simulate", "--fixture", "high-density", "--config", str(cfg), "--seed", "5",
                      "--out", str(out)], capsys)
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["master_seed"] == 5 and manifest["config"]["budget"] == 30.0
    assert str(cfg.resolve()) in manifest["inputs"]
    assert "budget=30.0" in (out / "config.conf").read_text()


def test_gen_trace(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["gen-trace", "--seed", "7", "--out", str(a)], capsys)[0] == 0
    assert run(["gen-trace", "--seed", "7", "--out", str(b)], capsys)[0] == 0
    assert files(a) == files(b)
    summary = json.loads((a / "summary.json").read_text())
    assert summary["zones"] == 31
    assert (summary["degree_min"], summary["degree_max"]) == (1, 11)


@pytest.mark.parametrize(
    "spec, field",
    [('{"zone_count": "x"}', "zone_count"), ('{"bogus": 1}', "bogus"),
     ('{"durations": {"short_weight": 2}}', "durations.short_weight"), ("[1, 2]", "<root>"), ("{", "<json>")],
)
def test_gen_trace_bad_spec(tmp_path, capsys, spec, field):
    path = tmp_path / "spec.json"
    path.write_text(spec)
    code, _, err = run(["gen-trace", "--spec", str(path), "--seed", "1"], capsys)
    assert code == EXIT_USAGE
    assert err.startswith(f"usage error: {field}:")


def test_ledger_demo_happy(scripts_dir, tmp_path, capsys):
    code, out, _ = run(["ledger-demo", str(scripts_dir / "happy_path.txt"), "--out", str(tmp_path)], capsys)
    assert code == 0
    assert "# phase=settled escrow=0.00 chain_valid=True" in out
    assert "IneligibleWitness" in out
    balances = (tmp_path / "balances.csv").read_text()
    assert "hsp,hsp,86.15" in balances and "ap1,witness,8.31" in balances
    assert len((tmp_path / "ledger.csv").read_text().splitlines()) == 1 + 9


def test_ledger_demo_witness_selects(scripts_dir, capsys):
    code, out, _ = run(["ledger-demo", str(scripts_dir / "witness_selects.txt")], capsys)
    assert code == 0
    assert "line 5: AccessDenied" in out
    # the rejected select left funds alone; the later HSP select escrowed 8.31
    assert "# phase=awaiting_statements escrow=8.31" in out


def test_ledger_demo_insufficient(scripts_dir, capsys):
    code, out, _ = run(["ledger-demo", str(scripts_dir / "insufficient_funds.txt")], capsys)
    assert code == 0
    assert "InsufficientFunds" in out
    assert "hsp,hsp,10.00" in out and "escrow=0.00" in out


def test_ledger_demo_malformed_script(tmp_path, capsys):
    script = tmp_path / "s.txt"
    script.write_text("account hsp boss 10\n")
    code, _, err = run(["ledger-demo", str(script)], capsys)
    assert code == EXIT_USAGE and "script line 1" in err


def test_missing_file_is_domain_error(tmp_path, capsys):
    code, _, _ = run(["ledger-demo", str(tmp_path / "missing.txt")], capsys)
    assert code == EXIT_DOMAIN


def test_replay_byte_identical(tmp_path, capsys):
    first = tmp_path / "first"
    assert run(["simulate", "--fixture", "low-density", "--plot", "--out", str(first)], capsys)[0] == 0
    second = tmp_path / "second"
    assert run(["replay", str(first / "manifest.json"), "--out", str(second)], capsys)[0] == 0
    assert files(first) == files(second)
    assert any(name.endswith(".png") for name in files(first))


def test_replay_detects_changed_input(tmp_path, scripts_dir, capsys):
    script = tmp_path / "s.txt"
    script.write_text((scripts_dir / "happy_path.txt").read_text())
    out = tmp_path / "o"
    assert run(["ledger-demo", str(script), "--out", str(out)], capsys)[0] == 0
    script.write_text(script.read_text() + "\n# edited\n")
    code, _, err = run(["replay", str(out / "manifest.json"), "--out", str(tmp_path / "o2")], capsys)
    assert code == EXIT_STALE and "changed" in err


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "witnessing", "params", "--f", "0.35"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "n=117 k=2 m=2"
    proc = subprocess.run([sys.executable, "-m", "witnessing", "params", "--f", "1.5"],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_USAGE
