"""Command-line interface.

Subcommands: ``params``, ``select``, ``simulate``, ``gen-trace``,
``ledger-demo`` and ``replay``. With ``--out DIR`` every subcommand writes
its tables plus a ``manifest.json``; ``replay manifest.json --out DIR2``
re-runs it and reproduces the same files byte for byte.

Exit codes: 0 success, 2 usage error (bad flags, malformed spec or
config), 3 domain error, 4 input files changed since the manifest.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import shlex
import sys
from collections.abc import Sequence
from importlib import resources
from pathlib import Path

from . import __version__
from .bloom import DEFAULT_FILTER_BITS, BloomParams, optimal_hash_count, params_from_error
from .errors import SpecError, WitnessingError
from .ledger import ContractError, Ledger, Role
from .select import (
    SweepRow,
    TwoClassMarket,
    WitnessOffer,
    select_general,
    select_max_spend,
    select_two_class,
)
from .sim import SimConfig, ccdf_csv, make_packets, run_day
from .statement import build_statements, plan_statements
from .trace import (
    TraceSpec,
    availability_csv,
    availability_table,
    generate_synthetic,
    parse_sessions,
    parse_zone_map,
    serialize_sessions,
    serialize_zone_map,
    trace_summary,
)

EXIT_USAGE = 2
EXIT_DOMAIN = 3
EXIT_STALE = 4

FIXTURES = {
    "low-density": ("low_density", "4ap5"),
    "high-density": ("high_density", "4ap2"),
}


class StaleInput(WitnessingError):
    pass


def probability(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"must be in (0, 1), got {v}")
    return v


def positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def non_negative(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if v < 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be a finite non-negative number, got {v}")
    return v


class BudgetRange(list):
    """Budgets parsed from ``A..B[:STEP]``; keeps the source text for manifests."""

    text = ""


def budget_range(text: str) -> BudgetRange:
    """``A..B`` or ``A..B:STEP`` (inclusive, cents)."""
    try:
        span, _, step = text.partition(":")
        lo, hi = (float(x) for x in span.split(".."))
        step_v = float(step) if step else 1.0
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A..B[:STEP], got {text!r}") from None
    if step_v <= 0 or hi < lo or lo < 0:
        raise argparse.ArgumentTypeError(f"need 0 <= A <= B and STEP > 0, got {text!r}")
    count = int(math.floor((hi - lo) / step_v + 1e-9)) + 1
    out = BudgetRange(round(lo + i * step_v, 6) for i in range(count))
    out.text = text
    return out


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class Run:
    """Collects output files and input digests for one subcommand invocation."""

    def __init__(self, args: argparse.Namespace, argv: list[str]) -> None:
        self.args = args
        self.argv = argv
        self.out: Path | None = args.out
        self.inputs: dict[str, str] = {}
        self.extra: dict[str, object] = {}
        if self.out is not None:
            self.out.mkdir(parents=True, exist_ok=True)

    def read_input(self, path: Path) -> str:
        data = path.read_bytes()
        self.inputs[str(path.resolve())] = _digest(data)
        return data.decode("utf-8")

    def read_fixture(self, name: str) -> str:
        data = (resources.files("witnessing") / "data" / name).read_bytes()
        self.inputs[f"fixture:{name}"] = _digest(data)
        return data.decode("utf-8")

    def emit(self, name: str, text: str, echo: bool = False) -> None:
        if echo or self.out is None:
            sys.stdout.write(text)
        if self.out is not None:
            (self.out / name).write_text(text)

    def finish(self) -> None:
        if self.out is None:
            return
        manifest = {
            "subcommand": self.args.command,
            "argv": self.argv,
            "inputs": dict(sorted(self.inputs.items())),
            "version": __version__,
            **self.extra,
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# -- params ------------------------------------------------------------------


def cmd_params(run: Run) -> None:
    a = run.args
    p = params_from_error(a.M, a.f)
    plan = plan_statements(a.N, p.capacity)
    text = (
        "M,f,n,k,N,m\n"
        f"{p.filter_bits},{p.target_fpr!r},{p.capacity},{p.hash_count},{plan.total_packets},{plan.statement_count}\n"
    )
    print(f"n={p.capacity} k={p.hash_count} m={plan.statement_count}")
    if a.out is not None:
        run.emit("params.csv", text)


# -- select ------------------------------------------------------------------


def read_offers(text: str, total_packets: int, filter_bits: int) -> list[WitnessOffer]:
    """One offer per line: ``id, f, alpha``. Blank lines and ``#`` comments are skipped."""
    offers = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise SpecError(f"offers line {lineno}", "expected id, f, alpha")
        try:
            f, alpha = float(parts[1]), float(parts[2])
        except ValueError:
            raise SpecError(f"offers line {lineno}", "f and alpha must be numbers") from None
        offers.append(WitnessOffer.priced(parts[0], f, alpha, total_packets, filter_bits))
    return offers


def _selection_row(budget: float, r) -> str:
    chosen = f"{r.high},{r.low}" if r.high is not None else " ".join(r.chosen)
    return f"{budget:.2f},{chosen},{r.count},{r.total_cost:.2f},{r.verification_error:.6e}\n"


def cmd_select(run: Run) -> None:
    a = run.args
    budgets = a.sweep if a.sweep is not None else [a.budget]
    if a.offers is not None:
        offers = read_offers(run.read_input(a.offers), a.N, a.M)
        text = "budget,chosen,count,cost,error\n"
        for c in budgets:
            text += _selection_row(c, select_general(offers, c))
        run.emit("selection.csv", text, echo=True)
        return

    market = TwoClassMarket.from_prices(a.f_high, a.f_low, a.alpha, a.N, a.M, a.high_avail, a.low_avail)
    solver = select_max_spend if a.ilp else select_two_class
    rows = [SweepRow(c, solver(market, c)) for c in budgets]
    text = "budget,H,L,count,cost,error\n" + "".join(_selection_row(r.budget, r.result) for r in rows)
    run.emit("selection.csv", text, echo=True)
    if a.plot and run.out is not None and len(rows) > 1:
        from . import plots

        plots.plot_budget_sweep(rows, run.out / "sweep.png")


# -- simulate ------------------------------------------------------------------


def cmd_simulate(run: Run) -> None:
    a = run.args
    config = SimConfig.from_text(run.read_input(a.config)) if a.config else SimConfig()
    if a.seed is not None:
        config = SimConfig(**{**config.__dict__, "master_seed": a.seed})
    focus = list(a.zone) if a.zone else None
    if a.fixture:
        stem, zone = FIXTURES[a.fixture]
        sessions = parse_sessions(run.read_fixture(f"{stem}_sessions.csv"))
        zones = parse_zone_map(run.read_fixture(f"{stem}_zones.csv"))
        focus = focus or [zone]
    else:
        if a.sessions is None or a.zones is None:
            raise SpecError("--sessions/--zones", "both files are required without --fixture")
        sessions = parse_sessions(run.read_input(a.sessions))
        zones = parse_zone_map(run.read_input(a.zones))

    report = run_day(sessions, zones, config, focus=focus, workers=a.workers)
    run.extra["config"] = {k: v for k, v in sorted(config.__dict__.items())}
    run.extra["master_seed"] = config.master_seed

    table = [s for s in availability_table(sessions, zones, config.epoch_minutes)
             if s.zone in report.outcomes]
    run.emit("availability.csv", availability_csv(table))
    run.emit("epochs.csv", report.epochs_csv())
    run.emit("ccdf_cost.csv", ccdf_csv(report.cost_ccdf()))
    run.emit("ccdf_max_cost.csv", ccdf_csv(report.max_cost_ccdf()))
    run.emit("config.conf", config.to_text())

    rows = list(report.rows())
    engaged = sum(o.optimization_engaged for o in rows)
    worst = max((o.total_cost for o in rows), default=0.0)
    best = min((o.theoretical_error for o in rows), default=1.0)
    print(f"zones={len(report.outcomes)} epochs={len(rows)} engaged={engaged} "
          f"max_cost={worst:.2f} min_error={best:.3e}")

    if a.plot and run.out is not None:
        from . import plots

        if focus is not None:
            plotted = sorted(report.outcomes)
        else:
            # least and most crowded zones by peak all-witness cost
            peak = {z: max(o.all_witness_cost for o in oc) for z, oc in report.outcomes.items()}
            ranked = sorted(peak, key=lambda z: (peak[z], z))
            plotted = sorted({ranked[0], ranked[-1]})
        for z in plotted:
            plots.plot_zone_day(report.outcomes[z], run.out / f"zone_{z}.png", config.budget,
                                config.epoch_minutes)
        plots.plot_ccdf(report.cost_ccdf(), run.out / "ccdf_cost.png",
                        "cost of all available witnesses per epoch (cents)", config.budget)
        plots.plot_ccdf(report.max_cost_ccdf(), run.out / "ccdf_max_cost.png",
                        "maximum cost per zone (cents)", config.budget)


# -- gen-trace -----------------------------------------------------------------


def cmd_gen_trace(run: Run) -> None:
    a = run.args
    text = run.read_input(a.spec) if a.spec else run.read_fixture("calibrated_trace_spec.json")
    spec = TraceSpec.from_json(text)
    sessions, zones = generate_synthetic(spec, a.seed)
    run.extra["master_seed"] = a.seed
    run.emit("sessions.csv", serialize_sessions(sessions))
    run.emit("zones.csv", serialize_zone_map(zones))
    summary = trace_summary(sessions, zones)
    run.emit("summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if run.out is not None:
        print(" ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in summary.items()))


# -- ledger-demo ---------------------------------------------------------------


def _kv(tokens: Sequence[str], lineno: int) -> dict[str, str]:
    out = {}
    for t in tokens:
        if "=" not in t:
            raise SpecError(f"script line {lineno}", f"expected key=value, got {t!r}")
        k, v = t.split("=", 1)
        out[k] = v
    return out


def _num(kv: dict[str, str], key: str, lineno: int, conv=float, default=None):
    if key not in kv:
        if default is not None:
            return default
        raise SpecError(f"script line {lineno}", f"missing {key}=")
    try:
        return conv(kv[key])
    except ValueError:
        raise SpecError(f"script line {lineno}", f"bad value for {key}: {kv[key]!r}") from None


class ScriptRunner:
    """Drives a :class:`Ledger` from the line-oriented protocol script format.

    Lines::

        account <id> <hsp|witness|other> <balance_cents>
        request <hsp> device=<hash> zone=<zone> [duration=1] [packets=150]
        offer <witness> zone=<zone> granularity=<n> cost=<cents> [deadline=<e>] [fpr=<f>]
        select <hsp> <witness>=<cents> ...
        submit <witness> [all]

    ``submit`` sends the witness's next statement, built from seeded
    packets at its offered granularity; once all are sent it resends the
    last one.
    """

    def __init__(self, seed: int = 0, filter_bits: int = DEFAULT_FILTER_BITS) -> None:
        self.ledger = Ledger()
        self.seed = seed
        self.filter_bits = filter_bits
        self.events: list[str] = []
        self._queues: dict[str, list] = {}
        self._sent: dict[str, int] = {}

    def _statements(self, wid: str):
        if wid not in self._queues:
            import numpy as np

            st = self.ledger.state
            offer = st.offers[wid]
            n = offer.granularity
            fpr = offer.fpr if offer.fpr is not None else math.exp(-self.filter_bits * math.log(2) ** 2 / n)
            params = BloomParams(self.filter_bits, n, optimal_hash_count(self.filter_bits, n), fpr)
            total = st.packets_per_epoch
            stmts = []
            for epoch in range(st.duration):
                packets = make_packets(total, epoch, np.random.default_rng([self.seed, epoch]))
                stmts.extend(build_statements(packets, params, wid, epoch, self.seed))
            self._queues[wid] = stmts
            self._sent[wid] = 0
        return self._queues[wid]

    def _submit_one(self, wid: str) -> None:
        stmts = self._statements(wid)
        i = min(self._sent[wid], len(stmts) - 1)
        receipt = self.ledger.submit(wid, stmts[i])
        self._sent[wid] = i + 1
        note = f" paid={receipt.paid / 100:.2f}" if receipt.paid else ""
        self.events.append(f"ok submit {wid} [{stmts[i].start},{stmts[i].end}]{note}")

    def apply(self, line: str, lineno: int) -> None:
        tokens = shlex.split(line, comments=True)
        if not tokens:
            return
        op, rest = tokens[0], tokens[1:]
        if op != "account" and not rest:
            raise SpecError(f"script line {lineno}", f"{op} needs a sender")
        L = self.ledger
        try:
            if op == "account":
                if len(rest) != 3 or rest[1] not in {r.value for r in Role}:
                    raise SpecError(f"script line {lineno}", "account <id> <hsp|witness|other> <cents>")
                L.open_account(rest[0], Role(rest[1]), _num({"b": rest[2]}, "b", lineno))
                self.events.append(f"ok account {rest[0]}")
                return
            sender, kv_tokens = rest[0], rest[1:]
            if op == "request":
                kv = _kv(kv_tokens, lineno)
                L.request(sender, kv.get("device", ""), kv.get("zone", ""),
                          _num(kv, "duration", lineno, int, 1), _num(kv, "packets", lineno, int, 150))
            elif op == "offer":
                kv = _kv(kv_tokens, lineno)
                deadline = _num(kv, "deadline", lineno, int) if "deadline" in kv else None
                fpr = _num(kv, "fpr", lineno) if "fpr" in kv else None
                L.offer(sender, kv.get("zone", ""), _num(kv, "granularity", lineno, int),
                        _num(kv, "cost", lineno), deadline, fpr)
            elif op == "select":
                kv = _kv(kv_tokens, lineno)
                L.select(sender, {w: _num(kv, w, lineno) for w in kv})
            elif op == "submit":
                if sender not in L.state.offers:
                    # never offered, so the contract rejects before reading the statement
                    L.submit(sender, None)  # type: ignore[arg-type]
                if kv_tokens == ["all"]:
                    while self._sent.get(sender, 0) < len(self._statements(sender)):
                        self._submit_one(sender)
                elif kv_tokens:
                    raise SpecError(f"script line {lineno}", "submit <witness> [all]")
                else:
                    self._submit_one(sender)
                return
            else:
                raise SpecError(f"script line {lineno}", f"unknown operation {op!r}")
            self.events.append(f"ok {op} {sender}")
        except ContractError as exc:
            self.events.append(f"line {lineno}: {type(exc).__name__}: {exc}")

    def run(self, text: str) -> None:
        for lineno, line in enumerate(text.splitlines(), start=1):
            self.apply(line, lineno)

    def balances_csv(self) -> str:
        lines = ["account,role,balance"]
        for a in sorted(self.ledger.accounts.values(), key=lambda a: a.id):
            lines.append(f"{a.id},{a.role.value},{a.balance / 100:.2f}")
        s = self.ledger.state
        lines.append(f"# phase={s.phase.value} escrow={s.escrow / 100:.2f} chain_valid={self.ledger.verify()}")
        return "\n".join(lines) + "\n"


def cmd_ledger_demo(run: Run) -> None:
    a = run.args
    runner = ScriptRunner(seed=a.seed)
    runner.run(run.read_input(a.script))
    run.extra["master_seed"] = a.seed
    run.emit("events.txt", "\n".join(runner.events) + "\n", echo=True)
    run.emit("ledger.csv", runner.ledger.dump(), echo=run.out is None)
    run.emit("balances.csv", runner.balances_csv(), echo=True)


# -- replay --------------------------------------------------------------------


def cmd_replay(args: argparse.Namespace) -> int:
    manifest = json.loads(args.manifest.read_text())
    for name, digest in manifest["inputs"].items():
        if name.startswith("fixture:"):
            data = (resources.files("witnessing") / "data" / name.split(":", 1)[1]).read_bytes()
        else:
            data = Path(name).read_bytes()
        if _digest(data) != digest:
            raise StaleInput(f"input {name} changed since the manifest was written")
    return main(list(manifest["argv"]) + ["--out", str(args.out)])


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="witnessing", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_out(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out", type=Path, help="directory for output files and manifest.json")

    p = sub.add_parser("params", help="bloom capacity, hash count and statement count")
    p.add_argument("--M", type=positive_int, default=DEFAULT_FILTER_BITS, help="filter size in bits")
    p.add_argument("--f", type=probability, required=True, help="target false-positive rate")
    p.add_argument("--N", type=positive_int, default=150, help="packets per epoch")
    add_out(p)

    p = sub.add_parser("select", help="budget-constrained witness selection")
    p.add_argument("--offers", type=Path, help="offers file: one 'id, f, alpha' per line")
    p.add_argument("--f-high", type=probability, default=0.15)
    p.add_argument("--f-low", type=probability, default=0.35)
    p.add_argument("--alpha", type=non_negative, default=2.77, help="price per statement (cents)")
    p.add_argument("--M", type=positive_int, default=DEFAULT_FILTER_BITS)
    p.add_argument("--N", type=positive_int, default=150)
    p.add_argument("--high-avail", type=int, help="cap on high-class witnesses (default unbounded)")
    p.add_argument("--low-avail", type=int, help="cap on low-class witnesses (default unbounded)")
    p.add_argument("--ilp", action="store_true", help="use the spend-maximizing linearized solver")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--budget", type=non_negative, help="budget in cents")
    g.add_argument("--sweep", type=budget_range, metavar="A..B[:STEP]", help="budget range in cents")
    p.add_argument("--plot", action="store_true", help="render sweep.png next to the table")
    add_out(p)

    p = sub.add_parser("simulate", help="trace-driven day simulation")
    p.add_argument("--sessions", type=Path)
    p.add_argument("--zones", type=Path)
    p.add_argument("--fixture", choices=sorted(FIXTURES), help="use a bundled single-zone fixture")
    p.add_argument("--config", type=Path, help="key=value file of simulation settings")
    p.add_argument("--seed", type=int, help="override master_seed")
    p.add_argument("--zone", action="append", help="simulate only this zone (repeatable)")
    p.add_argument("--workers", type=positive_int, default=1)
    p.add_argument("--plot", action="store_true", help="render PNG figures next to the CSV files")
    add_out(p)

    p = sub.add_parser("gen-trace", help="generate a synthetic session trace")
    p.add_argument("--spec", type=Path, help="JSON trace spec (default: bundled calibrated spec)")
    p.add_argument("--seed", type=int, required=True)
    add_out(p)

    p = sub.add_parser("ledger-demo", help="run a protocol script against the simulated contract")
    p.add_argument("script", type=Path)
    p.add_argument("--seed", type=int, default=0)
    add_out(p)

    p = sub.add_parser("replay", help="re-run a manifest into a new directory")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path, required=True)
    return parser


def _canonical_argv(parser: argparse.ArgumentParser, args: argparse.Namespace) -> list[str]:
    """Resolved arguments as an argv list, minus ``--out``, for the manifest."""
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sp = sub.choices[args.command]
    argv = [args.command]
    for action in sp._actions:
        if action.dest in ("help", "out"):
            continue
        value = getattr(args, action.dest, None)
        if value is None or value is False:
            continue
        if not action.option_strings:
            argv.append(str(Path(value).resolve()) if isinstance(value, Path) else str(value))
            continue
        flag = action.option_strings[0]
        if value is True:
            argv.append(flag)
        elif isinstance(value, BudgetRange):
            argv += [flag, value.text]
        elif isinstance(value, list):
            for v in value:
                argv += [flag, str(v)]
        elif isinstance(value, Path):
            argv += [flag, str(value.resolve())]
        else:
            argv += [flag, repr(value) if isinstance(value, float) else str(value)]
    return argv


COMMANDS = {
    "params": cmd_params,
    "select": cmd_select,
    "simulate": cmd_simulate,
    "gen-trace": cmd_gen_trace,
    "ledger-demo": cmd_ledger_demo,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "replay":
            return cmd_replay(args)
        run = Run(args, _canonical_argv(parser, args))
        COMMANDS[args.command](run)
        run.finish()
    except SpecError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StaleInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STALE
    except WitnessingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    return 0


if __name__ == "__main__":
    sys.exit(main())
