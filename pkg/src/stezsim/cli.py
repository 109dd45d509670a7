"""Command line: run, check, nav, reconcile, serve.

Exit codes: 0 ok, 1 usage, 2 invariant or tolerance failure, 3 I/O or parse.
"""
from __future__ import annotations

import argparse
import json
import sys
import threading
import time
from decimal import Decimal, InvalidOperation

from . import events as ev
from .engine import ChainParams, World, check_invariants, check_state, load_scenario, run_scenario
from .errors import IncompleteLog, LedgerError, MissingFxRate, ReplayMismatch, ScenarioError
from .fixedpoint import UNITS_PER_TOKEN
from .nav import DEFAULT_TOLERANCE_BP, indicative_nav, quote_at, reconcile
from .replay import read_log, replay_log, write_log
from .service import QueryService, Snapshot, make_server

EXIT_OK, EXIT_USAGE, EXIT_FAIL, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(report: dict, table: bool):
    if not table:
        print(json.dumps(report, sort_keys=True, indent=2))
        return
    for key in sorted(report):
        val = report[key]
        if isinstance(val, (dict, list)):
            val = json.dumps(val, sort_keys=True)
        print(f"{key:<20} {val}")


def _load_params_override(raw):
    if raw is None:
        return None
    text = raw
    if not raw.lstrip().startswith("{"):
        with open(raw) as f:
            text = f.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"invalid --params JSON: {e.msg}", e.lineno, e.colno) from None
    if not isinstance(obj, dict):
        raise ScenarioError("--params must be a JSON object")
    return obj


def _scenario_with_overrides(args):
    scenario = load_scenario(args.scenario)
    override = _load_params_override(getattr(args, "params", None))
    if override:
        merged = scenario.params.to_dict()
        alloc = dict(merged.pop("allocation"))
        alloc.update(override.pop("allocation", {}) or {})
        merged.update(override)
        merged["allocation"] = alloc
        scenario.params = ChainParams.from_dict(merged)
    return scenario


def _parse_window(raw):
    try:
        a, b = raw.split(":")
        t0, t1 = int(a), int(b)
    except ValueError:
        raise UsageError(f"--window must look like t0:t1, got {raw!r}") from None
    if t0 < 0 or t1 < t0:
        raise UsageError(f"--window {raw} is not a forward range")
    return t0, t1


def _parse_decimal(raw, name):
    try:
        d = Decimal(raw)
    except InvalidOperation:
        raise UsageError(f"{name} must be a decimal number, got {raw!r}") from None
    if not d.is_finite() or d < 0:
        raise UsageError(f"{name} must be finite and non-negative")
    return d


def cmd_run(args) -> int:
    scenario = _scenario_with_overrides(args)
    try:
        world = run_scenario(scenario, strict=args.strict)
    except LedgerError as e:
        _emit({"ok": False, "error": type(e).__name__, "detail": str(e)}, args.table)
        return EXIT_FAIL
    if args.log:
        write_log(args.log, world)
    rep = check_invariants(world)
    rejected = sum(1 for e in world.log if e.kind == ev.REJECTED)
    report = {
        "ok": rep.ok,
        "blocks": world.level,
        "events": len(world.log),
        "rejected": rejected,
        "lifecycle": ev.lifecycle_trace(world.log),
        "final": world.state.summary(),
        "state_digest": world.state_digest(),
        "log_digest": world.log_digest(),
        "invariants": rep.to_dict()["invariants"],
    }
    if args.wall_clock:
        report["finished_at"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    _emit(report, args.table)
    return EXIT_OK if rep.ok else EXIT_FAIL


def cmd_check(args) -> int:
    log = read_log(args.log)
    try:
        r = replay_log(log)
    except ReplayMismatch as e:
        _emit({"ok": False, "invariants": [{"name": "conservation", "ok": False, "detail": str(e)}]}, args.table)
        return EXIT_FAIL
    params = log.params
    rep = check_state(r.state, r.plans, params.get("unbonding_period", 4))
    rep.add("log_replay_equivalence", True, f"{r.applied} events replayed to trailer state")
    _emit({**rep.to_dict(), "events": len(log.events), "final": r.state.summary()}, args.table)
    return EXIT_OK if rep.ok else EXIT_FAIL


def cmd_nav(args) -> int:
    log = read_log(args.log)
    fx = _parse_decimal(args.fx, "--fx") if args.fx is not None else None
    tokens = _parse_decimal(args.holdings, "--holdings")
    units = tokens * UNITS_PER_TOKEN
    if units != units.to_integral_value():
        raise UsageError("--holdings has more than 6 decimals")
    quote = quote_at(log, args.block, fx)
    report = quote.to_dict()
    report["holdings_units"] = int(units)
    report["value_tez"] = format(indicative_nav(int(units), quote, reference=False), "f")
    report["indicative_value"] = format(indicative_nav(int(units), quote, reference=True), "f") if fx is not None else None
    _emit(report, args.table)
    return EXIT_OK


def cmd_reconcile(args) -> int:
    log = read_log(args.log)
    t0, t1 = _parse_window(args.window)
    att = reconcile(log, t0, t1, args.tolerance_bp)
    _emit(att.to_dict(), args.table)
    return EXIT_FAIL if att.anomaly else EXIT_OK


def _parse_listen(raw):
    host, _, port = raw.rpartition(":")
    try:
        return host or "127.0.0.1", int(port)
    except ValueError:
        raise UsageError(f"--listen must be host:port, got {raw!r}") from None


def cmd_serve(args) -> int:
    host, port = _parse_listen(args.listen)
    scenario = _scenario_with_overrides(args)
    world = World(scenario.params, strict=False)
    service = QueryService(Snapshot.capture(world))
    if args.live:
        def publish(w):
            service.publish(Snapshot.capture(w))
            if args.block_delay:
                time.sleep(args.block_delay)

        world.listeners.append(publish)
        threading.Thread(target=run_scenario, args=(scenario,), kwargs={"world": world}, daemon=True).start()
    else:
        run_scenario(scenario, world=world)
        service.publish(Snapshot.capture(world))
    httpd = make_server(service, host, port)
    print(f"serving on http://{httpd.server_address[0]}:{httpd.server_address[1]}", flush=True)
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stezsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--table", action="store_true", help="human-readable output instead of JSON")

    r = sub.add_parser("run", help="run a scenario and write the event log")
    r.add_argument("--scenario", required=True)
    r.add_argument("--log", help="event log output (JSON lines)")
    r.add_argument("--strict", action="store_true", help="fail the run on the first rejected op")
    r.add_argument("--params", help="JSON object or file overriding scenario params")
    r.add_argument("--wall-clock", action="store_true", help="add a finish timestamp to the report")
    common(r)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check", help="replay a log and evaluate the invariants")
    c.add_argument("--log", required=True)
    common(c)
    c.set_defaults(func=cmd_check)

    n = sub.add_parser("nav", help="indicative NAV at a block")
    n.add_argument("--log", required=True)
    n.add_argument("--block", type=int, required=True)
    n.add_argument("--holdings", required=True, help="sTEZ held, in tokens (up to 6 decimals)")
    n.add_argument("--fx", help="reference currency per tez")
    common(n)
    n.set_defaults(func=cmd_nav)

    rc = sub.add_parser("reconcile", help="attribute the rate change over a window")
    rc.add_argument("--log", required=True)
    rc.add_argument("--window", required=True, help="t0:t1, blocks")
    rc.add_argument("--tolerance-bp", type=int, default=DEFAULT_TOLERANCE_BP)
    common(rc)
    rc.set_defaults(func=cmd_reconcile)

    s = sub.add_parser("serve", help="serve the read-only query API")
    s.add_argument("--scenario", required=True)
    s.add_argument("--params")
    s.add_argument("--listen", default="127.0.0.1:8732")
    s.add_argument("--live", action="store_true", help="step the scenario while serving")
    s.add_argument("--block-delay", type=float, default=0.0, help="seconds between live blocks")
    s.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"stezsim: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ScenarioError as e:
        print(f"stezsim: scenario error: {e}", file=sys.stderr)
        return EXIT_IO
    except IncompleteLog as e:
        print(f"stezsim: incomplete log: {e}", file=sys.stderr)
        return EXIT_IO
    except MissingFxRate as e:
        print(f"stezsim: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"stezsim: {e.strerror or e}: {getattr(e, 'filename', '') or ''}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
