"""Run many seeded scenarios and check invariants, replay and reconciliation on each.

Prints one line per seed and a summary; exits 2 if any seed fails.
"""
import argparse
import sys
import time

from stezsim.campaign import random_scenario
from stezsim.engine import check_invariants, run_scenario
from stezsim.nav import reconcile
from stezsim.replay import parse_log, render_log, replay_log


def run_seed(seed, blocks, n_ops, n_validators, tolerance_bp):
    sc = random_scenario(seed, blocks, n_ops, n_validators)
    world = run_scenario(sc)
    rep = check_invariants(world)
    log = parse_log(render_log(world))
    replayed = replay_log(log)
    att = reconcile(log, 0, world.level - 1, tolerance_bp)
    rejected = sum(1 for e in world.log if e.kind == "rejected")
    return {
        "ok": rep.ok and replayed.state.summary() == world.state.summary() and att.residual <= att.dust_bound,
        "failed": [name for name, _, _ in rep.failures()],
        "events": len(world.log),
        "rejected": rejected,
        "R": float(world.state.rate().as_fraction()),
        "residual_bp": float(att.residual_bp),
        "anomaly": att.anomaly,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--start", type=int, default=0)
    ap.add_argument("--blocks", type=int, default=2_000)
    ap.add_argument("--ops", type=int, default=600)
    ap.add_argument("--validators", type=int, default=8)
    ap.add_argument("--tolerance-bp", type=int, default=5)
    args = ap.parse_args(argv)

    started = time.perf_counter()
    bad = 0
    flagged = 0
    for seed in range(args.start, args.start + args.seeds):
        r = run_seed(seed, args.blocks, args.ops, args.validators, args.tolerance_bp)
        bad += not r["ok"]
        flagged += r["anomaly"]
        status = "ok" if r["ok"] else "FAIL " + ",".join(r["failed"])
        print(f"seed {seed:4d}  events {r['events']:6d}  rejected {r['rejected']:4d}  "
              f"R {r['R']:.6f}  residual {r['residual_bp']:.3g} bp  {status}")
    print(f"{args.seeds} seeds, {bad} failed, {flagged} over tolerance, "
          f"{time.perf_counter() - started:.1f}s")
    return 2 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
