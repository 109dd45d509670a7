"""Run the 100k-block, 100-validator scenario twice; compare logs and time each run."""
import argparse
import hashlib
import sys
import time

from stezsim.campaign import random_scenario
from stezsim.engine import ChainParams, run_scenario
from stezsim.fixedpoint import MUTEZ_PER_TEZ
from stezsim.registry import AllocationParams
from stezsim.replay import render_log


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=2026)
    ap.add_argument("--blocks", type=int, default=100_000)
    ap.add_argument("--validators", type=int, default=100)
    ap.add_argument("--ops", type=int, default=3_000)
    ap.add_argument("--runs", type=int, default=2)
    args = ap.parse_args(argv)

    params = ChainParams(
        allocation=AllocationParams(min_self_bond=1_000 * MUTEZ_PER_TEZ, global_cap_bp=500),
        reward_per_block=20_000,
    )
    sc = random_scenario(args.seed, args.blocks, args.ops, args.validators, params=params)
    digests = set()
    for i in range(args.runs):
        t = time.perf_counter()
        world = run_scenario(sc)
        ran = time.perf_counter() - t
        blob = "\n".join(render_log(world)).encode()
        digests.add((hashlib.sha256(blob).hexdigest(), world.state_digest()))
        print(f"run {i}: {ran:.2f}s simulate, {len(world.log)} events, "
              f"log sha256 {hashlib.sha256(blob).hexdigest()[:16]}, state {world.state_digest()[:16]}")
    same = len(digests) == 1
    print("identical" if same else "DIVERGED")
    return 0 if same else 2


if __name__ == "__main__":
    sys.exit(main())
