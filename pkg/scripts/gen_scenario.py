"""Write a seeded random scenario file that `stezsim run` can consume."""
import argparse
import json
import sys

from stezsim.campaign import random_scenario
from stezsim.engine import ChainParams
from stezsim.fixedpoint import MUTEZ_PER_TEZ
from stezsim.registry import AllocationParams


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--blocks", type=int, default=2_000)
    ap.add_argument("--ops", type=int, default=400)
    ap.add_argument("--validators", type=int, default=8)
    ap.add_argument("--accounts", type=int, default=6)
    ap.add_argument("--mainnet-like", action="store_true",
                    help="64-block cycles, 4-cycle unbonding, 6000 tez minimum self-bond")
    ap.add_argument("-o", "--out", default="-")
    args = ap.parse_args(argv)

    params = None
    if args.mainnet_like:
        params = ChainParams(
            allocation=AllocationParams(min_self_bond=1_000 * MUTEZ_PER_TEZ, global_cap_bp=500),
            reward_per_block=20_000,
        )
    sc = random_scenario(args.seed, args.blocks, args.ops, args.validators, args.accounts, params)
    text = json.dumps(sc.to_dict(), indent=1) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as f:
            f.write(text)


if __name__ == "__main__":
    main()
