"""Seeded random scenario generation for property campaigns and benchmarks."""
from __future__ import annotations

import random

from .engine import ChainParams, Scenario, parse_op
from .fixedpoint import MUTEZ_PER_TEZ
from .registry import AllocationParams


def random_scenario(
    seed: int,
    blocks: int = 2_000,
    n_ops: int = 400,
    n_validators: int = 8,
    n_accounts: int = 6,
    params: ChainParams | None = None,
    slash_rate: float = 0.02,
) -> Scenario:
    """A reproducible mix of flows, validator churn, rewards and slashes.

    Unstake and finalize amounts are guesses made without running the ledger,
    so a fraction of ops is rejected; that exercises the rejection path too.
    """
    rng = random.Random(seed)
    params = params or ChainParams(
        blocks_per_cycle=16,
        unbonding_period=3,
        allocation=AllocationParams(min_self_bond=1_000 * MUTEZ_PER_TEZ, global_cap_bp=2_500),
        reward_per_block=rng.choice([0, 0, 1_000, 25_000]),
    )
    bpc = params.blocks_per_cycle
    accounts = [f"acct{i}" for i in range(n_accounts)]
    validators = [f"val{i:03d}" for i in range(n_validators)]
    raw = []
    for v in validators:
        raw.append(
            {
                "at_block": rng.randrange(0, max(1, min(blocks, 4 * bpc))),
                "kind": "register_validator",
                "address": v,
                "fee_bp": rng.randrange(0, 2_000, 25),
                "capacity": rng.randrange(1, 200_000) * MUTEZ_PER_TEZ,
                "self_bond": rng.randrange(500, 20_000) * MUTEZ_PER_TEZ,
            }
        )
    held = {a: 0 for a in accounts}
    tickets = 0
    for _ in range(n_ops):
        t = rng.randrange(blocks)
        roll = rng.random()
        a = rng.choice(accounts)
        if roll < 0.35:
            amt = rng.randrange(1, 50_000) * rng.choice([1, 1_000, MUTEZ_PER_TEZ])
            held[a] += amt
            raw.append({"at_block": t, "kind": "deposit", "account": a, "amount": amt})
        elif roll < 0.6:
            units = rng.randrange(1, max(2, held[a] // 2 + 2))
            held[a] = max(0, held[a] - units)
            raw.append({"at_block": t, "kind": "request_unstake", "account": a, "units": units})
            tickets += 1
        elif roll < 0.75 and tickets:
            raw.append(
                {
                    "at_block": min(blocks - 1, t + (params.unbonding_period + 1) * bpc),
                    "kind": "finalize_unstake",
                    "ticket_id": rng.randrange(tickets),
                    "caller": rng.choice(accounts),
                }
            )
        elif roll < 0.9:
            raw.append(
                {
                    "at_block": t,
                    "kind": "reward",
                    "amount": rng.randrange(0, 5_000_000),
                    "timing": rng.choice(["block", "cycle_end"]),
                }
            )
        elif roll < 0.9 + slash_rate:
            den = rng.choice([100, 1_000, 10_000])
            raw.append(
                {
                    "at_block": t,
                    "kind": "slash",
                    "validator": rng.choice(validators),
                    "p_num": rng.randrange(0, den // 10),
                    "p_den": den,
                    "timing": rng.choice(["block", "cycle_end"]),
                }
            )
        else:
            v = rng.choice(validators)
            if rng.random() < 0.8:
                raw.append(
                    {
                        "at_block": t,
                        "kind": "update_validator",
                        "address": v,
                        "fee_bp": rng.randrange(0, 2_000, 25),
                        "capacity": rng.randrange(1, 200_000) * MUTEZ_PER_TEZ,
                    }
                )
            else:
                raw.append({"at_block": t, "kind": "unregister_validator", "address": v})
    raw.sort(key=lambda r: r["at_block"])
    ops = [parse_op(i, r) for i, r in enumerate(raw)]
    return Scenario(params, ops, blocks)
