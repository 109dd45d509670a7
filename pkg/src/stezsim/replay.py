"""Event-log files and rebuilding ledger state from events alone."""
from __future__ import annotations

import json
from dataclasses import dataclass

from . import events as ev
from .errors import IncompleteLog, ReplayMismatch
from .fixedpoint import burn_value, mint_amount, scale_by_remainder
from .ledger import FINALIZABLE, PAID, FrozenBucket, LedgerState, RedemptionTicket
from .registry import AllocationPlan

LOG_FORMAT = 1


@dataclass
class LogFile:
    header: dict
    events: list
    trailer: dict

    @property
    def params(self) -> dict:
        return self.header.get("params", {})


def render_log(world) -> list[str]:
    lines = [ev.canonical_json({"kind": ev.HEADER, "format": LOG_FORMAT, "params": world.params.to_dict()})]
    lines.extend(e.to_json() for e in world.log)
    lines.append(
        ev.canonical_json(
            {
                "kind": ev.TRAILER,
                "events": len(world.log),
                "level": world.level,
                "final": world.state.summary(),
                "state_digest": world.state_digest(),
                "log_digest": world.log_digest(),
            }
        )
    )
    return lines


def write_log(path, world):
    with open(path, "w") as f:
        for line in render_log(world):
            f.write(line + "\n")


def parse_log(lines) -> LogFile:
    header = trailer = None
    events = []
    for n, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        if trailer is not None:
            raise IncompleteLog(f"line {n}: content after trailer")
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            raise IncompleteLog(f"line {n}: truncated or corrupt record") from None
        kind = obj.get("kind")
        if kind == ev.HEADER:
            if header is not None or events:
                raise IncompleteLog(f"line {n}: misplaced header")
            header = obj
            continue
        if header is None:
            raise IncompleteLog("log does not start with a header")
        if kind == ev.TRAILER:
            trailer = obj
            continue
        e = ev.Event.from_dict(obj)
        if e.sequence != len(events):
            raise IncompleteLog(f"line {n}: expected sequence {len(events)}, found {e.sequence}")
        events.append(e)
    if header is None:
        raise IncompleteLog("empty log")
    if trailer is None:
        raise IncompleteLog(f"log ends without a trailer after {len(events)} events")
    if trailer.get("events") != len(events):
        raise IncompleteLog(f"trailer announces {trailer.get('events')} events, found {len(events)}")
    return LogFile(header, events, trailer)


def read_log(path) -> LogFile:
    with open(path) as f:
        return parse_log(f)


class Replayer:
    """Rebuilds L, S, F, E (plus balances, tickets and plans) from events.

    Every recorded post-value is checked against the rebuilt state, so an
    edited amount anywhere in the log surfaces at the first event it breaks.
    """

    def __init__(self, unbonding_period: int = 4):
        self.state = LedgerState(unbonding_period=unbonding_period)
        self.plans: dict[int, AllocationPlan] = {}
        self.applied = 0

    def _fail(self, e, msg):
        raise ReplayMismatch(f"event {e.sequence} ({e.kind}, block {e.block}): {msg}")

    def _expect(self, e, name, recorded, rebuilt):
        if recorded != rebuilt:
            self._fail(e, f"{name} recorded {recorded}, rebuilt {rebuilt}")

    def apply(self, e: ev.Event):
        st, d = self.state, e.data
        st.block, st.cycle = e.block, e.cycle
        handler = getattr(self, "_on_" + e.kind, None)
        if handler is not None:
            handler(e, st, d)
        self.applied += 1

    def _on_deposit(self, e, st, d):
        self._expect(e, "minted", d["minted"], mint_amount(d["amount"], st.L, st.S))
        st.L += d["amount"]
        st.S += d["minted"]
        st.balances[d["account"]] = st.balances.get(d["account"], 0) + d["minted"]
        st.total_deposited += d["amount"]
        st.total_minted += d["minted"]
        self._expect(e, "L", d["L"], st.L)
        self._expect(e, "S", d["S"], st.S)

    def _on_redemption_requested(self, e, st, d):
        u, acct = d["units"], d["account"]
        if st.balances.get(acct, 0) < u:
            self._fail(e, f"{acct} burns {u} units but holds {st.balances.get(acct, 0)}")
        self._expect(e, "frozen", d["frozen"], burn_value(u, st.L, st.S))
        self._expect(e, "ticket_id", d["ticket_id"], st.next_ticket_id)
        self._expect(e, "maturity_cycle", d["maturity_cycle"], e.cycle + st.unbonding_period)
        v = d["frozen"]
        st.L -= v
        st.S -= u
        st.balances[acct] -= u
        b = st.frozen.setdefault(e.cycle, FrozenBucket(request_cycle=e.cycle))
        b.original_total += v
        b.remaining_total += v
        b.tickets.append(d["ticket_id"])
        st.tickets[d["ticket_id"]] = RedemptionTicket(
            d["ticket_id"], acct, u, v, e.cycle, d["maturity_cycle"]
        )
        st.next_ticket_id += 1
        st.total_burned += u
        self._expect(e, "L", d["L"], st.L)
        self._expect(e, "S", d["S"], st.S)

    def _on_bucket_matured(self, e, st, d):
        b = st.frozen.pop(d["bucket"], None)
        if b is None:
            self._fail(e, f"no frozen bucket for cycle {d['bucket']}")
        self._expect(e, "original", d["original"], b.original_total)
        self._expect(e, "remaining", d["remaining"], b.remaining_total)
        paid = 0
        self._expect(e, "tickets", [p[0] for p in d["payouts"]], b.tickets)
        dust_to = d.get("dust_to")
        for tid, requester, amount in d["payouts"]:
            t = st.tickets[tid]
            want = t.frozen_amount * b.remaining_total // b.original_total if b.original_total else 0
            if tid == dust_to:
                want += d["dust"]
            self._expect(e, f"payout[{tid}]", amount, want)
            t.status, t.payout = FINALIZABLE, amount
            st.finalizable[requester] = st.finalizable.get(requester, 0) + amount
            paid += amount
        if dust_to is None:
            self._expect(e, "dust", d["dust"], b.remaining_total - paid)
            st.L += d["dust"]
        else:
            self._expect(e, "paid", paid, b.remaining_total)
            if st.S:
                self._fail(e, "dust paid to a ticket while holders remain")
        self._expect(e, "L", d["L"], st.L)

    def _on_redemption_finalized(self, e, st, d):
        t = st.tickets.get(d["ticket_id"])
        if t is None or t.status != FINALIZABLE:
            self._fail(e, f"ticket {d['ticket_id']} is not finalizable")
        self._expect(e, "requester", d["requester"], t.requester)
        self._expect(e, "amount", d["amount"], t.payout)
        st.finalizable[t.requester] -= t.payout
        t.status = PAID
        st.total_paid += t.payout

    def _on_reward(self, e, st, d):
        st.L += d["amount"]
        st.total_rewards += d["amount"]
        self._expect(e, "L", d["L"], st.L)

    def _on_slash(self, e, st, d):
        self._expect(e, "L_before", d["L_before"], st.L)
        p, q = d["p_num"], d["p_den"]
        after = scale_by_remainder(st.L, p, q)
        slashed = st.L - after
        self._expect(e, "L", d["L"], after)
        st.L = after
        self._expect(e, "buckets", sorted(d["buckets"], key=int), [str(c) for c in sorted(st.frozen)])
        for c, b in st.frozen.items():
            before, rec_after = d["buckets"][str(c)]
            self._expect(e, f"bucket[{c}]", before, b.remaining_total)
            new = scale_by_remainder(b.remaining_total, p, q)
            self._expect(e, f"bucket[{c}] after", rec_after, new)
            slashed += b.remaining_total - new
            b.remaining_total = new
        self._expect(e, "slashed", d["slashed"], slashed)
        st.total_slashed += slashed

    def _on_allocation(self, e, st, d):
        plan = AllocationPlan.from_dict(d)
        self._expect(e, "plan L", plan.L, st.L)
        self.plans[plan.effective_cycle] = plan


def replay(events, unbonding_period=4, until_block=None) -> Replayer:
    r = Replayer(unbonding_period)
    for e in events:
        if until_block is not None and e.block > until_block:
            break
        r.apply(e)
    return r


def replay_log(log: LogFile) -> Replayer:
    """Full replay, positioned at the trailer's level and checked against its summary."""
    unbonding = log.params.get("unbonding_period", 4)
    bpc = log.params.get("blocks_per_cycle", 64)
    r = replay(log.events, unbonding)
    level = log.trailer.get("level", 0)
    r.state.block, r.state.cycle = level, level // bpc
    final = log.trailer.get("final")
    if final is not None and final != r.state.summary():
        raise ReplayMismatch(f"trailer state {final} differs from replayed {r.state.summary()}")
    return r
