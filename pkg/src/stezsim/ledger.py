"""The staking ledger: L, S, frozen buckets F, finalizable balances E.

Every transition validates before it mutates, so a raised ``LedgerError``
leaves the state exactly as it was.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from fractions import Fraction

from . import events as ev
from .errors import (
    EmptyDeposit,
    EmptySystem,
    InsufficientBalance,
    InvariantViolation,
    TicketAlreadyPaid,
    TicketNotMatured,
    UnknownTicket,
    ZeroBurn,
)
from .fixedpoint import (
    ExchangeRate,
    Mutez,
    TokenUnits,
    add,
    burn_value,
    check_u64,
    exchange_rate,
    mint_amount,
    scale_by_remainder,
    sub,
)

PENDING = "pending"
FINALIZABLE = "finalizable"
PAID = "paid"


@dataclass
class RedemptionTicket:
    ticket_id: int
    requester: str
    burned_units: TokenUnits
    frozen_amount: Mutez
    request_cycle: int
    maturity_cycle: int
    status: str = PENDING
    payout: Mutez | None = None

    def to_dict(self) -> dict:
        return {
            "ticket_id": self.ticket_id,
            "requester": self.requester,
            "burned_units": self.burned_units,
            "frozen_amount": self.frozen_amount,
            "request_cycle": self.request_cycle,
            "maturity_cycle": self.maturity_cycle,
            "status": self.status,
            "payout": self.payout,
        }


@dataclass
class FrozenBucket:
    request_cycle: int
    original_total: Mutez = 0
    remaining_total: Mutez = 0
    tickets: list = field(default_factory=list)  # ticket ids
    matured: bool = False


@dataclass
class LedgerState:
    unbonding_period: int = 4
    L: Mutez = 0
    S: TokenUnits = 0
    balances: dict = field(default_factory=dict)
    frozen: dict = field(default_factory=dict)  # request cycle -> FrozenBucket
    finalizable: dict = field(default_factory=dict)  # account -> Mutez
    tickets: dict = field(default_factory=dict)  # ticket id -> RedemptionTicket
    next_ticket_id: int = 0
    block: int = 0
    cycle: int = 0
    # instrumentation for conservation checks
    total_deposited: int = 0
    total_rewards: int = 0
    total_slashed: int = 0
    total_paid: int = 0
    total_minted: int = 0
    total_burned: int = 0

    def rate(self) -> ExchangeRate:
        return exchange_rate(self.L, self.S)

    def frozen_total(self) -> int:
        return sum(b.remaining_total for b in self.frozen.values())

    def finalizable_total(self) -> int:
        return sum(self.finalizable.values())

    def copy(self) -> "LedgerState":
        return copy.deepcopy(self)

    def summary(self) -> dict:
        """The reconciliation scalars plus F and E, keyed canonically."""
        return {
            "L": self.L,
            "S": self.S,
            "frozen": {str(c): b.remaining_total for c, b in sorted(self.frozen.items())},
            "finalizable": {a: v for a, v in sorted(self.finalizable.items()) if v},
        }

    def to_dict(self) -> dict:
        return {
            **self.summary(),
            "block": self.block,
            "cycle": self.cycle,
            "balances": {a: v for a, v in sorted(self.balances.items()) if v},
            "tickets": [self.tickets[i].to_dict() for i in sorted(self.tickets)],
            "next_ticket_id": self.next_ticket_id,
            "totals": {
                "deposited": self.total_deposited,
                "rewards": self.total_rewards,
                "slashed": self.total_slashed,
                "paid": self.total_paid,
                "minted": self.total_minted,
                "burned": self.total_burned,
            },
        }


class Ledger:
    """Owns a LedgerState and records every balance change in an event log."""

    def __init__(self, state: LedgerState | None = None, log: ev.EventLog | None = None):
        self.state = state if state is not None else LedgerState()
        self.log = log if log is not None else ev.EventLog()

    def _emit(self, kind, **data):
        st = self.state
        return self.log.emit(st.block, st.cycle, kind, **data)

    def deposit(self, account: str, delta: Mutez):
        st = self.state
        if delta <= 0:
            raise EmptyDeposit(f"deposit of {delta} mutez rejected")
        minted = mint_amount(delta, st.L, st.S)
        L = add(st.L, delta, "L")
        S = add(st.S, minted, "S")
        bal = add(st.balances.get(account, 0), minted, "balance")
        st.L, st.S = L, S
        st.balances[account] = bal
        st.total_deposited += delta
        st.total_minted += minted
        event = self._emit(ev.DEPOSIT, account=account, amount=delta, minted=minted, L=L, S=S)
        return minted, event

    def request_unstake(self, account: str, u: TokenUnits):
        st = self.state
        if u <= 0:
            raise ZeroBurn("burn of zero units rejected")
        if st.S == 0:
            raise EmptySystem("no supply outstanding")
        held = st.balances.get(account, 0)
        if held < u:
            raise InsufficientBalance(f"{account} holds {held} units, asked to burn {u}")
        v = burn_value(u, st.L, st.S)
        bucket = st.frozen.get(st.cycle)
        new_total = add(bucket.original_total if bucket else 0, v, "bucket")
        ticket = RedemptionTicket(
            ticket_id=st.next_ticket_id,
            requester=account,
            burned_units=u,
            frozen_amount=v,
            request_cycle=st.cycle,
            maturity_cycle=st.cycle + st.unbonding_period,
        )
        st.S -= u
        st.L -= v
        st.balances[account] = held - u
        if bucket is None:
            bucket = st.frozen[st.cycle] = FrozenBucket(request_cycle=st.cycle)
        bucket.original_total = new_total
        bucket.remaining_total += v
        bucket.tickets.append(ticket.ticket_id)
        st.tickets[ticket.ticket_id] = ticket
        st.next_ticket_id += 1
        st.total_burned += u
        event = self._emit(
            ev.REDEMPTION_REQUESTED,
            ticket_id=ticket.ticket_id,
            account=account,
            units=u,
            frozen=v,
            request_cycle=ticket.request_cycle,
            maturity_cycle=ticket.maturity_cycle,
            L=st.L,
            S=st.S,
        )
        return ticket, event

    def mature_buckets(self, at_cycle: int):
        """Close every bucket whose tickets mature when the chain enters ``at_cycle``.

        Each ticket is paid floor(frozen * remaining / original); whatever the
        floors leave behind goes back to L.
        """
        st = self.state
        emitted = []
        due = sorted(c for c in st.frozen if c + st.unbonding_period == at_cycle)
        for c in due:
            bucket = st.frozen.pop(c)
            if bucket.matured:
                continue
            payouts = []
            paid = 0
            for tid in bucket.tickets:
                t = st.tickets[tid]
                amount = 0
                if bucket.original_total:
                    amount = (t.frozen_amount * bucket.remaining_total) // bucket.original_total
                t.payout = amount
                t.status = FINALIZABLE
                st.finalizable[t.requester] = st.finalizable.get(t.requester, 0) + amount
                paid += amount
                payouts.append([tid, t.requester, amount])
            dust = bucket.remaining_total - paid
            dust_to = None
            if dust and st.S == 0:
                # nobody left to hold L: the residue goes to the largest ticket instead
                t = max((st.tickets[i] for i in bucket.tickets), key=lambda t: (t.frozen_amount, -t.ticket_id))
                t.payout += dust
                st.finalizable[t.requester] += dust
                payouts[bucket.tickets.index(t.ticket_id)][2] += dust
                dust_to = t.ticket_id
            else:
                st.L = add(st.L, dust, "L")
            bucket.matured = True
            emitted.append(
                self._emit(
                    ev.BUCKET_MATURED,
                    bucket=c,
                    original=bucket.original_total,
                    remaining=bucket.remaining_total,
                    payouts=payouts,
                    dust=dust,
                    dust_to=dust_to,
                    L=st.L,
                )
            )
        return emitted

    def finalize_unstake(self, ticket_id: int, caller: str):
        """Permissionless: anyone may call, the requester is always the payee."""
        st = self.state
        t = st.tickets.get(ticket_id)
        if t is None:
            raise UnknownTicket(f"no ticket {ticket_id}")
        if t.status == PAID:
            raise TicketAlreadyPaid(f"ticket {ticket_id} already paid")
        if t.status == PENDING:
            raise TicketNotMatured(
                f"ticket {ticket_id} matures in cycle {t.maturity_cycle}, now {st.cycle}"
            )
        owed = st.finalizable.get(t.requester, 0)
        if owed < t.payout:
            raise InvariantViolation(f"finalizable balance {owed} below payout {t.payout}")
        st.finalizable[t.requester] = owed - t.payout
        t.status = PAID
        st.total_paid += t.payout
        event = self._emit(
            ev.REDEMPTION_FINALIZED,
            ticket_id=ticket_id,
            requester=t.requester,
            caller=caller,
            amount=t.payout,
        )
        return t.payout, event

    def accrue_rewards(self, delta: Mutez, source: str = "scenario"):
        st = self.state
        check_u64(delta, "reward")
        if delta == 0:
            return None
        if st.S == 0:
            raise InvariantViolation("reward credited to an empty system")
        st.L = add(st.L, delta, "L")
        st.total_rewards += delta
        return self._emit(ev.REWARD, amount=delta, source=source, L=st.L)

    def apply_slash(self, p_num: int, p_den: int, validator: str | None = None):
        """Burn fraction p of L and of every bucket that has not matured yet."""
        st = self.state
        L_after = scale_by_remainder(st.L, p_num, p_den)
        buckets = {}
        for c in sorted(st.frozen):
            b = st.frozen[c]
            buckets[c] = (b.remaining_total, scale_by_remainder(b.remaining_total, p_num, p_den))
        slashed = st.L - L_after + sum(before - after for before, after in buckets.values())
        L_before = st.L
        st.L = L_after
        for c, (_, after) in buckets.items():
            st.frozen[c].remaining_total = after
        st.total_slashed += slashed
        return self._emit(
            ev.SLASH,
            validator=validator,
            p_num=p_num,
            p_den=p_den,
            L_before=L_before,
            L=L_after,
            buckets={str(c): [b, a] for c, (b, a) in buckets.items()},
            slashed=slashed,
        )

    # views

    def holder_value(self, account: str) -> Fraction:
        """Exact mutez claim of an account's tokens at the current rate."""
        st = self.state
        if st.S == 0:
            return Fraction(0)
        return Fraction(st.balances.get(account, 0) * st.L, st.S)

    def ticket_claim(self, ticket_id: int) -> Fraction:
        """Exact pro-rata claim of a pending ticket on its bucket."""
        st = self.state
        t = st.tickets[ticket_id]
        if t.status != PENDING:
            return Fraction(t.payout)
        b = st.frozen[t.request_cycle]
        if not b.original_total:
            return Fraction(0)
        return Fraction(t.frozen_amount * b.remaining_total, b.original_total)

    def projected_payout(self, ticket_id: int) -> int:
        st = self.state
        t = st.tickets[ticket_id]
        if t.status != PENDING:
            return t.payout
        b = st.frozen[t.request_cycle]
        if not b.original_total:
            return 0
        return (t.frozen_amount * b.remaining_total) // b.original_total
