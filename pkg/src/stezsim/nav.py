"""Indicative NAV and window reconciliation over an event log."""
from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction

from . import events as ev
from .errors import IncompleteLog, MissingFxRate
from .fixedpoint import UNITS_PER_TOKEN, decimal_str, exchange_rate, to_decimal
from .replay import LogFile, replay

DEFAULT_TOLERANCE_BP = 5


@dataclass(frozen=True)
class NavQuote:
    block: int
    L: int
    S: int
    fx: Decimal | None = None

    @property
    def rate(self) -> Fraction:
        return exchange_rate(self.L, self.S).as_fraction()

    def to_dict(self) -> dict:
        return {
            "block": self.block,
            "L": self.L,
            "S": self.S,
            "rate": {"num": self.L, "den": self.S, "decimal": decimal_str(self.rate)},
            "fx": None if self.fx is None else str(self.fx),
        }


def indicative_nav(holdings: int, quote: NavQuote, reference: bool | None = None) -> Decimal:
    """H x R, times FX when a reference-currency figure is wanted.

    ``holdings`` is in token units; the result is in tez (or the reference
    currency). R stays rational until the last multiply.
    """
    if reference is None:
        reference = quote.fx is not None
    value = Fraction(holdings, UNITS_PER_TOKEN) * quote.rate
    if reference:
        if quote.fx is None:
            raise MissingFxRate("reference-currency value requested without an FX rate")
        value *= Fraction(quote.fx)
    return to_decimal(value)


def covered_level(log: LogFile) -> int:
    return log.trailer.get("level", 0)


def quote_at(log: LogFile, block: int, fx: Decimal | None = None) -> NavQuote:
    """Quote at the end of ``block`` (after any cycle boundary it closes)."""
    if block < 0 or block >= covered_level(log):
        raise IncompleteLog(f"block {block} outside the logged range [0, {covered_level(log)})")
    st = replay(log.events, log.params.get("unbonding_period", 4), until_block=block).state
    return NavQuote(block, st.L, st.S, fx)


@dataclass
class Attribution:
    window: tuple
    R0: Fraction
    R1: Fraction
    rewards_component: int = 0  # mutez credited to L
    slashing_component: int = 0  # mutez burned from L
    frozen_slashed: int = 0  # mutez burned from frozen buckets (no rate effect)
    rewards_rate: Fraction = Fraction(0)
    slashing_rate: Fraction = Fraction(0)
    reset_rate: Fraction = Fraction(0)  # full exits falling back to the zero-supply quote
    flow_component: dict = field(default_factory=dict)
    residual: Fraction = Fraction(0)
    dust_bound: Fraction = Fraction(0)
    tolerance_bp: int = DEFAULT_TOLERANCE_BP

    @property
    def delta_R(self) -> Fraction:
        return self.R1 - self.R0

    @property
    def residual_bp(self) -> Fraction:
        return self.residual / self._base * 10_000

    @property
    def _base(self) -> Fraction:
        # a pool slashed to L=0 with S>0 quotes 0; measure against the floor quote instead
        return self.R0 or Fraction(1)

    @property
    def anomaly(self) -> bool:
        return abs(self.residual) > Fraction(self.tolerance_bp, 10_000) * self._base

    def to_dict(self) -> dict:
        def rat(x):
            return {"num": x.numerator, "den": x.denominator, "decimal": decimal_str(x)}

        return {
            "window": list(self.window),
            "R0": rat(self.R0),
            "R1": rat(self.R1),
            "delta_R": rat(self.delta_R),
            "rewards_component": self.rewards_component,
            "slashing_component": self.slashing_component,
            "frozen_slashed": self.frozen_slashed,
            "rewards_rate": rat(self.rewards_rate),
            "slashing_rate": rat(self.slashing_rate),
            "reset_rate": rat(self.reset_rate),
            "flow_component": self.flow_component,
            "residual": rat(self.residual),
            "residual_bp": decimal_str(self.residual_bp, 6),
            "dust_bound": rat(self.dust_bound),
            "tolerance_bp": self.tolerance_bp,
            "anomaly": self.anomaly,
        }


def attribute(events, t0: int, t1: int, unbonding_period=4, tolerance_bp=DEFAULT_TOLERANCE_BP) -> Attribution:
    """Split R(t1) - R(t0) into rewards, slashing and what flows leave behind.

    The window is (t0, t1]: state at a block includes everything stamped with
    that block. Rewards and slashes are credited with the rate move they cause
    at the supply current when they land; the residual is whatever the flows
    moved, which on a complete simulator log is pure floor dust.
    """
    if t1 < t0:
        raise ValueError(f"empty window {t0}:{t1}")
    for i, e in enumerate(events):
        if e.sequence != i:
            raise IncompleteLog(f"gap in event sequence at position {i}")
    r = replay(events, unbonding_period, until_block=t0)
    st = r.state
    att = Attribution(window=(t0, t1), R0=st.rate().as_fraction(), R1=Fraction(0), tolerance_bp=tolerance_bp)
    flows = {"deposits": 0, "deposited": 0, "redemptions": 0, "burned_units": 0, "frozen": 0,
             "maturations": 0, "maturation_dust": 0, "floor_resets": 0}
    for e in events[r.applied:]:
        if e.block > t1:
            break
        before = st.rate().as_fraction()
        S_before = st.S
        r.apply(e)
        after = st.rate().as_fraction()
        move = after - before
        d = e.data
        if e.kind == ev.REWARD:
            att.rewards_component += d["amount"]
            att.rewards_rate += move
        elif e.kind == ev.SLASH:
            att.slashing_component += d["L_before"] - d["L"]
            att.frozen_slashed += d["slashed"] - (d["L_before"] - d["L"])
            att.slashing_rate += move
        elif e.kind in ev.FLOW_KINDS:
            if e.kind == ev.DEPOSIT:
                flows["deposits"] += 1
                flows["deposited"] += d["amount"]
            else:
                flows["redemptions"] += 1
                flows["burned_units"] += d["units"]
                flows["frozen"] += d["frozen"]
            if st.S == 0:
                flows["floor_resets"] += 1
                att.reset_rate += move
            elif e.kind == ev.DEPOSIT:
                att.dust_bound += max(before, Fraction(1)) / st.S
            else:
                att.dust_bound += Fraction(1, st.S)
        elif e.kind == ev.BUCKET_MATURED:
            flows["maturations"] += 1
            flows["maturation_dust"] += d["dust"]
            if S_before:
                att.dust_bound += Fraction(len(d["payouts"]), S_before)
    att.R1 = st.rate().as_fraction()
    att.flow_component = flows
    att.residual = att.delta_R - att.rewards_rate - att.slashing_rate - att.reset_rate
    return att


def reconcile(log: LogFile, t0: int, t1: int, tolerance_bp=DEFAULT_TOLERANCE_BP) -> Attribution:
    level = covered_level(log)
    if not 0 <= t0 <= t1 < level:
        raise IncompleteLog(f"window {t0}:{t1} not covered by log of {level} blocks")
    return attribute(log.events, t0, t1, log.params.get("unbonding_period", 4), tolerance_bp)
