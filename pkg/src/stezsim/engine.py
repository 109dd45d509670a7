"""Deterministic block/cycle scheduler driving the ledger and registry."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction

from . import events as ev
from .errors import InvalidParameter, LedgerError, ScenarioError, UnknownValidator
from .ledger import FINALIZABLE, PENDING, Ledger, LedgerState
from .registry import AllocationParams, AllocationPlan, Registry, compute_allocation

USER_KINDS = (
    "deposit",
    "request_unstake",
    "finalize_unstake",
    "register_validator",
    "update_validator",
    "unregister_validator",
)
SETTLEMENT_KINDS = ("reward", "slash")
OP_KINDS = USER_KINDS + SETTLEMENT_KINDS

_REQUIRED = {
    "deposit": ("account", "amount"),
    "request_unstake": ("account", "units"),
    "finalize_unstake": ("ticket_id",),
    "register_validator": ("address", "fee_bp", "capacity", "self_bond"),
    "update_validator": ("address",),
    "unregister_validator": ("address",),
    "reward": ("amount",),
    "slash": (),
}
_INT_FIELDS = ("amount", "units", "ticket_id", "fee_bp", "capacity", "self_bond", "p_num", "p_den")
_STR_FIELDS = ("account", "caller", "address", "validator")


@dataclass
class ChainParams:
    blocks_per_cycle: int = 64
    unbonding_period: int = 4
    consensus_rights_delay: int = 2
    allocation: AllocationParams = field(default_factory=AllocationParams)
    # built-in reward model: mutez per block, scaled by the assigned fraction of L
    reward_per_block: int = 0

    def validate(self):
        for name in ("blocks_per_cycle", "unbonding_period", "consensus_rights_delay"):
            if getattr(self, name) <= 0:
                raise InvalidParameter(f"{name} must be strictly positive")
        if self.reward_per_block < 0:
            raise InvalidParameter("reward_per_block must be non-negative")
        self.allocation.validate()
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict | None) -> "ChainParams":
        d = dict(d or {})
        alloc = d.pop("allocation", None) or {}
        known = set(cls.__dataclass_fields__)
        alloc_known = set(AllocationParams.__dataclass_fields__)
        for k in list(d):
            # flat overrides of allocation fields are accepted too
            if k in alloc_known:
                alloc[k] = d.pop(k)
        unknown = set(d) - known | set(alloc) - alloc_known
        if unknown:
            raise ScenarioError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
        for k, v in list(d.items()) + list(alloc.items()):
            if not isinstance(v, int) or isinstance(v, bool):
                raise ScenarioError(f"parameter {k} must be an integer, got {v!r}")
        try:
            return cls(allocation=AllocationParams(**alloc), **d).validate()
        except InvalidParameter as e:
            raise ScenarioError(str(e)) from None


@dataclass(frozen=True)
class ScenarioOp:
    at_block: int
    kind: str
    seq: int
    data: dict

    @property
    def deferred(self) -> bool:
        return self.kind in SETTLEMENT_KINDS and self.data.get("timing") == "cycle_end"

    def to_dict(self) -> dict:
        return {"at_block": self.at_block, "kind": self.kind, **self.data}


@dataclass
class Scenario:
    params: ChainParams
    ops: list
    blocks: int | None = None

    def total_blocks(self) -> int:
        if self.blocks is not None:
            return self.blocks
        if not self.ops:
            return 0
        bpc = self.params.blocks_per_cycle
        last = max(op.at_block for op in self.ops)
        return (last // bpc + 1) * bpc

    def to_dict(self) -> dict:
        d = {"params": self.params.to_dict(), "ops": [op.to_dict() for op in self.ops]}
        if self.blocks is not None:
            d["blocks"] = self.blocks
        return d


def _parse_fraction(op_idx, data):
    if "fraction" in data:
        try:
            fr = Fraction(str(data.pop("fraction")))
        except (ValueError, ZeroDivisionError):
            raise ScenarioError(f"op {op_idx}: unparseable slash fraction") from None
        data["p_num"], data["p_den"] = fr.numerator, fr.denominator
    if "p_num" not in data or "p_den" not in data:
        raise ScenarioError(f"op {op_idx}: slash needs fraction or p_num/p_den")


def parse_op(idx: int, raw) -> ScenarioOp:
    if not isinstance(raw, dict):
        raise ScenarioError(f"op {idx}: expected an object")
    data = dict(raw)
    kind = data.pop("kind", None)
    at_block = data.pop("at_block", None)
    if kind not in OP_KINDS:
        raise ScenarioError(f"op {idx}: unknown kind {kind!r}")
    if not isinstance(at_block, int) or isinstance(at_block, bool) or at_block < 0:
        raise ScenarioError(f"op {idx}: at_block must be a non-negative integer")
    if kind == "slash":
        _parse_fraction(idx, data)
    for name in _REQUIRED[kind]:
        if name not in data:
            raise ScenarioError(f"op {idx}: {kind} needs field {name!r}")
    for name in _INT_FIELDS:
        if name in data and data[name] is not None:
            v = data[name]
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ScenarioError(f"op {idx}: {name} must be a non-negative integer")
    for name in _STR_FIELDS:
        if name in data and data[name] is not None and not isinstance(data[name], str):
            raise ScenarioError(f"op {idx}: {name} must be a string")
    if data.get("timing", "block") not in ("block", "cycle_end"):
        raise ScenarioError(f"op {idx}: timing must be 'block' or 'cycle_end'")
    return ScenarioOp(at_block, kind, idx, data)


def parse_scenario(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"invalid JSON: {e.msg}", e.lineno, e.colno) from None
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    params = ChainParams.from_dict(doc.get("params"))
    raw_ops = doc.get("ops", [])
    if not isinstance(raw_ops, list):
        raise ScenarioError("ops must be a list")
    ops = [parse_op(i, raw) for i, raw in enumerate(raw_ops)]
    blocks = doc.get("blocks")
    if blocks is not None and (not isinstance(blocks, int) or blocks < 0):
        raise ScenarioError("blocks must be a non-negative integer")
    return Scenario(params, ops, blocks)


def load_scenario(path) -> Scenario:
    with open(path) as f:
        return parse_scenario(f.read())


class World:
    """Single writer over ledger, registry and allocation plans."""

    def __init__(self, params: ChainParams | None = None, strict: bool = False):
        self.params = (params or ChainParams()).validate()
        self.strict = strict
        self.log = ev.EventLog()
        self.ledger = Ledger(LedgerState(unbonding_period=self.params.unbonding_period), self.log)
        self.registry = Registry()
        self.plans: dict[int, AllocationPlan] = {}
        self.deferred: list[ScenarioOp] = []
        self.eligible: list[str] = []
        self.level = 0
        self.listeners = []  # called with the world after every block

    @property
    def state(self) -> LedgerState:
        return self.ledger.state

    @property
    def cycle(self) -> int:
        return self.level // self.params.blocks_per_cycle

    def _emit(self, kind, **data):
        return self.log.emit(self.state.block, self.state.cycle, kind, **data)

    def current_plan(self) -> AllocationPlan | None:
        return self.plans.get(self.cycle)

    # operations

    def _apply(self, op: ScenarioOp):
        d = op.data
        led, reg, cyc = self.ledger, self.registry, self.state.cycle
        if op.kind == "deposit":
            led.deposit(d["account"], d["amount"])
        elif op.kind == "request_unstake":
            led.request_unstake(d["account"], d["units"])
        elif op.kind == "finalize_unstake":
            t = self.state.tickets.get(d["ticket_id"])
            caller = d.get("caller") or (t.requester if t else None)
            led.finalize_unstake(d["ticket_id"], caller)
        elif op.kind == "register_validator":
            rec = reg.register(d["address"], d["fee_bp"], d["capacity"], d["self_bond"], cyc)
            self._emit(ev.VALIDATOR_REGISTERED, **rec.to_dict())
        elif op.kind == "update_validator":
            rec = reg.update(d["address"], d.get("fee_bp"), d.get("capacity"))
            self._emit(
                ev.VALIDATOR_UPDATED,
                address=rec.address,
                fee_bp=rec.fee_bp,
                declared_capacity=rec.declared_capacity,
            )
        elif op.kind == "unregister_validator":
            reg.unregister(d["address"])
            self._emit(ev.VALIDATOR_UNREGISTERED, address=d["address"])
        elif op.kind == "reward":
            led.accrue_rewards(d["amount"])
        elif op.kind == "slash":
            v = d.get("validator")
            if v is not None and v not in reg.records:
                raise UnknownValidator(f"validator {v} is not registered")
            led.apply_slash(d["p_num"], d["p_den"], v)
            if v is not None:
                reg.record_slash(v, cyc)

    def apply_op(self, op: ScenarioOp):
        try:
            self._apply(op)
        except LedgerError as e:
            if self.strict:
                raise
            self._emit(
                ev.REJECTED,
                op_seq=op.seq,
                op_kind=op.kind,
                error=type(e).__name__,
                detail=str(e),
            )

    def step_block(self, ops=()) -> list:
        """Apply one block: user ops, then block-level rewards and slashes."""
        start = len(self.log)
        block = self.level
        st = self.state
        st.block, st.cycle = block, self.cycle
        settle = []
        for op in ops:
            if op.kind in SETTLEMENT_KINDS:
                (self.deferred if op.deferred else settle).append(op)
            else:
                self.apply_op(op)
        for op in settle:
            self.apply_op(op)
        if (block + 1) % self.params.blocks_per_cycle == 0:
            self.end_cycle()
        self.level = block + 1
        st.block, st.cycle = self.level, self.cycle
        for fn in self.listeners:
            fn(self)
        return self.log.events[start:]

    def _model_reward(self, k) -> int:
        plan = self.plans.get(k)
        if not self.params.reward_per_block or plan is None or not plan.L:
            return 0
        gross = self.params.reward_per_block * self.params.blocks_per_cycle
        return gross * plan.assigned_total // plan.L

    def end_cycle(self):
        """Boundary k -> k+1: settle, mature, then allocate for k+1+delay."""
        k = self.state.cycle
        if self.state.S:
            reward = self._model_reward(k)
            if reward:
                self.ledger.accrue_rewards(reward, source="model")
        pending, self.deferred = self.deferred, []
        for op in pending:
            self.apply_op(op)
        self.ledger.mature_buckets(k + 1)
        ap = self.params.allocation
        eligible = self.registry.eligible_set(k + 1, ap)
        effective = k + 1 + self.params.consensus_rights_delay
        plan = compute_allocation(eligible, self.state.L, ap, k + 1, effective)
        self.plans[effective] = plan
        self._emit(ev.ALLOCATION, **plan.to_dict())
        self.eligible = sorted(r.address for r in eligible)

    # digests

    def state_dict(self) -> dict:
        return {
            "level": self.level,
            "ledger": self.state.to_dict(),
            "validators": [self.registry.records[a].to_dict() for a in sorted(self.registry.records)],
            "plans": [self.plans[c].to_dict() for c in sorted(self.plans)],
        }

    def state_digest(self) -> str:
        return hashlib.sha256(ev.canonical_json(self.state_dict()).encode()).hexdigest()

    def log_digest(self) -> str:
        h = hashlib.sha256()
        for e in self.log:
            h.update(e.to_json().encode())
            h.update(b"\n")
        return h.hexdigest()


def run_scenario(scenario: Scenario, strict: bool = False, world: World | None = None) -> World:
    world = world or World(scenario.params, strict=strict)
    by_block: dict[int, list] = {}
    for op in sorted(scenario.ops, key=lambda o: (o.at_block, o.seq)):
        by_block.setdefault(op.at_block, []).append(op)
    total = scenario.total_blocks()
    empty = ()
    for t in range(world.level, total):
        world.step_block(by_block.get(t, empty))
    return world


@dataclass
class InvariantReport:
    results: list = field(default_factory=list)  # (name, ok, detail)

    def add(self, name, ok, detail=""):
        self.results.append((name, bool(ok), detail))

    @property
    def ok(self) -> bool:
        return all(ok for _, ok, _ in self.results)

    def failures(self):
        return [r for r in self.results if not r[1]]

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "invariants": [{"name": n, "ok": ok, "detail": d} for n, ok, d in self.results],
        }


def check_state(st: LedgerState, plans: dict, unbonding_period: int) -> InvariantReport:
    rep = InvariantReport()
    rep.add(
        "zero_supply_floor",
        st.S > 0 or (st.L == 0 and st.rate().as_fraction() == 1),
        f"S={st.S} L={st.L}",
    )
    rep.add(
        "exchange_rate_definition",
        st.S == 0 or st.rate().as_fraction() == Fraction(st.L, st.S),
        f"R={st.rate()}",
    )
    bal_sum = sum(st.balances.values())
    rep.add(
        "supply_conservation",
        st.S == bal_sum == st.total_minted - st.total_burned,
        f"S={st.S} sum(balances)={bal_sum} minted-burned={st.total_minted - st.total_burned}",
    )
    bad_plans = []
    for c, p in plans.items():
        if p.assigned_total + p.unassigned != p.L or any(
            amt < 0 or amt > p.caps[a] for a, amt in p.assignments.items()
        ):
            bad_plans.append(c)
    rep.add("ledger_decomposition", not bad_plans, f"bad plans for cycles {bad_plans}")
    lhs = st.total_deposited + st.total_rewards - st.total_slashed - st.total_paid
    rhs = st.L + st.frozen_total() + st.finalizable_total()
    rep.add(
        "conservation",
        lhs == rhs and all(v >= 0 for v in st.finalizable.values()) and st.L >= 0,
        f"in-out={lhs} L+F+E={rhs}",
    )
    c = st.cycle
    out_of_window = [k for k in st.frozen if not c - unbonding_period < k <= c]
    overdrawn = [k for k, b in st.frozen.items() if not 0 <= b.remaining_total <= b.original_total]
    rep.add(
        "frozen_buckets",
        not out_of_window and not overdrawn,
        f"outside window {out_of_window}, overdrawn {overdrawn}",
    )
    owed: dict = {}
    stray = []
    for t in st.tickets.values():
        if t.status == FINALIZABLE:
            owed[t.requester] = owed.get(t.requester, 0) + t.payout
        elif t.status == PENDING and t.request_cycle not in st.frozen:
            stray.append(t.ticket_id)
        if t.maturity_cycle - t.request_cycle != unbonding_period:
            stray.append(t.ticket_id)
    owed = {a: v for a, v in owed.items() if v}
    fin = {a: v for a, v in st.finalizable.items() if v}
    rep.add("tickets", not stray and owed == fin, f"stray={stray} owed={owed} E={fin}")
    return rep


def check_invariants(world: World) -> InvariantReport:
    return check_state(world.state, world.plans, world.params.unbonding_period)

