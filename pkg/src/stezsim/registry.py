"""Validator registry, eligibility screens and the greedy stake allocation."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

from .errors import DuplicateValidator, FeeOutOfRange, InvalidParameter, UnknownValidator
from .fixedpoint import MUTEZ_PER_TEZ, Mutez, check_u64

MAX_FEE_BP = 10_000


@dataclass
class AllocationParams:
    overstake_multiple: int = 9
    global_cap_bp: int = 1_000  # 10% of L
    min_self_bond: Mutez = 6_000 * MUTEZ_PER_TEZ
    slash_lookback: int = 10

    def validate(self):
        if self.overstake_multiple <= 0:
            raise InvalidParameter("overstake_multiple must be positive")
        if not 0 < self.global_cap_bp <= MAX_FEE_BP:
            raise InvalidParameter("global_cap_bp must be in (0, 10000]")
        if self.min_self_bond < 0 or self.slash_lookback < 0:
            raise InvalidParameter("min_self_bond and slash_lookback must be non-negative")


@dataclass
class ValidatorRecord:
    address: str
    fee_bp: int
    declared_capacity: Mutez
    self_bond: Mutez
    registered_at: tuple  # (cycle, sequence)
    slash_history: list = field(default_factory=list)
    active: bool = True
    performance: dict = field(default_factory=dict)  # reserved, unused

    @property
    def sequence(self) -> int:
        return self.registered_at[1]

    def rank_key(self):
        return (self.fee_bp, self.sequence, self.address)

    def to_dict(self) -> dict:
        return {
            "address": self.address,
            "fee_bp": self.fee_bp,
            "declared_capacity": self.declared_capacity,
            "self_bond": self.self_bond,
            "registered_at": list(self.registered_at),
            "slash_history": list(self.slash_history),
            "active": self.active,
        }


@dataclass
class AllocationPlan:
    for_cycle: int
    effective_cycle: int
    L: Mutez
    assignments: dict  # address -> Mutez, in rank order
    caps: dict  # address -> effective cap at computation time
    fees: dict  # address -> fee_bp at computation time
    unassigned: Mutez

    @property
    def assigned_total(self) -> int:
        return sum(self.assignments.values())

    def to_dict(self) -> dict:
        return {
            "for_cycle": self.for_cycle,
            "effective_cycle": self.effective_cycle,
            "L": self.L,
            "assignments": [
                {
                    "validator": a,
                    "assigned": amt,
                    "fee_bp": self.fees[a],
                    "cap": self.caps[a],
                    "at_cap": amt == self.caps[a],
                }
                for a, amt in self.assignments.items()
            ],
            "assigned_total": self.assigned_total,
            "unassigned": self.unassigned,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AllocationPlan":
        rows = d["assignments"]
        return cls(
            for_cycle=d["for_cycle"],
            effective_cycle=d["effective_cycle"],
            L=d["L"],
            assignments={r["validator"]: r["assigned"] for r in rows},
            caps={r["validator"]: r["cap"] for r in rows},
            fees={r["validator"]: r["fee_bp"] for r in rows},
            unassigned=d["unassigned"],
        )


def _check_fee(fee_bp):
    if not isinstance(fee_bp, int) or not 0 <= fee_bp <= MAX_FEE_BP:
        raise FeeOutOfRange(f"fee {fee_bp} bp outside [0, {MAX_FEE_BP}]")


class Registry:
    def __init__(self):
        self.records: dict[str, ValidatorRecord] = {}
        self.next_sequence = 0

    def copy(self) -> "Registry":
        return copy.deepcopy(self)

    def get(self, address) -> ValidatorRecord:
        rec = self.records.get(address)
        if rec is None:
            raise UnknownValidator(f"validator {address} is not registered")
        return rec

    def register(self, address, fee_bp, capacity, self_bond, cycle) -> ValidatorRecord:
        old = self.records.get(address)
        if old is not None and old.active:
            raise DuplicateValidator(f"validator {address} already registered")
        _check_fee(fee_bp)
        check_u64(capacity, "capacity")
        check_u64(self_bond, "self_bond")
        rec = ValidatorRecord(
            address=address,
            fee_bp=fee_bp,
            declared_capacity=capacity,
            self_bond=self_bond,
            registered_at=(cycle, self.next_sequence),
            slash_history=list(old.slash_history) if old else [],
        )
        self.next_sequence += 1
        self.records[address] = rec
        return rec

    def update(self, address, fee_bp=None, capacity=None) -> ValidatorRecord:
        rec = self.get(address)
        if not rec.active:
            raise UnknownValidator(f"validator {address} is unregistered")
        if fee_bp is not None:
            _check_fee(fee_bp)
        if capacity is not None:
            check_u64(capacity, "capacity")
        if fee_bp is not None:
            rec.fee_bp = fee_bp
        if capacity is not None:
            rec.declared_capacity = capacity
        return rec

    def unregister(self, address) -> ValidatorRecord:
        rec = self.get(address)
        if not rec.active:
            raise UnknownValidator(f"validator {address} is already unregistered")
        rec.active = False
        return rec

    def record_slash(self, address, cycle):
        self.get(address).slash_history.append(cycle)

    def is_eligible(self, rec: ValidatorRecord, at_cycle: int, params: AllocationParams) -> bool:
        return (
            rec.active
            and rec.registered_at[0] < at_cycle
            and not any(s <= at_cycle <= s + params.slash_lookback for s in rec.slash_history)
            and rec.self_bond >= params.min_self_bond
            and rec.declared_capacity > 0
        )

    def eligible_set(self, at_cycle: int, params: AllocationParams) -> list[ValidatorRecord]:
        return [r for r in self.records.values() if self.is_eligible(r, at_cycle, params)]


def effective_cap(rec: ValidatorRecord, L: Mutez, params: AllocationParams) -> Mutez:
    return min(
        rec.declared_capacity,
        params.overstake_multiple * rec.self_bond,
        L * params.global_cap_bp // MAX_FEE_BP,
    )


def compute_allocation(eligible, L: Mutez, params: AllocationParams, for_cycle=0, effective_cycle=0):
    """Fill the cheapest validators first, each up to its cap.

    Rank is (fee, registration sequence, address); whatever no cap can absorb
    stays unassigned.
    """
    remaining = L
    assignments, caps, fees = {}, {}, {}
    for rec in sorted(eligible, key=ValidatorRecord.rank_key):
        cap = effective_cap(rec, L, params)
        take = min(remaining, cap)
        assignments[rec.address] = take
        caps[rec.address] = cap
        fees[rec.address] = rec.fee_bp
        remaining -= take
    return AllocationPlan(for_cycle, effective_cycle, L, assignments, caps, fees, remaining)
