"""Lifecycle events and their canonical JSON-lines encoding."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

DEPOSIT = "deposit"
REDEMPTION_REQUESTED = "redemption_requested"
BUCKET_MATURED = "bucket_matured"
REDEMPTION_FINALIZED = "redemption_finalized"
REWARD = "reward"
SLASH = "slash"
ALLOCATION = "allocation"
VALIDATOR_REGISTERED = "validator_registered"
VALIDATOR_UPDATED = "validator_updated"
VALIDATOR_UNREGISTERED = "validator_unregistered"
REJECTED = "rejected"

# Framing lines written around the events in a log file; not events themselves.
HEADER = "header"
TRAILER = "trailer"

FLOW_KINDS = frozenset({DEPOSIT, REDEMPTION_REQUESTED})


@dataclass(frozen=True)
class Event:
    sequence: int
    block: int
    cycle: int
    kind: str
    data: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "sequence": self.sequence,
            "block": self.block,
            "cycle": self.cycle,
            "kind": self.kind,
            "data": self.data,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Event":
        return cls(d["sequence"], d["block"], d["cycle"], d["kind"], d.get("data", {}))


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


class EventLog:
    """Append-only, totally ordered event sink."""

    def __init__(self):
        self.events: list[Event] = []

    def emit(self, block: int, cycle: int, kind: str, **data) -> Event:
        ev = Event(len(self.events), block, cycle, kind, data)
        self.events.append(ev)
        return ev

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)


# Steps of the deposit -> allocate -> redeem -> finalize walkthrough.
_LIFECYCLE_STEPS = {
    DEPOSIT: ("1", "2a", "2b"),
    ALLOCATION: ("3",),
    REDEMPTION_REQUESTED: ("4", "5"),
    REDEMPTION_FINALIZED: ("6",),
}


def lifecycle_trace(events) -> list[str]:
    """Walkthrough steps in order of first appearance.

    A deposit covers the transfer, the ledger credit and the mint; a redemption
    request covers the burn and the queued release. Allocations only count once
    they actually place stake with a validator.
    """
    seen: list[str] = []
    for ev in events:
        steps = _LIFECYCLE_STEPS.get(ev.kind)
        if not steps:
            continue
        if ev.kind == ALLOCATION and not int(ev.data.get("assigned_total", 0)):
            continue
        for s in steps:
            if s not in seen:
                seen.append(s)
    return seen
