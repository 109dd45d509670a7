"""Read-only HTTP/JSON query surface over immutable world snapshots."""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from fractions import Fraction
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from types import MappingProxyType
from urllib.parse import parse_qs, unquote, urlsplit

from .fixedpoint import burn_value, decimal_str


def stringify_ints(obj):
    """Integers go over the wire as decimal strings (no 53-bit truncation)."""
    if isinstance(obj, bool) or obj is None:
        return obj
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, dict):
        return {k: stringify_ints(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [stringify_ints(v) for v in obj]
    return obj


@dataclass(frozen=True)
class Snapshot:
    level: int
    cycle: int
    params: dict
    L: int
    S: int
    balances: MappingProxyType
    finalizable: MappingProxyType
    tickets: tuple  # ticket dicts, by id
    frozen: MappingProxyType
    validators: tuple
    plans: MappingProxyType  # effective cycle -> plan dict
    log_length: int

    @classmethod
    def capture(cls, world) -> "Snapshot":
        st = world.state
        cycle = world.cycle
        ap = world.params.allocation
        plan = world.plans.get(cycle)
        validators = []
        for addr in sorted(world.registry.records):
            rec = world.registry.records[addr]
            validators.append(
                {
                    "address": addr,
                    "fee_bp": rec.fee_bp,
                    "declared_capacity": rec.declared_capacity,
                    "self_bond": rec.self_bond,
                    "active": rec.active,
                    "eligible": world.registry.is_eligible(rec, cycle, ap),
                    "slash_history": list(rec.slash_history),
                    "assignment": plan.assignments.get(addr, 0) if plan else 0,
                }
            )
        return cls(
            level=world.level,
            cycle=cycle,
            params=world.params.to_dict(),
            L=st.L,
            S=st.S,
            balances=MappingProxyType(dict(st.balances)),
            finalizable=MappingProxyType(dict(st.finalizable)),
            tickets=tuple(st.tickets[i].to_dict() for i in sorted(st.tickets)),
            frozen=MappingProxyType(
                {c: {"original": b.original_total, "remaining": b.remaining_total} for c, b in st.frozen.items()}
            ),
            validators=tuple(validators),
            plans=MappingProxyType({c: p.to_dict() for c, p in world.plans.items()}),
            log_length=len(world.log),
        )

    # one method per endpoint; each reads only this snapshot

    def ledger_state(self) -> dict:
        rate = Fraction(self.L, self.S) if self.S else Fraction(1)
        return {
            "L": self.L,
            "S": self.S,
            "R": {
                "num": self.L,
                "den": self.S,
                "decimal": decimal_str(rate),
                "zero_supply_floor": self.S == 0,
            },
            "block": self.level,
            "cycle": self.cycle,
            "params": self.params,
            "log_length": self.log_length,
        }

    def validators_view(self) -> list:
        return [dict(v) for v in self.validators]

    def allocation(self, cycle: int) -> dict | None:
        return self.plans.get(cycle)

    def user_tickets(self, address: str) -> list:
        out = []
        for t in self.tickets:
            if t["requester"] != address:
                continue
            t = dict(t)
            bucket = self.frozen.get(t["request_cycle"])
            if t["status"] == "pending" and bucket is not None:
                t["projected_payout"] = (
                    t["frozen_amount"] * bucket["remaining"] // bucket["original"] if bucket["original"] else 0
                )
            out.append(t)
        return out

    def user(self, address: str) -> dict:
        units = self.balances.get(address, 0)
        return {
            "address": address,
            "token_balance": units,
            "value": burn_value(units, self.L, self.S) if self.S else 0,
            "finalizable": self.finalizable.get(address, 0),
            "tickets": self.user_tickets(address),
        }


class QueryService:
    """Holds the served snapshot; ``publish`` is the single swap point."""

    def __init__(self, snapshot: Snapshot):
        self._snapshot = snapshot
        self._lock = threading.Lock()

    @property
    def snapshot(self) -> Snapshot:
        with self._lock:
            return self._snapshot

    def publish(self, snapshot: Snapshot):
        with self._lock:
            self._snapshot = snapshot

    def handle(self, path: str):
        """Route a GET; returns (status, JSON-ready body)."""
        snap = self.snapshot
        parts = urlsplit(path)
        segs = [unquote(s) for s in parts.path.split("/") if s]
        if segs == ["ledger", "state"]:
            return 200, snap.ledger_state()
        if segs == ["ledger", "validators"]:
            return 200, snap.validators_view()
        if segs == ["ledger", "allocations"]:
            raw = parse_qs(parts.query).get("cycle", [None])[0]
            try:
                cycle = int(raw)
            except (TypeError, ValueError):
                return 400, {"error": "bad_request", "detail": "cycle query parameter must be an integer"}
            plan = snap.allocation(cycle)
            if plan is None:
                return 404, {"error": "not_found", "detail": f"no allocation effective for cycle {cycle}"}
            return 200, plan
        if len(segs) == 3 and segs[0] == "user" and segs[2] == "balance":
            return 200, snap.user(segs[1])
        if len(segs) == 3 and segs[0] == "user" and segs[2] == "tickets":
            return 200, {"address": segs[1], "tickets": snap.user_tickets(segs[1])}
        return 404, {"error": "not_found", "detail": f"no route for {parts.path}"}


class _Handler(BaseHTTPRequestHandler):
    server_version = "stezsim"

    def _send(self, status, body):
        payload = json.dumps(stringify_ints(body), sort_keys=True).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def do_GET(self):
        self._send(*self.server.service.handle(self.path))

    def _read_only(self):
        self._send(405, {"error": "method_not_allowed", "detail": "the query surface is read-only"})

    do_POST = do_PUT = do_PATCH = do_DELETE = _read_only

    def log_message(self, format, *args):
        pass


def make_server(service: QueryService, host="127.0.0.1", port=0) -> ThreadingHTTPServer:
    httpd = ThreadingHTTPServer((host, port), _Handler)
    httpd.daemon_threads = True
    httpd.service = service
    return httpd
