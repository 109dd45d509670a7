"""Deterministic desk-scale simulator of an enshrined liquid staking ledger."""
from .engine import ChainParams, Scenario, ScenarioOp, World, check_invariants, parse_scenario, run_scenario
from .fixedpoint import ExchangeRate, burn_value, mint_amount, scale_by_remainder
from .ledger import Ledger, LedgerState
from .registry import AllocationParams, Registry, compute_allocation, effective_cap

__all__ = [
    "AllocationParams",
    "ChainParams",
    "ExchangeRate",
    "Ledger",
    "LedgerState",
    "Registry",
    "Scenario",
    "ScenarioOp",
    "World",
    "burn_value",
    "check_invariants",
    "compute_allocation",
    "effective_cap",
    "mint_amount",
    "parse_scenario",
    "run_scenario",
    "scale_by_remainder",
]
