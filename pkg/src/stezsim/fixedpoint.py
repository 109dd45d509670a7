"""Integer arithmetic for mutez and sTEZ token units.

Both units carry 6 decimals, so at genesis one mutez mints one token unit.
Every rounding is a floor, which always leaves the residue with the pool.
Python integers are unbounded; the u64/u128 bounds are checked explicitly so
results match a fixed-width implementation bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal, localcontext
from fractions import Fraction

from .errors import (
    ArithmeticOverflow,
    EmptySystem,
    InsufficientSupply,
    InvalidFraction,
    InvariantViolation,
)

Mutez = int
TokenUnits = int

MUTEZ_PER_TEZ = 1_000_000
UNITS_PER_TOKEN = 1_000_000
U64_MAX = 2**64 - 1
U128_MAX = 2**128 - 1
RATE_DIGITS = 12


def check_u64(value: int, what: str = "value") -> int:
    if value < 0:
        raise ArithmeticOverflow(f"{what} underflows: {value}")
    if value > U64_MAX:
        raise ArithmeticOverflow(f"{what} exceeds 64 bits: {value}")
    return value


def add(a: int, b: int, what: str = "sum") -> int:
    return check_u64(a + b, what)


def sub(a: int, b: int, what: str = "difference") -> int:
    return check_u64(a - b, what)


def _mul_div_floor(a: int, b: int, d: int) -> int:
    prod = a * b
    if prod > U128_MAX:
        raise ArithmeticOverflow(f"intermediate product exceeds 128 bits: {a} * {b}")
    return prod // d


def mint_amount(delta: Mutez, L: Mutez, S: TokenUnits) -> TokenUnits:
    """Token units minted for a deposit of ``delta`` mutez at rate L/S."""
    check_u64(delta, "deposit")
    check_u64(L, "L")
    check_u64(S, "S")
    if S == 0:
        if L != 0:
            raise InvariantViolation(f"zero supply with non-zero ledger L={L}")
        return delta
    if L == 0:
        raise InvariantViolation(f"non-zero supply S={S} backed by an empty ledger")
    return check_u64(_mul_div_floor(delta, S, L), "minted units")


def burn_value(u: TokenUnits, L: Mutez, S: TokenUnits) -> Mutez:
    """Mutez released by burning ``u`` units. Burning all of S returns all of L."""
    check_u64(u, "burn")
    check_u64(L, "L")
    if S == 0:
        raise EmptySystem("nothing to burn against: S = 0")
    if u > S:
        raise InsufficientSupply(f"burn of {u} units exceeds supply {S}")
    return _mul_div_floor(u, L, S)


def scale_by_remainder(amount: Mutez, p_num: int, p_den: int) -> Mutez:
    """floor(amount * (1 - p)): what is left after a slash of fraction p."""
    if p_den <= 0 or p_num < 0 or p_num > p_den:
        raise InvalidFraction(f"slash fraction {p_num}/{p_den} not in [0, 1]")
    check_u64(amount, "amount")
    return _mul_div_floor(amount, p_den - p_num, p_den)


def to_decimal(value: Fraction, digits: int = RATE_DIGITS) -> Decimal:
    """Render an exact rational with ``digits`` fractional digits, half-even."""
    with localcontext() as ctx:
        ctx.prec = 80
        q = Decimal(value.numerator) / Decimal(value.denominator)
        return q.quantize(Decimal(1).scaleb(-digits), rounding=ROUND_HALF_EVEN)


def decimal_str(value: Fraction, digits: int = RATE_DIGITS) -> str:
    return format(to_decimal(value, digits), "f")


@dataclass(frozen=True)
class ExchangeRate:
    """Tez per token, kept as the exact pair (L, S) and never reduced."""

    numerator: Mutez
    denominator: TokenUnits

    @property
    def is_floor(self) -> bool:
        return self.denominator == 0

    def as_fraction(self) -> Fraction:
        if self.is_floor:
            return Fraction(1)
        return Fraction(self.numerator, self.denominator)

    def to_decimal(self, digits: int = RATE_DIGITS) -> Decimal:
        return to_decimal(self.as_fraction(), digits)

    def __str__(self):
        return decimal_str(self.as_fraction())


def exchange_rate(L: Mutez, S: TokenUnits) -> ExchangeRate:
    if S == 0 and L != 0:
        raise InvariantViolation(f"zero supply with non-zero ledger L={L}")
    return ExchangeRate(L, S)
