"""Exception hierarchy shared by every transition in the simulator."""


class LedgerError(Exception):
    """Base class. Any transition that raises leaves the state untouched."""


class ArithmeticOverflow(LedgerError):
    pass


class InvariantViolation(LedgerError):
    pass


class InsufficientSupply(LedgerError):
    pass


class EmptySystem(LedgerError):
    pass


class InvalidFraction(LedgerError):
    pass


class EmptyDeposit(LedgerError):
    pass


class ZeroBurn(LedgerError):
    pass


class InsufficientBalance(LedgerError):
    pass


class UnknownTicket(LedgerError):
    pass


class TicketNotMatured(LedgerError):
    """Finalization attempted before the ticket's maturity cycle."""


class TicketAlreadyPaid(LedgerError):
    pass


class DuplicateValidator(LedgerError):
    pass


class UnknownValidator(LedgerError):
    pass


class FeeOutOfRange(LedgerError):
    pass


class InvalidParameter(LedgerError):
    pass


class ScenarioError(Exception):
    """Malformed scenario input, raised before anything executes."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class IncompleteLog(Exception):
    """The event log has gaps or is missing its trailer."""


class ReplayMismatch(Exception):
    """A logged event disagrees with the state rebuilt from earlier events."""


class MissingFxRate(Exception):
    pass
