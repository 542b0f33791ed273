"""Exception hierarchy shared by the engine, ingest and CLI."""
from __future__ import annotations


class CAPGameError(ValueError):
    """Base class for every error raised by capgame."""


class InvalidConfigError(CAPGameError):
    pass


class InvalidWeightsError(CAPGameError):
    pass


class InvalidReturnsError(CAPGameError):
    pass


class InvestorBankruptError(CAPGameError):
    """Investor's gross return for a round was <= 0; the path is rejected."""


class SpeculatorBankruptError(CAPGameError):
    """A speculator policy drove its ledger negative.

    For the witness strategies this means the strategy failed, it is never
    clamped away.
    """

    def __init__(self, message: str, label: str | None = None, round: int | None = None):
        super().__init__(message)
        self.label = label
        self.round = round


class MissingLedgerError(CAPGameError):
    pass


class IngestError(CAPGameError):
    """Malformed return file; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.line = line
        self.path = path
