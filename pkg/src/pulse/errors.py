"""Exception hierarchy shared by every pulse module."""


class PulseError(Exception):
    """Base class. The CLI maps these to exit code 1."""


class MissingInputError(PulseError):
    """A required input file or record is absent. The CLI maps these to exit code 2."""


# energy model

class CostTableError(PulseError):
    pass


class MissingCostKeyError(CostTableError):
    def __init__(self, key: str):
        super().__init__(f"cost table is missing key {key!r}")
        self.key = key


class UnknownCostKeyError(CostTableError):
    def __init__(self, key: str):
        super().__init__(f"unknown cost key {key!r}")
        self.key = key


class NegativeCostError(CostTableError):
    def __init__(self, key: str, value: int):
        super().__init__(f"negative cost for {key!r}: {value}")
        self.key = key
        self.value = value


class CostTableReadError(MissingInputError, CostTableError):
    pass


class AccountingError(PulseError):
    """Activity counts violate a per-component cycle budget."""


# trace

class TraceError(PulseError):
    pass


class MalformedLineError(TraceError):
    def __init__(self, line: str, reason: str, lineno: int | None = None):
        where = f"line {lineno}: " if lineno is not None else ""
        super().__init__(f"{where}malformed trace line ({reason}): {line!r}")
        self.line = line
        self.lineno = lineno


class UnknownOpcodeError(TraceError):
    def __init__(self, mnemonic: str):
        super().__init__(f"unknown opcode {mnemonic!r}")
        self.mnemonic = mnemonic


class MarkerError(TraceError):
    pass


class MissingMarkerError(MarkerError):
    pass


class DuplicateMarkerError(MarkerError):
    pass


class MarkerOrderError(MarkerError):
    pass


class DuplicateListenerError(TraceError):
    pass


# features / classifier / pipeline

class FeatureError(PulseError):
    pass


class McaParseError(FeatureError):
    pass


class SweepError(PulseError):
    pass


class ClassifierError(PulseError):
    pass


class PipelineError(PulseError):
    pass


class MissingTraceError(MissingInputError):
    def __init__(self, sample_id: str, p: int, path=None):
        super().__init__(f"sample {sample_id} missing trace p={p}" + (f" ({path})" if path else ""))
        self.sample_id = sample_id
        self.p = p
