"""Exception types shared across the simulator."""


class MarnetError(Exception):
    """Base class for all marnet errors."""


class SchemaMismatchError(MarnetError):
    """Evidence, belief, or token refers to a variable the schema does not define."""


class DegenerateEvidenceError(MarnetError):
    """Hard evidence left zero posterior mass on every value."""


class UndefinedInputError(MarnetError):
    """A KPI or chart was requested on input it is not defined for (empty trace, missing paradigm)."""


class StaleTraceError(MarnetError):
    """Trace file format version or config hash does not match expectations."""


class ConfigError(MarnetError):
    """Run or sweep configuration failed validation."""
