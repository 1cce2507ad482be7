"""Exception types shared across the package."""


class SpikeGanError(Exception):
    pass


class ConfigError(SpikeGanError, ValueError):
    """Invalid configuration or incompatible shapes."""


class UsageError(SpikeGanError, ValueError):
    """An operation was called with arguments outside its contract."""


class TopologyError(SpikeGanError, ValueError):
    pass


class DatasetError(SpikeGanError, ValueError):
    pass


class NumericError(SpikeGanError, ArithmeticError):
    """Non-finite loss or gradient; carries a diagnostics dict."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})

    def __str__(self):
        base = super().__str__()
        if not self.diagnostics:
            return base
        detail = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        return f"{base} ({detail})"
