"""Exception types shared across the package."""


class ParitySimError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(ParitySimError, ValueError):
    """An operator dimension is invalid or two objects do not match in shape."""


class StateError(ParitySimError, ValueError):
    """A state vector or density matrix violates its validity invariants."""


class IntegratorError(ParitySimError, RuntimeError):
    """Master-equation integration left the physical-state manifold."""


class CoverageError(ParitySimError, ValueError):
    """A parity trajectory does not cover the requested time window."""


class NoOscillationError(ParitySimError, ValueError):
    """Fit input carries no oscillation (degenerate, e.g. constant data)."""


class NotResolvableError(ParitySimError, RuntimeError):
    """No pulse duration in the searched grid resolves the parity peaks."""


class ShotRecordError(ParitySimError, ValueError):
    """A shot-record file failed schema validation."""


class ConfigError(ParitySimError, ValueError):
    """A run configuration file is invalid."""
