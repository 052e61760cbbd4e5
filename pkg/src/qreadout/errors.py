"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Bad configuration: unknown keys, unparseable files, invalid values."""


class GridMismatchError(ConfigError):
    """A supplied record's grid (dt, LO phase) does not match the config."""


class InvariantViolation(RuntimeError):
    """A numerical state invariant was broken beyond tolerance.

    Usually signals a too-large time step or too-small Fock truncation.
    Carries the offending step index when raised inside an integrator loop.
    """

    def __init__(self, message, step=None):
        if step is not None:
            message = f"{message} (at step {step})"
        super().__init__(message)
        self.step = step


class TruncationError(InvariantViolation):
    """Top-Fock occupancy guard tripped: increase n_max."""


class PositivityError(InvariantViolation):
    """Density matrix developed a negative eigenvalue beyond tolerance."""
