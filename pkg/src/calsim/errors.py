"""Exception types raised by calsim; the CLI maps them to exit codes."""


class CalsimError(Exception):
    exit_code = 1


class ConfigError(CalsimError):
    """Invalid or inconsistent run configuration (exit code 2)."""

    exit_code = 2


class NumericalError(CalsimError):
    """Eigensolver failure, singular FGA matrix beyond threshold, etc. (exit code 3)."""

    exit_code = 3


class MemoryBudgetError(CalsimError):
    """Accumulator would exceed the configured memory budget (exit code 4)."""

    exit_code = 4


class SingularZError(NumericalError):
    def __init__(self, trajectory_ids):
        self.trajectory_ids = list(trajectory_ids)
        super().__init__(f"singular Z matrix for trajectories {self.trajectory_ids[:10]}")
