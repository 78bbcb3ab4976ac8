"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible shapes for the requested kernel."""


class DataError(ValueError):
    """Malformed or inconsistent input data (CSV rows, feature configs, labels)."""


class DataFormatError(ValueError):
    """A binary artifact (checkpoint or feature file) is malformed."""


class ConfigError(ValueError):
    """A run configuration violates one of its documented constraints."""


class DivergedError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, gamma: float, epoch: int | None = None):
        self.gamma = gamma
        self.epoch = epoch
        at = f" at epoch {epoch}" if epoch is not None else ""
        super().__init__(f"training diverged{at} with learning rate {gamma}")


class SweepFailedError(RuntimeError):
    """Every learning-rate candidate in a sweep diverged."""

    def __init__(self, failures: dict[float, str]):
        self.failures = failures
        detail = "; ".join(f"gamma={g}: {msg}" for g, msg in sorted(failures.items()))
        super().__init__(f"all learning-rate candidates failed: {detail}")
