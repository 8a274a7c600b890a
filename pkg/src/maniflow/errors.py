"""Exception hierarchy shared across the library."""


class DiffError(Exception):
    """Base class for tape/differentiation failures."""


class NonFiniteError(DiffError):
    """A recorded primitive produced NaN or Inf."""

    def __init__(self, primitive: str):
        super().__init__(f"non-finite value produced by primitive '{primitive}'")
        self.primitive = primitive


class TapeConsumedError(DiffError):
    """backward() was called twice on the same tape."""


class ShapeError(DiffError):
    """Mismatched vector lengths fed to a tape operation."""


class OptError(Exception):
    """Base class for optimizer failures."""


class NonFiniteGradError(OptError):
    """A gradient fed to the optimizer contains NaN or Inf."""


class DomainError(ValueError):
    """A coordinate lies outside its manifold factor's range."""


class PoleError(DomainError):
    """Cylinder projection evaluated at (or too close to) a sphere pole."""


class NoBracketError(RuntimeError):
    """Bisection could not bracket a root (defensive; impossible for monotone maps)."""


class TrainDivergedError(RuntimeError):
    """Training loss became non-finite; carries the last good parameter snapshot."""

    def __init__(self, iteration: int, params):
        super().__init__(f"non-finite loss at iteration {iteration}")
        self.iteration = iteration
        self.params = params


class ConfigError(ValueError):
    """Experiment config failed schema validation."""
