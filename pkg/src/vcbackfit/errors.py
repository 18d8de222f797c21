"""Exception types raised by the estimators and the CLI pipeline."""

from __future__ import annotations


class VcBackfitError(Exception):
    """Base class for all package errors."""


class ConfigurationError(VcBackfitError, ValueError):
    """Invalid bandwidth, grid size, order or other configuration value."""


class DomainError(VcBackfitError, ValueError):
    """Input outside the domain of an operation (e.g. x outside [0, 1])."""


class EmptyWindow(VcBackfitError):
    """Local moment matrix singular at a grid node.

    Usually means the bandwidth is too small for the local data density.
    """

    def __init__(self, component: int, node: float, condition: float = float("inf")):
        self.component = component
        self.node = node
        self.condition = condition
        super().__init__(
            f"component {component}: local moment matrix singular at x={node:.6g} "
            f"(condition number {condition:.3g}); bandwidth too small for the data?"
        )


class SingularPsi(EmptyWindow):
    """Raised by the backfitting solver when a supplied smoother set has a singular Psi_j."""


class NonConvergence(VcBackfitError):
    def __init__(self, final_delta: float, history: list[float]):
        self.final_delta = final_delta
        self.history = list(history)
        super().__init__(
            f"backfitting did not converge after {len(history)} sweeps "
            f"(last delta {final_delta:.3e})"
        )


class SingularSystem(VcBackfitError):
    """Stacked backfitting system is singular (concurvity).

    ``null_direction`` holds a unit vector spanning (approximately) the null space,
    laid out as ``(d, G, order + 1)``.
    """

    def __init__(self, message: str, null_direction=None, condition: float = float("inf")):
        self.null_direction = null_direction
        self.condition = condition
        super().__init__(message)


class MiSingular(VcBackfitError):
    def __init__(self, point, condition: float):
        self.point = point
        self.condition = condition
        super().__init__(
            f"marginal integration: ridged moment matrix singular at x={point} "
            f"(condition number {condition:.3g})"
        )


class PluginSingular(VcBackfitError):
    """Rank-deficient design in one of the rule-of-thumb regressions."""


class NegativeVarianceIntegral(VcBackfitError):
    def __init__(self, component: int, value: float, reason: str = ""):
        self.component = component
        self.value = value
        msg = f"component {component}: estimated variance integral is {value:.4g}"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg + "; no plug-in bandwidth available for this model")


class UnsupportedOrder(VcBackfitError):
    pass


class IngestError(VcBackfitError, ValueError):
    pass
