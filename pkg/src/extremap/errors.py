"""Exception types shared across the package.

The CLI maps these onto exit codes: usage/config problems exit 2,
checked-property violations exit 1, resource budgets exit 3.
"""

from __future__ import annotations


class ExtremapError(Exception):
    """Base class for package errors."""


class TopologyMismatchError(ExtremapError):
    """Set operation between a circle set and a line set."""


class RadiusRangeError(ExtremapError):
    """Ball radius outside (0, 1/2)."""


class BoundaryPointError(ExtremapError):
    """Map applied at a branch boundary; the caller should resample."""


class CapExceededError(ExtremapError):
    """Requested iteration depth exceeds the configured cap."""


class ComponentBudgetError(ExtremapError):
    """Exact interval computation would exceed the component budget.

    Signals that the caller should fall back to Monte Carlo.
    """


class PeriodUndecidedError(ExtremapError):
    """Period detection inconclusive at the cap; caller must supply q."""


class InfeasibleError(ExtremapError):
    """No feasible blocking parameters (or degenerate configuration)."""


class ConvergenceError(ExtremapError):
    """An iterative numerical routine failed to converge."""
