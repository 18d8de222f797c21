"""Uniform grids on [0, 1] and functions represented by their grid values."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, DomainError

__all__ = ["Grid", "GridFunction", "GridVectorFunction", "integrate", "weighted_l2_distance", "interpolate"]

DEFAULT_GRID_SIZE = 101


@dataclass(frozen=True)
class Grid:
    """``size`` equally spaced nodes from 0 to 1 (odd, at least 21)."""

    size: int = DEFAULT_GRID_SIZE

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 21 or self.size % 2 == 0:
            raise ConfigurationError(f"grid size must be an odd integer >= 21, got {self.size}")

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.size)

    @property
    def spacing(self) -> float:
        return 1.0 / (self.size - 1)

    @cached_property
    def weights(self) -> np.ndarray:
        """Composite Simpson weights."""
        w = np.ones(self.size)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        w *= self.spacing / 3.0
        w.setflags(write=False)
        return w

    def integrate(self, values, axis: int = 0):
        """Simpson integral of grid values along ``axis``."""
        values = np.asarray(values, dtype=float)
        return np.tensordot(self.weights, np.moveaxis(values, axis, 0), axes=(0, 0))

    def interpolate(self, values, x) -> np.ndarray:
        """Piecewise-linear interpolation of grid ``values`` (shape (G,) or (G, k)) at ``x``."""
        x = np.asarray(x, dtype=float)
        if np.any(~np.isfinite(x)) or np.any((x < 0.0) | (x > 1.0)):
            raise DomainError("interpolation points must lie in [0, 1]")
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            return np.interp(x, self.nodes, values)
        pos = x * (self.size - 1)
        lo = np.minimum(np.floor(pos).astype(int), self.size - 2)
        frac = (pos - lo)[..., None]
        return values[lo] * (1.0 - frac) + values[lo + 1] * frac


@dataclass(frozen=True)
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.size,):
            raise ConfigurationError(f"expected {self.grid.size} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError("grid function values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid: Grid, f) -> "GridFunction":
        return cls(grid, np.asarray(f(grid.nodes), dtype=float))

    def integrate(self) -> float:
        return float(self.grid.integrate(self.values))

    def __call__(self, x):
        return self.grid.interpolate(self.values, x)


@dataclass(frozen=True)
class GridVectorFunction:
    """(order + 1)-vector of functions; ``values[g]`` is the vector at node g."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != self.grid.size:
            raise ConfigurationError(f"expected shape ({self.grid.size}, k), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError("grid function values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def length(self) -> int:
        return self.values.shape[1]

    def component(self, k: int) -> GridFunction:
        return GridFunction(self.grid, self.values[:, k])

    def __call__(self, x):
        return self.grid.interpolate(self.values, x)


def integrate(f: GridFunction) -> float:
    return f.integrate()


def interpolate(f: GridFunction, x):
    return f(x)


def weighted_l2_distance(f: GridFunction, g: GridFunction, w: GridFunction) -> float:
    """sqrt of the Simpson integral of (f - g)^2 w."""
    if not (f.grid == g.grid == w.grid):
        raise ConfigurationError("functions live on different grids")
    if np.any(w.values < 0):
        raise DomainError("weight function must be nonnegative")
    val = f.grid.integrate((f.values - g.values) ** 2 * w.values)
    return float(np.sqrt(max(val, 0.0)))
