"""Marginal integration baseline estimator.

For component j and grid node x_j the full-dimensional local polynomial fit is
evaluated at (X_1^i', ..., x_j, ..., X_d^i') for every observation i' and the
j-th intercept is averaged over i'.  Direction j uses kernel K with bandwidth
h_j; every other direction uses the same kernel with the secondary bandwidth
b = c h_j / log(n).  A ridge (default n^-2) is added to the moment matrix.

The weight of observation i at evaluation point (x_g, X^i') factorizes as
K_j[g, i] * L[i', i], and so does every entry of the local design vector, so each
moment-matrix entry over all (g, i') pairs is a single (G, n) @ (n, n) product.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dataset import Dataset
from .errors import ConfigurationError, MiSingular
from .grid import Grid, GridFunction
from .kernel import eval_boundary_kernel, get_kernel
from .smoothers import kernel_weight_matrix

__all__ = ["MiConfig", "MiEstimate", "mi_estimate", "mi_fit", "secondary_bandwidth"]

MI_CONDITION_LIMIT = 1e14


@dataclass
class MiConfig:
    """Settings of the marginal integration estimator.

    ``secondary_base`` is the bandwidth vector the secondary bandwidths are
    derived from; it defaults to ``h`` but differs when the primary bandwidth
    is deliberately rescaled (e.g. ``h / 3``).
    """

    h: np.ndarray
    c_secondary: float = 3.0
    ridge: Optional[float] = None
    order: int = 1
    secondary_base: Optional[np.ndarray] = None
    cost_budget: float = 2e9

    def __post_init__(self):
        self.h = np.atleast_1d(np.asarray(self.h, dtype=float))
        if not self.c_secondary > 0:
            raise ConfigurationError("c_secondary must be positive")
        if self.ridge is not None and self.ridge < 0:
            raise ConfigurationError("ridge must be nonnegative")
        if self.secondary_base is not None:
            self.secondary_base = np.atleast_1d(np.asarray(self.secondary_base, dtype=float))


@dataclass(frozen=True)
class MiEstimate(GridFunction):
    """Grid estimate plus diagnostics.

    ``empty_windows`` counts (node, averaging observation) pairs where every
    kernel weight vanished and the ridge alone determined the solution.
    """

    empty_windows: int = 0
    secondary: float = float("nan")
    secondary_clamped: bool = False


def secondary_bandwidth(cfg: MiConfig, j: int, n: int) -> tuple[float, bool]:
    base = cfg.h if cfg.secondary_base is None else cfg.secondary_base
    b = float(cfg.c_secondary * base[j] / np.log(n))
    if b > 0.5:
        return 0.5, True
    return b, False


def mi_estimate(data: Dataset, j: int, cfg: MiConfig, kernel="epanechnikov",
                grid: Grid | None = None) -> MiEstimate:
    """Marginal integration estimate of m_j on the grid."""
    grid = grid or Grid()
    kernel = get_kernel(kernel)
    n, d, G = data.n, data.d, grid.size
    P = cfg.order + 1
    D = P * d
    if n < D + 1:
        raise ConfigurationError(f"n={n} too small for the full-dimensional fit ({D} parameters)")
    if not 0 <= j < d:
        raise ConfigurationError(f"component {j} out of range for d={d}")
    h = np.broadcast_to(cfg.h, (d,))
    ridge = n ** -2.0 if cfg.ridge is None else float(cfg.ridge)
    b, clamped = secondary_bandwidth(cfg, j, n)
    cost = float(G) * n * n * D * (D + 1) / 2
    if cost > cfg.cost_budget:
        warnings.warn(f"marginal integration for component {j}: ~{cost:.2g} kernel products",
                      stacklevel=2)

    X, Z, Y = data.X, data.Z, data.Y
    Kj = kernel_weight_matrix(kernel, h[j], grid, X[:, j])  # (G, n)
    tj = (X[None, :, j] - grid.nodes[:, None]) / h[j]
    L = np.ones((n, n))
    t_other = {}
    for k in range(d):
        if k != j:
            L *= eval_boundary_kernel(kernel, b, X[:, None, k], X[None, :, k])
            t_other[k] = (X[None, :, k] - X[:, None, k]) / b

    # entry e = (k, a) of the design vector splits into a node-side and an
    # observation-side factor, both indexed by the data index i
    def factors(k, a):
        if k == j:
            return Z[:, j] * tj**a, None
        return None, Z[:, k] * t_other[k] ** a

    entries = [(k, a) for k in range(d) for a in range(P)]
    fac = [factors(k, a) for k, a in entries]

    def prod(*parts):
        out = None
        for p in parts:
            if p is not None:
                out = p if out is None else out * p
        return out

    M = np.empty((G, n, D, D))
    rhs = np.empty((G, n, D))
    for e1 in range(D):
        g1, o1 = fac[e1]
        for e2 in range(e1, D):
            g2, o2 = fac[e2]
            left = Kj if prod(g1, g2) is None else Kj * prod(g1, g2)
            right = L if prod(o1, o2) is None else L * prod(o1, o2)
            M[:, :, e1, e2] = left @ right.T / n
            M[:, :, e2, e1] = M[:, :, e1, e2]
        left = Kj * Y if g1 is None else Kj * g1 * Y
        right = L if o1 is None else L * o1
        rhs[:, :, e1] = left @ right.T / n

    empty = int(np.count_nonzero((Kj @ L.T) == 0.0))
    M[..., np.arange(D), np.arange(D)] += ridge
    cond = np.linalg.cond(M)
    bad = np.flatnonzero(~(cond.ravel() <= MI_CONDITION_LIMIT))
    if bad.size:
        g, i = np.unravel_index(bad[0], cond.shape)
        point = X[i].copy()
        point[j] = grid.nodes[g]
        raise MiSingular(tuple(float(v) for v in point), float(cond[g, i]))
    theta = np.linalg.solve(M, rhs[..., None])[..., j * P, 0]
    return MiEstimate(grid, theta.mean(axis=1), empty_windows=empty, secondary=b,
                      secondary_clamped=clamped)


def mi_fit(data: Dataset, cfg: MiConfig, kernel="epanechnikov", grid: Grid | None = None,
           components=None) -> list[MiEstimate]:
    """Marginal integration estimates for the listed components (default: all)."""
    comps = range(data.d) if components is None else components
    return [mi_estimate(data, j, cfg, kernel, grid) for j in comps]
