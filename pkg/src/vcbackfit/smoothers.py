"""One- and two-dimensional kernel smoothers consumed by the backfitting solvers.

All kernel windows are boundary corrected.  On the grid, the normalizer of each
data point's window is the grid's own Simpson rule, so that the discrete
integral of ``K_h(., X^i)`` is exactly one; this keeps the discretized
backfitting equations an exact projection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .errors import ConfigurationError, EmptyWindow
from .grid import Grid, GridFunction, GridVectorFunction
from .kernel import BaseKernel, check_bandwidth, get_kernel

__all__ = [
    "design_vector",
    "kernel_weight_matrix",
    "SmootherSet",
    "build_smoothers",
    "pilot_density",
    "CONDITION_LIMIT",
]

CONDITION_LIMIT = 1e12


def design_vector(x, u, h: float, order: int) -> np.ndarray:
    """(1, t, t^2, ..., t^order) with t = (u - x) / h; broadcasts, powers on the last axis."""
    t = (np.asarray(u, dtype=float) - np.asarray(x, dtype=float)) / h
    return t[..., None] ** np.arange(order + 1)


def kernel_weight_matrix(kernel, h: float, grid: Grid, points) -> np.ndarray:
    """``(G, n)`` matrix of boundary-corrected weights K_h(x_g, points_i).

    Each column integrates to one under the grid's Simpson rule.
    """
    kernel = get_kernel(kernel)
    h = check_bandwidth(h)
    points = np.asarray(points, dtype=float)
    raw = kernel((grid.nodes[:, None] - points[None, :]) / h)
    norm = grid.weights @ raw
    if np.any(norm <= 0.0):
        raise ConfigurationError(
            f"bandwidth {h} too small for a grid of {grid.size} nodes (empty kernel window)"
        )
    return raw / norm


@dataclass(frozen=True)
class SmootherSet:
    """Kernel quantities on the grid for local polynomial order ``order``.

    Attributes
    ----------
    tilde_m : ndarray, shape (d, G, order + 1)
        Marginal local polynomial fits; component 0 estimates m_j.
    psi : ndarray, shape (d, G, order + 1, order + 1)
        Local moment matrices Psi_j(x_j).  For order 0 this is q_j(x_j).
    psi_pair : dict
        ``psi_pair[(j, k)]`` for ``j < k`` has shape (G, G, order + 1, order + 1)
        and holds Psi_jk(x_j, x_k).  Use :meth:`pair` for any ordered pair.
    p_hat : ndarray, shape (d, G)
        Marginal density estimates.
    """

    order: int
    bandwidths: np.ndarray
    grid: Grid
    kernel: BaseKernel
    tilde_m: np.ndarray
    psi: np.ndarray
    psi_pair: dict
    p_hat: np.ndarray

    @property
    def d(self) -> int:
        return self.tilde_m.shape[0]

    def pair(self, j: int, k: int) -> np.ndarray:
        if j == k:
            raise ValueError("pair() needs j != k")
        if j < k:
            return self.psi_pair[(j, k)]
        return self.psi_pair[(k, j)].transpose(1, 0, 3, 2)

    def tilde(self, j: int) -> GridVectorFunction:
        return GridVectorFunction(self.grid, self.tilde_m[j])

    def density(self, j: int) -> GridFunction:
        return GridFunction(self.grid, self.p_hat[j])


def _check_local_matrices(psi: np.ndarray, j: int, grid: Grid) -> None:
    eig = np.linalg.eigvalsh(psi)
    lo, hi = eig[:, 0], eig[:, -1]
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(lo > 0, hi / lo, np.inf)
    bad = np.flatnonzero(~(cond <= CONDITION_LIMIT))
    if bad.size:
        g = bad[0]
        raise EmptyWindow(j, float(grid.nodes[g]), float(cond[g]))


def build_smoothers(data: Dataset, h, kernel="epanechnikov", order: int = 1,
                    grid: Grid | None = None) -> SmootherSet:
    """Compute tilde m_j, Psi_j, Psi_jk and p_hat_j on the grid.

    Raises
    ------
    EmptyWindow
        If some Psi_j(x) is singular (condition number above ``CONDITION_LIMIT``).
    """
    grid = grid or Grid()
    kernel = get_kernel(kernel)
    order = int(order)
    if order < 0:
        raise ConfigurationError("order must be nonnegative")
    h = np.broadcast_to(np.asarray(h, dtype=float), (data.d,)).copy()
    for hj in h:
        check_bandwidth(hj)
    if data.n < data.d * (order + 1):
        raise ConfigurationError(f"n={data.n} too small for d={data.d} at order {order}")

    n, d, G, P = data.n, data.d, grid.size, order + 1
    Y = data.Y

    # U[j][g, a, i] = t^a K_h(x_g, X_j^i) Z_j^i,  Phi[j][g, a, i] = t^a
    U = []
    tilde = np.empty((d, G, P))
    psi = np.empty((d, G, P, P))
    p_hat = np.empty((d, G))
    for j in range(d):
        Kj = kernel_weight_matrix(kernel, h[j], grid, data.X[:, j])
        p_hat[j] = Kj.mean(axis=1)
        phi = np.moveaxis(design_vector(grid.nodes[:, None], data.X[None, :, j], h[j], order), -1, 1)
        Uj = phi * (Kj * data.Z[:, j])[:, None, :]
        psi[j] = np.einsum("gai,gbi,i->gab", Uj, phi, data.Z[:, j]) / n
        psi[j] = 0.5 * (psi[j] + psi[j].transpose(0, 2, 1))
        _check_local_matrices(psi[j], j, grid)
        rhs = Uj @ Y / n
        tilde[j] = np.linalg.solve(psi[j], rhs[..., None])[..., 0]
        U.append(Uj.reshape(G * P, n))

    pairs = {}
    for j in range(d):
        for k in range(j + 1, d):
            block = (U[j] @ U[k].T / n).reshape(G, P, G, P)
            pairs[(j, k)] = np.ascontiguousarray(block.transpose(0, 2, 1, 3))

    return SmootherSet(order=order, bandwidths=h, grid=grid, kernel=kernel, tilde_m=tilde,
                       psi=psi, psi_pair=pairs, p_hat=p_hat)


def pilot_density(data: Dataset, j: int, h: float, grid: Grid | None = None,
                  kernel="epanechnikov") -> GridFunction:
    """Boundary-corrected kernel density estimate of X_j on the grid."""
    grid = grid or Grid()
    if not 0 <= j < data.d:
        raise ConfigurationError(f"component {j} out of range for d={data.d}")
    K = kernel_weight_matrix(kernel, h, grid, data.X[:, j])
    return GridFunction(grid, K.mean(axis=1))
