"""Smooth backfitting for the varying-coefficient model.

Both solvers iterate Gauss-Seidel sweeps over components 1..d on the grid:

    m_j <- tilde m_j - sum_{k != j} int Psi_j(x_j)^{-1} Psi_jk(x_j, x_k) m_k(x_k) dx_k

with the integrals done by Simpson's rule.  The local constant solver works on
the scalar quantities q_j, q_jk directly; the local polynomial solver on the
(order + 1)-vectors.  ``solve_direct_*`` assemble the same discretized equations
as one dense linear system and are used as test oracles.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from math import factorial
from typing import Callable, Optional, Sequence

import numpy as np

from .dataset import Dataset
from .errors import ConfigurationError, EmptyWindow, NonConvergence, SingularPsi, SingularSystem
from .grid import Grid, GridFunction, GridVectorFunction
from .smoothers import CONDITION_LIMIT, SmootherSet, design_vector, kernel_weight_matrix

__all__ = [
    "BackfitConfig",
    "LcFitResult",
    "LpFitResult",
    "backfit_local_constant",
    "backfit_local_polynomial",
    "solve_direct_lc",
    "solve_direct_lp",
    "backfit_residual",
    "oracle_component_fit",
    "check_uniqueness",
]


@dataclass
class BackfitConfig:
    """Stopping rule and initialization for the backfitting sweeps.

    ``init`` is ``"tilde_m"``, ``"zeros"`` or a sequence of d initial estimates
    (GridFunction, GridVectorFunction or arrays of shape (G,) / (G, order + 1)).
    """

    tol: float = 1e-11
    max_iter: int = 200
    init: object = "tilde_m"
    raise_on_failure: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigurationError("tol must be positive")
        if int(self.max_iter) < 1:
            raise ConfigurationError("max_iter must be at least 1")


@dataclass
class LcFitResult:
    m_hat: list
    iterations: int
    final_delta: float
    converged: bool
    history: list = field(default_factory=list)


@dataclass
class LpFitResult:
    m_hat: list
    derivatives: list
    iterations: int
    final_delta: float
    converged: bool
    history: list = field(default_factory=list)
    bandwidths: Optional[np.ndarray] = None

    @property
    def curves(self) -> np.ndarray:
        """``(d, G)`` array of the coefficient-function estimates."""
        return np.array([m.values[:, 0] for m in self.m_hat])


def _initial_values(s: SmootherSet, cfg: BackfitConfig, P: int) -> list[np.ndarray]:
    G = s.grid.size
    if isinstance(cfg.init, str):
        if cfg.init == "tilde_m":
            return [s.tilde_m[j, :, :P].reshape(-1).copy() for j in range(s.d)]
        if cfg.init == "zeros":
            return [np.zeros(G * P) for _ in range(s.d)]
        raise ConfigurationError(f"unknown init policy {cfg.init!r}")
    if len(cfg.init) != s.d:
        raise ConfigurationError(f"need {s.d} initial estimates, got {len(cfg.init)}")
    out = []
    for f in cfg.init:
        v = np.asarray(getattr(f, "values", f), dtype=float)
        out.append(v.reshape(G, -1)[:, :P].reshape(-1).copy())
    return out


def _lc_operators(s: SmootherSet) -> dict:
    """T[(j, k)][g, h] = q_jk(x_g, x_h) / q_j(x_g) * w_h."""
    w = s.grid.weights
    q = s.psi[:, :, 0, 0]
    for j in range(s.d):
        bad = np.flatnonzero(~(q[j] > 0))
        if bad.size:
            raise SingularPsi(j, float(s.grid.nodes[bad[0]]))
    T = {}
    for j in range(s.d):
        for k in range(s.d):
            if k != j:
                T[(j, k)] = s.pair(j, k)[:, :, 0, 0] / q[j][:, None] * w[None, :]
    return T


def _lp_operators(s: SmootherSet) -> dict:
    """T[(j, k)] as a (G P, G P) matrix acting on the flattened m_k."""
    G, P = s.grid.size, s.order + 1
    w = s.grid.weights
    inv = []
    for j in range(s.d):
        eig = np.linalg.eigvalsh(s.psi[j])
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = np.where(eig[:, 0] > 0, eig[:, -1] / eig[:, 0], np.inf)
        bad = np.flatnonzero(~(cond <= CONDITION_LIMIT))
        if bad.size:
            raise SingularPsi(j, float(s.grid.nodes[bad[0]]), float(cond[bad[0]]))
        inv.append(np.linalg.inv(s.psi[j]))
    T = {}
    for j in range(s.d):
        for k in range(s.d):
            if k != j:
                blk = np.einsum("gac,ghcb->gahb", inv[j], s.pair(j, k)) * w[None, None, :, None]
                T[(j, k)] = blk.reshape(G * P, G * P)
    return T


def _sweeps(T: dict, tilde: list, m: list, grid: Grid, P: int, cfg: BackfitConfig):
    d = len(tilde)
    history = []
    converged = False
    for r in range(1, int(cfg.max_iter) + 1):
        sq = 0.0
        for j in range(d):
            new = tilde[j].copy()
            for k in range(d):
                if k != j:
                    new -= T[(j, k)] @ m[k]
            diff = (new - m[j]).reshape(-1, P)
            sq += float(grid.integrate(np.sum(diff**2, axis=1)))
            m[j] = new
        delta = float(np.sqrt(max(sq, 0.0)))
        history.append(delta)
        if delta <= cfg.tol:
            converged = True
            break
    if not converged and cfg.raise_on_failure:
        raise NonConvergence(history[-1], history)
    return m, history, converged


def backfit_local_constant(s: SmootherSet, cfg: BackfitConfig | None = None) -> LcFitResult:
    """Local constant smooth backfitting (order 0 smoother set)."""
    cfg = cfg or BackfitConfig()
    if s.order != 0:
        raise ConfigurationError("backfit_local_constant needs a smoother set of order 0")
    T = _lc_operators(s)
    tilde = [s.tilde_m[j, :, 0].copy() for j in range(s.d)]
    m0 = _initial_values(s, cfg, 1)
    m, history, converged = _sweeps(T, tilde, m0, s.grid, 1, cfg)
    return LcFitResult(
        m_hat=[GridFunction(s.grid, mj) for mj in m],
        iterations=len(history),
        final_delta=history[-1],
        converged=converged,
        history=history,
    )


def _derivatives(grid: Grid, values: np.ndarray, h: float) -> list[GridFunction]:
    return [GridFunction(grid, factorial(k) * h ** (-k) * values[:, k]) for k in range(values.shape[1])]


def backfit_local_polynomial(s: SmootherSet, cfg: BackfitConfig | None = None) -> LpFitResult:
    """Local polynomial smooth backfitting of order ``s.order``.

    Returns the scaled vectors (m_j, h_j m_j'/1!, ..., h_j^p m_j^(p)/p!) in
    ``m_hat`` and the unscaled derivative estimates in ``derivatives``.
    """
    cfg = cfg or BackfitConfig()
    if s.order % 2 == 0 and s.order > 0:
        warnings.warn("even local polynomial order: asymptotic theory covers odd orders",
                      stacklevel=2)
    G, P = s.grid.size, s.order + 1
    T = _lp_operators(s)
    tilde = [s.tilde_m[j].reshape(-1).copy() for j in range(s.d)]
    m0 = _initial_values(s, cfg, P)
    m, history, converged = _sweeps(T, tilde, m0, s.grid, P, cfg)
    vecs = [mj.reshape(G, P) for mj in m]
    return LpFitResult(
        m_hat=[GridVectorFunction(s.grid, v) for v in vecs],
        derivatives=[_derivatives(s.grid, v, s.bandwidths[j]) for j, v in enumerate(vecs)],
        iterations=len(history),
        final_delta=history[-1],
        converged=converged,
        history=history,
        bandwidths=np.asarray(s.bandwidths).copy(),
    )


def _dense_system(T: dict, d: int, size: int) -> np.ndarray:
    A = np.eye(d * size)
    for (j, k), blk in T.items():
        A[j * size:(j + 1) * size, k * size:(k + 1) * size] = blk
    return A


def _solve_dense(A: np.ndarray, b: np.ndarray, shape: tuple) -> np.ndarray:
    cond = np.linalg.cond(A)
    if not cond < CONDITION_LIMIT:
        _, _, vt = np.linalg.svd(A)
        raise SingularSystem(
            f"backfitting system singular (condition number {cond:.3g}); "
            "components are not identifiable (concurvity)",
            null_direction=vt[-1].reshape(shape),
            condition=float(cond),
        )
    return np.linalg.solve(A, b)


def solve_direct_lc(s: SmootherSet) -> list[GridFunction]:
    """Dense solve of the discretized local constant backfitting equations."""
    if s.order != 0:
        raise ConfigurationError("solve_direct_lc needs a smoother set of order 0")
    G = s.grid.size
    A = _dense_system(_lc_operators(s), s.d, G)
    x = _solve_dense(A, s.tilde_m[:, :, 0].reshape(-1), (s.d, G, 1))
    return [GridFunction(s.grid, v) for v in x.reshape(s.d, G)]


def solve_direct_lp(s: SmootherSet) -> list[GridVectorFunction]:
    """Dense solve of the discretized local polynomial backfitting equations."""
    G, P = s.grid.size, s.order + 1
    A = _dense_system(_lp_operators(s), s.d, G * P)
    x = _solve_dense(A, s.tilde_m.reshape(-1), (s.d, G, P))
    return [GridVectorFunction(s.grid, v) for v in x.reshape(s.d, G, P)]


def backfit_residual(s: SmootherSet, m_hat: Sequence) -> float:
    """Sum over j of the sup-norm residual of the discretized backfitting equations.

    Computed by direct substitution, independently of the solver's operators.
    """
    G, P = s.grid.size, s.order + 1
    w = s.grid.weights
    vals = [np.asarray(getattr(f, "values", f), dtype=float).reshape(G, -1)[:, :P] for f in m_hat]
    total = 0.0
    for j in range(s.d):
        acc = np.zeros((G, P))
        for k in range(s.d):
            if k != j:
                acc += np.einsum("ghab,hb,h->ga", s.pair(j, k), vals[k], w)
        rhs = s.tilde_m[j] - np.linalg.solve(s.psi[j], acc[..., None])[..., 0]
        total += float(np.max(np.abs(vals[j] - rhs)))
    return total


def check_uniqueness(s: SmootherSet, cfg: BackfitConfig | None = None, atol: float = 1e-8) -> float:
    """Fit from the tilde_m and zero initializations; warn if the fixed points differ.

    Returns the sup-norm difference.
    """
    cfg = cfg or BackfitConfig()
    a = backfit_local_polynomial(s, BackfitConfig(cfg.tol, cfg.max_iter, "tilde_m"))
    b = backfit_local_polynomial(s, BackfitConfig(cfg.tol, cfg.max_iter, "zeros"))
    diff = max(float(np.max(np.abs(x.values - y.values))) for x, y in zip(a.m_hat, b.m_hat))
    if diff > atol:
        warnings.warn(f"backfitting fixed points from different inits differ by {diff:.3g}",
                      stacklevel=2)
    return diff


def oracle_component_fit(data: Dataset, j: int, true_others: Sequence[Optional[Callable]],
                         h_j: float, kernel="epanechnikov", order: int = 1,
                         grid: Grid | None = None) -> GridVectorFunction:
    """Infeasible estimator of m_j that knows every other coefficient function.

    At each grid node solves the kernel-weighted least squares problem of the
    partial residuals Y - sum_{k != j} m_k(X_k) Z_k on Z_j (1, t, ..., t^order).
    ``true_others[k]`` is a callable for k != j (entry j is ignored).
    """
    grid = grid or Grid()
    resid = data.Y.copy()
    for k in range(data.d):
        if k != j:
            resid = resid - np.asarray(true_others[k](data.X[:, k])) * data.Z[:, k]
    K = kernel_weight_matrix(kernel, h_j, grid, data.X[:, j])
    out = np.empty((grid.size, order + 1))
    for g, x in enumerate(grid.nodes):
        sw = np.sqrt(K[g])
        A = sw[:, None] * data.Z[:, j, None] * design_vector(x, data.X[:, j], h_j, order)
        s = np.linalg.svd(A, compute_uv=False)
        if s.size < order + 1 or s[-1] <= 0 or (s[0] / s[-1]) ** 2 > CONDITION_LIMIT:
            raise EmptyWindow(j, float(x))
        out[g] = np.linalg.lstsq(A, sw * resid, rcond=None)[0]
    return GridVectorFunction(grid, out)
