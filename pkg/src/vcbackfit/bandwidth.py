"""AMISE-optimal bandwidths and the rule-of-thumb plug-in estimates they need.

For local polynomial order p the optimal constant is

    c_j = [ int tau_j p_j / (2 (p + 1) int b_j^2 p_j) ]^(1 / (2p + 3))

with b_j = (N1^{-1} gamma)_0 m_j^(p+1) / (p + 1)! and
tau_j = (N1^{-1} N2 N1^{-1})_00 B_j / (p_j C_j^2), and h_j = c_j n^(-1/(2p+3)).
The unknown m_j^(p+1), B_j(x) = E[Z_j^2 sigma^2 | X_j = x] and
C_j(x) = E[Z_j^2 | X_j = x] are replaced by fits of global parametric
regressions (cubic for m_j, linear for B_j and C_j).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .errors import NegativeVarianceIntegral, PluginSingular, UnsupportedOrder
from .kernel import KernelMoments, bias_factor, kernel_moments

__all__ = [
    "PluginEstimates",
    "BandwidthResult",
    "fit_plugins",
    "optimal_constant",
    "optimal_bandwidths",
    "select_bandwidths",
]

H_MIN = 0.02
H_MAX = 0.5
_TAU_NODES = 1001


@dataclass
class PluginEstimates:
    """Parametric pilot fits.

    alpha[j] are the cubic coefficients (alpha_j0..alpha_j3) of m_j, beta[j] the
    linear fit of B_j and gamma_c[j] the linear fit of C_j.
    """

    alpha: np.ndarray
    A: np.ndarray
    beta: np.ndarray
    gamma_c: np.ndarray
    constant_z: np.ndarray
    X: np.ndarray

    def derivative(self, j: int, k: int, x) -> np.ndarray:
        """k-th derivative of the cubic pilot fit of m_j at x."""
        coef = np.polynomial.polynomial.polyder(self.alpha[j], k) if k else self.alpha[j]
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), coef)

    def B(self, j: int, x) -> np.ndarray:
        return self.beta[j, 0] + self.beta[j, 1] * np.asarray(x, dtype=float)

    def C(self, j: int, x) -> np.ndarray:
        return self.gamma_c[j, 0] + self.gamma_c[j, 1] * np.asarray(x, dtype=float)


@dataclass
class BandwidthResult:
    c_opt: np.ndarray
    h: np.ndarray
    tau_integral: np.ndarray
    b_integral: np.ndarray
    order: int
    n: int
    diagnostics: list = field(default_factory=list)

    def as_rows(self) -> list[dict]:
        return [
            {"component": j, "c_opt": float(self.c_opt[j]), "h": float(self.h[j]),
             "tau_integral": float(self.tau_integral[j]), "b2_integral": float(self.b_integral[j])}
            for j in range(len(self.h))
        ]


def _lstsq(A: np.ndarray, y: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    rank = np.linalg.matrix_rank(A)
    if rank < A.shape[1]:
        raise PluginSingular(f"{what}: design has rank {rank} < {A.shape[1]} columns")
    coef = np.linalg.lstsq(A, y, rcond=None)[0]
    return coef, y - A @ coef


def fit_plugins(data: Dataset) -> PluginEstimates:
    n, d = data.n, data.d
    if n <= 4 * d:
        raise PluginSingular(f"cubic pilot needs n > 4d; got n={n}, d={d}")
    X, Z, Y = data.X, data.Z, data.Y
    powers = X[:, :, None] ** np.arange(4)  # (n, d, 4)
    design = (powers * Z[:, :, None]).reshape(n, 4 * d)
    coef, resid = _lstsq(design, Y, "cubic pilot regression")
    alpha = coef.reshape(d, 4)
    second = 2.0 * alpha[:, 2] + 6.0 * alpha[:, 3] * X  # (n, d)
    A = np.mean(second**2, axis=0)

    beta = np.empty((d, 2))
    gamma_c = np.empty((d, 2))
    const = np.ptp(Z, axis=0) == 0.0
    for j in range(d):
        lin = np.column_stack([np.ones(n), X[:, j]])
        beta[j], _ = _lstsq(lin, Z[:, j] ** 2 * resid**2, f"variance regression for component {j}")
        if const[j]:
            gamma_c[j] = (Z[0, j] ** 2, 0.0)
        else:
            gamma_c[j], _ = _lstsq(lin, Z[:, j] ** 2, f"Z^2 regression for component {j}")
    return PluginEstimates(alpha=alpha, A=A, beta=beta, gamma_c=gamma_c, constant_z=const, X=X)


def optimal_constant(tau_integral: float, bias_sq_integral: float, order: int) -> float:
    """c_opt from the two integrals; 0 when the variance vanishes, inf when the bias does."""
    if tau_integral < 0:
        raise ValueError("negative variance integral")
    if bias_sq_integral <= 0:
        return float("inf") if tau_integral > 0 else float("nan")
    return float((tau_integral / (2.0 * (order + 1) * bias_sq_integral)) ** (1.0 / (2 * order + 3)))


def optimal_bandwidths(plugins: PluginEstimates, moments: KernelMoments, data: Dataset,
                       order: int | None = None, h_min: float = H_MIN,
                       h_max: float = H_MAX) -> BandwidthResult:
    """Plug-in version of the optimal bandwidth formula.

    The bias integral int b_j^2 p_j is the sample average of b_j(X_j^i)^2.  In
    the variance integral the density cancels, int tau_j p_j = const * int_0^1 B_j / C_j^2,
    which is evaluated by Simpson's rule on [0, 1].

    Raises
    ------
    NegativeVarianceIntegral
        If the estimated variance integral is negative or C_j is not positive on [0, 1].
    UnsupportedOrder
        For orders other than 1 and 2.
    """
    order = moments.order if order is None else int(order)
    if order != moments.order:
        raise ValueError("moments computed for a different order")
    if order not in (1, 2):
        raise UnsupportedOrder(
            f"rule-of-thumb plug-in is available for orders 1 and 2 only (got {order}); "
            "supply bandwidths explicitly"
        )
    if order == 2:
        warnings.warn("even local polynomial order: asymptotic theory covers odd orders", stacklevel=2)
    n, d = data.n, data.d
    var_const = moments.variance_constant
    bfac = bias_factor(moments)

    xs = np.linspace(0.0, 1.0, _TAU_NODES)
    sw = np.ones(_TAU_NODES)
    sw[1:-1:2], sw[2:-1:2] = 4.0, 2.0
    sw *= 1.0 / (3.0 * (_TAU_NODES - 1))

    tiny = 1e-12 * (1.0 + float(np.mean(data.Y**2)))
    tau = np.empty(d)
    b2 = np.empty(d)
    c = np.empty(d)
    h = np.empty(d)
    diags = []
    rate = n ** (-1.0 / (2 * order + 3))
    for j in range(d):
        Cx = plugins.C(j, xs)
        if np.any(Cx <= 0):
            raise NegativeVarianceIntegral(j, float(np.min(Cx)), "estimated E[Z_j^2 | X_j] not positive")
        tau[j] = var_const * float(sw @ (plugins.B(j, xs) / Cx**2))
        deriv = plugins.derivative(j, order + 1, data.X[:, j])
        b2[j] = float(np.mean((bfac * deriv) ** 2))
        if tau[j] < -tiny:
            raise NegativeVarianceIntegral(j, float(tau[j]))
        if abs(tau[j]) <= tiny:
            c[j] = 0.0
            diags.append(f"component {j}: variance integral ~0, bandwidth clamped to {h_min}")
            h[j] = h_min
            continue
        c[j] = optimal_constant(tau[j], b2[j], order)
        hj = c[j] * rate
        if not np.isfinite(hj) or hj > h_max:
            diags.append(f"component {j}: bias integral {'zero' if b2[j] <= 0 else 'small'}, "
                         f"bandwidth {hj:.4g} clamped to {h_max}")
            hj = h_max
        elif hj < h_min:
            diags.append(f"component {j}: bandwidth {hj:.4g} clamped to {h_min}")
            hj = h_min
        h[j] = hj
    return BandwidthResult(c_opt=c, h=h, tau_integral=tau, b_integral=b2, order=order, n=n,
                           diagnostics=diags)


def select_bandwidths(data: Dataset, kernel="epanechnikov", order: int = 1, **kw) -> BandwidthResult:
    """Rule-of-thumb bandwidths for ``data`` in one call."""
    return optimal_bandwidths(fit_plugins(data), kernel_moments(kernel, order), data, order, **kw)
