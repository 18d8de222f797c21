"""Base kernels, the boundary-corrected kernel and kernel moment constants.

Kernels live in a fixed registry so their moments can be validated when the
module is imported.  Kernels that are polynomials in ``|u|`` on ``[-1, 1]`` get
exact CDFs and moments; anything else falls back to quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import integrate

from .errors import ConfigurationError

__all__ = [
    "BaseKernel",
    "KERNELS",
    "get_kernel",
    "check_bandwidth",
    "boundary_normalizer",
    "eval_boundary_kernel",
    "KernelMoments",
    "kernel_moments",
    "local_linear_constants",
    "bias_factor",
]

_FALLBACK_NODES = 401


def _simpson(values: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # values: (..., _FALLBACK_NODES) sampled uniformly on [a, b]
    w = np.ones(_FALLBACK_NODES)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return (values @ w) * (b - a) / (3.0 * (_FALLBACK_NODES - 1))


@dataclass(frozen=True)
class BaseKernel:
    """Symmetric probability density supported on [-1, 1].

    Either ``coeffs`` (coefficients of a polynomial in ``|u|``) or ``func`` must be
    given.  Polynomial kernels are handled in closed form.
    """

    name: str
    coeffs: Optional[tuple] = None
    func: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)

    def __post_init__(self):
        if (self.coeffs is None) == (self.func is None):
            raise ConfigurationError("kernel needs exactly one of coeffs/func")
        mass = self.moment(0)
        if abs(mass - 1.0) > 1e-10:
            raise ConfigurationError(f"kernel {self.name!r} integrates to {mass}, not 1")

    @property
    def is_polynomial(self) -> bool:
        return self.coeffs is not None

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        a = np.abs(u)
        inside = a <= 1.0
        if self.is_polynomial:
            val = P.polyval(np.where(inside, a, 0.0), self.coeffs)
        else:
            val = self.func(np.where(inside, u, 0.0))
        return np.where(inside, val, 0.0)

    def cdf(self, t) -> np.ndarray:
        """F(t) = integral of K over (-inf, t]."""
        t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
        if self.is_polynomial:
            anti = P.polyint(self.coeffs)
            return 0.5 + np.sign(t) * P.polyval(np.abs(t), anti)
        # composite Simpson from -1 to t
        s = np.linspace(0.0, 1.0, _FALLBACK_NODES)
        pts = -1.0 + (t[..., None] + 1.0) * s
        return _simpson(self(pts), -1.0, t)

    def moment(self, ell: int, squared: bool = False) -> float:
        """mu_ell(K), or mu_ell(K^2) when ``squared``."""
        if ell % 2 == 1:
            return 0.0
        if self.is_polynomial:
            c = np.asarray(self.coeffs, dtype=float)
            if squared:
                c = P.polymul(c, c)
            k = np.arange(len(c))
            return float(2.0 * np.sum(c / (ell + k + 1.0)))
        f = (lambda u: u**ell * self(u) ** 2) if squared else (lambda u: u**ell * self(u))
        val, _ = integrate.quad(f, -1.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
        return float(val)


def _cosine(u):
    return np.pi / 4.0 * np.cos(np.pi * u / 2.0)


KERNELS: dict[str, BaseKernel] = {
    k.name: k
    for k in (
        BaseKernel("epanechnikov", (0.75, 0.0, -0.75)),
        BaseKernel("uniform", (0.5,)),
        BaseKernel("triangular", (1.0, -1.0)),
        BaseKernel("biweight", tuple(np.array([1, 0, -2, 0, 1]) * 15 / 16)),
        BaseKernel("triweight", tuple(np.array([1, 0, -3, 0, 3, 0, -1]) * 35 / 32)),
        BaseKernel("tricube", tuple(np.array([1, 0, 0, -3, 0, 0, 3, 0, 0, -1]) * 70 / 81)),
        BaseKernel("cosine", func=_cosine),
    )
}


def get_kernel(kernel) -> BaseKernel:
    if isinstance(kernel, BaseKernel):
        return kernel
    try:
        return KERNELS[str(kernel).lower()]
    except KeyError:
        raise ConfigurationError(
            f"unknown kernel {kernel!r}; choose from {sorted(KERNELS)}"
        ) from None


def check_bandwidth(g) -> float:
    g = float(g)
    if not (0.0 < g <= 0.5):
        raise ConfigurationError(f"bandwidth must lie in (0, 1/2], got {g}")
    return g


def boundary_normalizer(base: BaseKernel, g: float, v) -> np.ndarray:
    """Closed-form (or quadrature) value of the integral of K((w - v)/g) over w in [0, 1]."""
    v = np.asarray(v, dtype=float)
    return g * (base.cdf((1.0 - v) / g) - base.cdf(-v / g))


def eval_boundary_kernel(base, g, u, v) -> np.ndarray:
    """Boundary-corrected kernel K_g(u, v), normalized to integrate to one in u over [0, 1].

    Broadcasts over ``u`` and ``v``.  Zero whenever u or v lies outside [0, 1].
    """
    base = get_kernel(base)
    g = check_bandwidth(g)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    inside = (u >= 0.0) & (u <= 1.0) & (v >= 0.0) & (v <= 1.0)
    vv = np.clip(v, 0.0, 1.0)
    out = base((u - v) / g) / boundary_normalizer(base, g, vv)
    out = np.where(inside, out, 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class KernelMoments:
    """Moment vector and matrices of a kernel for local polynomial order ``order``.

    Matrix indices run from (0, 0) to (order, order).
    """

    order: int
    mu: np.ndarray  # mu_0 .. mu_{2 order + 1}
    N1: np.ndarray
    N2: np.ndarray
    gamma: np.ndarray

    @property
    def variance_matrix(self) -> np.ndarray:
        """N1^{-1} N2 N1^{-1}."""
        inv = np.linalg.inv(self.N1)
        return inv @ self.N2 @ inv

    @property
    def bias_vector(self) -> np.ndarray:
        """N1^{-1} gamma."""
        return np.linalg.solve(self.N1, self.gamma)

    @property
    def variance_constant(self) -> float:
        return float(self.variance_matrix[0, 0])

    @property
    def bias_constant(self) -> float:
        return float(self.bias_vector[0])


def kernel_moments(base, order: int) -> KernelMoments:
    base = get_kernel(base)
    order = int(order)
    if order < 0:
        raise ConfigurationError("order must be nonnegative")
    p = order + 1
    mu = np.array([base.moment(ell) for ell in range(2 * order + 2)])
    mu2 = np.array([base.moment(ell, squared=True) for ell in range(2 * order + 1)])
    idx = np.add.outer(np.arange(p), np.arange(p))
    return KernelMoments(
        order=order,
        mu=mu,
        N1=mu[idx],
        N2=mu2[idx],
        gamma=mu[order + 1 : 2 * order + 2].copy(),
    )


def local_linear_constants(base) -> tuple[float, float]:
    """(variance constant, bias constant) of local linear fitting.

    Equal to (int K^2, mu_2(K)).
    """
    base = get_kernel(base)
    m = kernel_moments(base, 1)
    if np.linalg.cond(m.N1) > 1e12:
        raise ConfigurationError(f"moment matrix of kernel {base.name!r} is singular")
    return m.variance_constant, m.bias_constant


def bias_factor(moments: KernelMoments) -> float:
    """(N1^{-1} gamma)_0 / (order + 1)!, the multiplier of m^(order+1) in the bias."""
    return moments.bias_constant / factorial(moments.order + 1)
