"""Monte Carlo harness: data-generating processes, estimators and MISE tables.

The built-in designs have X ~ U(0, 1)^d independent of Z, Z_1 = 1, (Z_2, Z_3)
bivariate normal with unit variances and correlation ``rho``, further Z_j
independent standard normal, and noise scale

    sigma(x, z) = 1/2 + (z_2^2 + z_3^2) / (1 + z_2^2 + z_3^2) * exp(-2 + (x_1 + x_2) / 2).

Replication r always draws from child r of ``SeedSequence(seed)``, so results do
not depend on the number of workers.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .backfit import BackfitConfig, backfit_local_polynomial, oracle_component_fit
from .bandwidth import H_MAX, H_MIN, optimal_constant, select_bandwidths
from .dataset import Dataset
from .errors import ConfigurationError, VcBackfitError
from .grid import Grid
from .kernel import bias_factor, get_kernel, kernel_moments
from .marginal import MiConfig, mi_estimate
from .smoothers import build_smoothers

__all__ = [
    "TrueFunction",
    "ExpShift",
    "Cosine",
    "Square",
    "DgpSpec",
    "DGPS",
    "get_dgp",
    "generate",
    "population_bandwidths",
    "asymptotic_variance",
    "PopulationPolicy",
    "PluginPolicy",
    "FixedPolicy",
    "Estimator",
    "SbfEstimator",
    "MiEstimator",
    "OracleEstimator",
    "TruthEstimator",
    "SimulationReport",
    "run_study",
    "PRESETS",
    "preset_studies",
]

_QUAD_NODES = 2001
_HERMITE_NODES = 60


# --------------------------------------------------------------------------- truth


class TrueFunction:
    """Coefficient function with analytic derivatives."""

    label = ""

    def __call__(self, x):
        return self.derivative(x, 0)

    def derivative(self, x, k: int):
        raise NotImplementedError

    def __repr__(self):
        return self.label


class ExpShift(TrueFunction):
    label = "1 + exp(2x - 1)"

    def derivative(self, x, k: int):
        x = np.asarray(x, dtype=float)
        e = np.exp(2.0 * x - 1.0)
        return 1.0 + e if k == 0 else 2.0**k * e


class Cosine(TrueFunction):
    label = "cos(2 pi x)"

    def derivative(self, x, k: int):
        x = np.asarray(x, dtype=float)
        w = 2.0 * np.pi
        return w**k * np.cos(w * x + k * np.pi / 2)


class Square(TrueFunction):
    label = "x^2"

    def derivative(self, x, k: int):
        x = np.asarray(x, dtype=float)
        if k == 0:
            return x**2
        if k == 1:
            return 2.0 * x
        return np.full_like(x, 2.0 if k == 2 else 0.0)


def _simpson_weights(m: int, a: float = 0.0, b: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    x = np.linspace(a, b, m)
    w = np.ones(m)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    return x, w * (b - a) / (3.0 * (m - 1))


@dataclass(frozen=True)
class DgpSpec:
    """Varying-coefficient design with the noise scale described in the module docstring.

    ``noise_scale`` multiplies sigma; 0 gives noiseless data.
    """

    name: str
    m: tuple
    rho: float = 0.5
    noise_scale: float = 1.0

    def __post_init__(self):
        if len(self.m) < 3:
            raise ConfigurationError("designs need at least three components")
        if not -1.0 < self.rho < 1.0:
            raise ConfigurationError("rho must lie in (-1, 1)")
        if self.noise_scale < 0:
            raise ConfigurationError("noise_scale must be nonnegative")

    @property
    def d(self) -> int:
        return len(self.m)

    def with_noise(self, scale: float) -> "DgpSpec":
        return DgpSpec(self.name, self.m, self.rho, scale)

    def sigma(self, X, Z) -> np.ndarray:
        X, Z = np.atleast_2d(X), np.atleast_2d(Z)
        r2 = Z[:, 1] ** 2 + Z[:, 2] ** 2
        return self.noise_scale * (0.5 + r2 / (1.0 + r2) * np.exp(-2.0 + 0.5 * (X[:, 0] + X[:, 1])))

    def regression(self, X, Z) -> np.ndarray:
        X, Z = np.atleast_2d(X), np.atleast_2d(Z)
        return sum(self.m[j](X[:, j]) * Z[:, j] for j in range(self.d))

    def sample_covariates(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        X = rng.uniform(size=(n, self.d))
        Z = np.empty((n, self.d))
        Z[:, 0] = 1.0
        u = rng.standard_normal((n, 2))
        Z[:, 1] = u[:, 0]
        Z[:, 2] = self.rho * u[:, 0] + np.sqrt(1.0 - self.rho**2) * u[:, 1]
        Z[:, 3:] = rng.standard_normal((n, self.d - 3))
        return X, Z

    def z2_moment(self, j: int) -> float:
        """C_j = E[Z_j^2 | X_j], constant because X and Z are independent."""
        return 1.0

    def _ratio_moments(self, j: int) -> tuple[float, float, float]:
        """E[Z_j^2], E[Z_j^2 R], E[Z_j^2 R^2] with R = r2 / (1 + r2), by Gauss-Hermite."""
        t, w = np.polynomial.hermite_e.hermegauss(_HERMITE_NODES)
        w = w / w.sum()
        u, v = np.meshgrid(t, t, indexing="ij")
        ww = np.outer(w, w)
        z2 = u
        z3 = self.rho * u + np.sqrt(1.0 - self.rho**2) * v
        r2 = z2**2 + z3**2
        R = r2 / (1.0 + r2)
        zj2 = {1: z2**2, 2: z3**2}.get(j, np.ones_like(u))
        return tuple(float(np.sum(ww * zj2 * R**k)) for k in range(3))

    def noise_moment(self, j: int, x) -> np.ndarray:
        """B_j(x) = E[Z_j^2 sigma^2(X, Z) | X_j = x] in closed form up to the Z moments."""
        x = np.asarray(x, dtype=float)
        e0, e1, e2 = self._ratio_moments(j)

        def shift_moment(a: float):
            # E[exp(a (-2 + (X_1 + X_2)/2)) | X_j = x]
            avg = (2.0 / a) * (np.exp(a / 2.0) - 1.0)
            out = np.exp(-2.0 * a) * np.ones_like(x)
            for k in (0, 1):
                out = out * (np.exp(a * x / 2.0) if k == j else avg)
            return out

        out = 0.25 * e0 + e1 * shift_moment(1.0) + e2 * shift_moment(2.0)
        return self.noise_scale**2 * out


def _design(name: str, d: int) -> DgpSpec:
    m = (ExpShift(), Cosine(), Square()) + tuple(Square() for _ in range(d - 3))
    return DgpSpec(name, m)


DGPS = {"d3": _design("d3", 3), "d10": _design("d10", 10)}


def get_dgp(spec) -> DgpSpec:
    if isinstance(spec, DgpSpec):
        return spec
    try:
        return DGPS[spec]
    except KeyError:
        raise ConfigurationError(f"unknown design {spec!r}; available: {sorted(DGPS)}") from None


def generate(spec, n: int, seed=None, noiseless: bool = False) -> Dataset:
    """Draw n observations; ``seed`` may be an int, SeedSequence or Generator."""
    spec = get_dgp(spec)
    if n < 1:
        raise ConfigurationError("n must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    X, Z = spec.sample_covariates(rng, n)
    eps = rng.standard_normal(n)
    Y = spec.regression(X, Z)
    if not noiseless:
        Y = Y + spec.sigma(X, Z) * eps
    return Dataset(X, Z, Y)


# ------------------------------------------------------------------- bandwidths


def population_bandwidths(spec, n: int, kernel="epanechnikov", order: int = 1,
                          h_min: float = H_MIN, h_max: float = H_MAX) -> tuple[np.ndarray, np.ndarray]:
    """Optimal constants c_j and bandwidths h_j = c_j n^(-1/(2 order + 3)) from the true design.

    X_j is uniform, so p_j = 1 and both integrals are plain integrals over [0, 1].
    """
    spec = get_dgp(spec)
    mom = kernel_moments(kernel, order)
    x, w = _simpson_weights(_QUAD_NODES)
    bfac = bias_factor(mom)
    c = np.empty(spec.d)
    for j in range(spec.d):
        tau = mom.variance_constant * float(w @ (spec.noise_moment(j, x) / spec.z2_moment(j) ** 2))
        b2 = float(w @ (bfac * spec.m[j].derivative(x, order + 1)) ** 2)
        c[j] = optimal_constant(tau, b2, order)
    h = np.clip(c * n ** (-1.0 / (2 * order + 3)), h_min, h_max)
    return c, h


def asymptotic_variance(spec, j: int, x, c: float, kernel="epanechnikov", order: int = 1):
    """Limit of n^((2 order + 2)/(2 order + 3)) Var[hat m_j(x)] when h_j = c n^(-1/(2 order + 3)).

    Equals tau_j(x) / c with tau_j(x) = (N1^-1 N2 N1^-1)_00 B_j(x) / (p_j(x) C_j(x)^2).
    """
    spec = get_dgp(spec)
    mom = kernel_moments(kernel, order)
    tau = mom.variance_constant * spec.noise_moment(j, x) / spec.z2_moment(j) ** 2
    return tau / c


@dataclass(frozen=True)
class PopulationPolicy:
    """Optimal bandwidths computed from the true design (the default for presets)."""

    def __call__(self, spec, data, kernel, order):
        return population_bandwidths(spec, data.n, kernel, order)[1]


@dataclass(frozen=True)
class PluginPolicy:
    """Rule-of-thumb plug-in bandwidths estimated from each replication."""

    def __call__(self, spec, data, kernel, order):
        return select_bandwidths(data, kernel, order).h


@dataclass(frozen=True)
class FixedPolicy:
    h: tuple

    def __call__(self, spec, data, kernel, order):
        return np.broadcast_to(np.asarray(self.h, dtype=float), (data.d,)).copy()


# ------------------------------------------------------------------- estimators


@dataclass(frozen=True)
class Estimator:
    """Maps (spec, data, h) to a ``(d, G)`` array of curves and an iteration count."""

    name: str

    def fit(self, spec, data, h, kernel, order, grid, tol, max_iter):
        raise NotImplementedError


@dataclass(frozen=True)
class SbfEstimator(Estimator):
    name: str = "SBF"

    def fit(self, spec, data, h, kernel, order, grid, tol, max_iter):
        s = build_smoothers(data, h, kernel, order, grid)
        res = backfit_local_polynomial(s, BackfitConfig(tol=tol, max_iter=max_iter))
        return res.curves, res.iterations


@dataclass(frozen=True)
class MiEstimator(Estimator):
    """Marginal integration with primary bandwidth ``h_scale * h`` and b = c h / log n.

    Components outside ``components`` (default: all) are skipped and reported as NaN.
    """

    name: str = "MI"
    c: float = 3.0
    h_scale: float = 1.0
    components: Optional[tuple] = None

    def fit(self, spec, data, h, kernel, order, grid, tol, max_iter):
        cfg = MiConfig(h=self.h_scale * np.asarray(h), c_secondary=self.c, order=order,
                       secondary_base=np.asarray(h))
        curves = np.full((data.d, grid.size), np.nan)
        for j in range(data.d) if self.components is None else self.components:
            curves[j] = mi_estimate(data, j, cfg, kernel, grid).values
        return curves, None


@dataclass(frozen=True)
class OracleEstimator(Estimator):
    """Infeasible fit of each m_j that knows every other coefficient function."""

    name: str = "oracle"

    def fit(self, spec, data, h, kernel, order, grid, tol, max_iter):
        curves = np.array([
            oracle_component_fit(data, j, spec.m, h[j], kernel, order, grid).values[:, 0]
            for j in range(data.d)
        ])
        return curves, None


@dataclass(frozen=True)
class TruthEstimator(Estimator):
    """Returns the true curves; a zero-error check of the harness."""

    name: str = "truth"

    def fit(self, spec, data, h, kernel, order, grid, tol, max_iter):
        return np.array([m(grid.nodes) for m in spec.m]), None


# ---------------------------------------------------------------------- studies


@dataclass
class SimulationReport:
    """Per-(estimator, component) MISE / ISB / IV plus run bookkeeping.

    ``failures[name]`` maps exception class names to counts; failed
    replications are excluded from that estimator's averages.
    """

    config: dict
    rows: list
    totals: dict
    replications: dict
    failures: dict
    iterations: dict
    bandwidths: np.ndarray
    wall_time: float
    curves: dict = field(default_factory=dict, repr=False)

    def get(self, estimator: str, component: int, metric: str = "MISE") -> float:
        for r in self.rows:
            if r["estimator"] == estimator and r["component"] == component:
                return r[metric]
        raise KeyError((estimator, component))

    def to_rows(self) -> list[dict]:
        """Rows for machine-readable output; missing values become None."""
        extra = {"n": self.config["n"], "design": self.config["design"]}
        clean = lambda v: None if isinstance(v, float) and np.isnan(v) else v
        return [{**extra, **{k: clean(v) for k, v in r.items()}} for r in self.rows]

    def to_text(self) -> str:
        names = list(self.totals)
        d = self.config["d"]
        width = max(10, *(len(n) + 2 for n in names))
        head = f"n={self.config['n']}  design={self.config['design']}  reps={self.config['reps']}"
        lines = [head, f"{'component':<12}{'':<6}" + "".join(f"{n:>{width}}" for n in names)]
        for j in range(d):
            for metric in ("MISE", "ISB", "IV"):
                label = f"m{j + 1}" if metric == "MISE" else ""
                vals = "".join(f"{self.get(n, j, metric):>{width}.4f}" for n in names)
                lines.append(f"{label:<12}{metric:<6}{vals}")
        lines.append(f"{'total':<12}{'MISE':<6}" + "".join(f"{self.totals[n]:>{width}.4f}" for n in names))
        for n in names:
            if self.failures[n]:
                lines.append(f"{n}: {self.replications[n]} usable, failures {self.failures[n]}")
            it = self.iterations.get(n)
            if it:
                lines.append(f"{n}: sweeps mean {np.mean(it):.2f}, max {max(it)}")
        lines.append(f"wall time {self.wall_time:.1f}s")
        return "\n".join(lines)


def _replicate(args):
    spec, n, seq, estimators, policy, kernel, order, grid, tol, max_iter = args
    data = generate(spec, n, np.random.default_rng(seq))
    try:
        h = np.asarray(policy(spec, data, kernel, order), dtype=float)
    except VcBackfitError as exc:
        return None, {e.name: (None, None, type(exc).__name__) for e in estimators}
    out = {}
    for est in estimators:
        try:
            curves, it = est.fit(spec, data, h, kernel, order, grid, tol, max_iter)
            out[est.name] = (curves, it, None)
        except VcBackfitError as exc:
            out[est.name] = (None, None, type(exc).__name__)
    return h, out


def _summarize(curves: np.ndarray, truth: np.ndarray, grid: Grid) -> list[dict]:
    mean = curves.mean(axis=0)
    isb = grid.integrate(((mean - truth) ** 2).T)
    iv = grid.integrate(curves.var(axis=0).T)
    mise = grid.integrate(((curves - truth) ** 2).mean(axis=0).T)
    return [{"MISE": float(mise[j]), "ISB": float(isb[j]), "IV": float(iv[j])}
            for j in range(truth.shape[0])]


def run_study(spec, n: int, reps: int, estimators: Sequence[Estimator], bandwidth_policy=None,
              seed: int = 0, kernel="epanechnikov", order: int = 1, grid: Grid | None = None,
              tol: float = 1e-11, max_iter: int = 200, workers: int = 1,
              keep_curves: bool = False) -> SimulationReport:
    """Monte Carlo MISE / ISB / IV of each estimator over ``reps`` replications.

    ISB uses the pointwise Monte Carlo mean and IV the pointwise variance
    (divisor reps), both integrated with the grid's Simpson rule, so
    MISE = ISB + IV up to rounding.
    """
    spec = get_dgp(spec)
    if reps < 2:
        raise ConfigurationError("reps must be at least 2")
    names = [e.name for e in estimators]
    if len(set(names)) != len(names):
        raise ConfigurationError(f"estimator names must be unique: {names}")
    grid = grid or Grid()
    kernel = get_kernel(kernel)
    policy = bandwidth_policy or PopulationPolicy()
    seqs = np.random.SeedSequence(seed).spawn(reps)
    tasks = [(spec, n, s, tuple(estimators), policy, kernel, order, grid, tol, max_iter) for s in seqs]

    t0 = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate, tasks))
    else:
        results = [_replicate(t) for t in tasks]
    wall = time.perf_counter() - t0

    truth = np.array([m(grid.nodes) for m in spec.m])
    rows, totals, used, failures, iters, kept = [], {}, {}, {}, {}, {}
    for name in names:
        good = [r[1][name] for r in results if r[1][name][2] is None]
        fails = {}
        for r in results:
            err = r[1][name][2]
            if err is not None:
                fails[err] = fails.get(err, 0) + 1
        failures[name] = fails
        used[name] = len(good)
        iters[name] = [g[1] for g in good if g[1] is not None]
        if len(good) < 2:
            stats = [{"MISE": np.nan, "ISB": np.nan, "IV": np.nan}] * spec.d
        else:
            curves = np.stack([g[0] for g in good])
            stats = _summarize(curves, truth, grid)
            if keep_curves:
                kept[name] = curves
        for j, st in enumerate(stats):
            rows.append({"estimator": name, "component": j, **st})
        totals[name] = float(sum(st["MISE"] for st in stats))
    hs = np.array([r[0] for r in results if r[0] is not None])
    config = {"design": spec.name, "d": spec.d, "n": n, "reps": reps, "seed": seed,
              "kernel": kernel.name, "order": order, "grid": grid.size, "tol": tol,
              "policy": type(policy).__name__, "estimators": names}
    return SimulationReport(config, rows, totals, used, failures, iters, hs, wall, kept)


# ---------------------------------------------------------------------- presets

_MI_C = (1.0, 3.0, 5.0, 10.0)

PRESETS = {
    "table1": {
        "design": "d3",
        "sizes": (100, 400),
        "estimators": lambda: [SbfEstimator()] + [MiEstimator(f"MI c={c:g}", c) for c in _MI_C],
    },
    "table2": {
        "design": "d3",
        "sizes": (100, 400),
        "estimators": lambda: [MiEstimator(f"MI c={c:g}", c, 1.0 / 3.0) for c in _MI_C],
    },
    "table3": {
        "design": "d10",
        "sizes": (100, 400),
        "estimators": lambda: [SbfEstimator(), MiEstimator("MI c=3", 3.0)],
    },
}


def preset_studies(name: str, reps: int, seed: int = 0, sizes=None, **kw) -> list[SimulationReport]:
    """Run a named scenario at every sample size (or the given ``sizes``)."""
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    p = PRESETS[name]
    sizes = p["sizes"] if sizes is None else sizes
    return [run_study(p["design"], n, reps, p["estimators"](), seed=seed + i, **kw)
            for i, n in enumerate(sizes)]
