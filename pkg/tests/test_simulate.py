import json

import numpy as np
import pytest

from vcbackfit import Grid
from vcbackfit.errors import ConfigurationError
from vcbackfit.kernel import kernel_moments
from vcbackfit.simulate import (
    DGPS,
    PRESETS,
    Cosine,
    ExpShift,
    FixedPolicy,
    MiEstimator,
    OracleEstimator,
    PluginPolicy,
    SbfEstimator,
    Square,
    TruthEstimator,
    asymptotic_variance,
    generate,
    get_dgp,
    population_bandwidths,
    preset_studies,
    run_study,
)


class TestDesigns:
    def test_noiseless_hook(self):
        data = generate("d3", 50, seed=1, noiseless=True)
        spec = DGPS["d3"]
        np.testing.assert_allclose(data.Y, spec.regression(data.X, data.Z), atol=0)
        zero = generate(spec.with_noise(0.0), 50, seed=1)
        np.testing.assert_allclose(zero.Y, data.Y, atol=0)

    def test_covariate_law(self):
        data = generate("d10", 100_000, seed=3)
        assert np.all(data.Z[:, 0] == 1.0)
        assert np.corrcoef(data.Z[:, 1], data.Z[:, 2])[0, 1] == pytest.approx(0.5, abs=0.02)
        np.testing.assert_allclose(data.Z[:, 1:].var(axis=0), 1.0, atol=0.02)
        assert abs(np.corrcoef(data.Z[:, 3], data.Z[:, 4])[0, 1]) < 0.02
        np.testing.assert_allclose(data.X.mean(axis=0), 0.5, atol=0.01)

    def test_deterministic(self):
        a = generate("d3", 30, seed=9)
        b = generate("d3", 30, seed=9)
        assert a.Y.tobytes() == b.Y.tobytes() and a.X.tobytes() == b.X.tobytes()
        assert not np.array_equal(a.Y, generate("d3", 30, seed=10).Y)

    def test_sigma_positive_and_truth(self):
        spec = get_dgp("d3")
        data = generate(spec, 1000, seed=0)
        assert np.all(spec.sigma(data.X, data.Z) >= 0.5)
        assert spec.m[0](0.5) == pytest.approx(2.0)
        assert spec.m[1](0.25) == pytest.approx(0.0, abs=1e-15)
        assert spec.m[2](0.3) == pytest.approx(0.09)

    @pytest.mark.parametrize("f", [ExpShift(), Cosine(), Square()])
    def test_analytic_derivatives(self, f):
        x = np.linspace(0.1, 0.9, 5)
        step = 1e-5
        for k in (1, 2, 3):
            fd = (f.derivative(x + step, k - 1) - f.derivative(x - step, k - 1)) / (2 * step)
            np.testing.assert_allclose(f.derivative(x, k), fd, rtol=1e-6, atol=1e-5)

    @pytest.mark.parametrize("j", [0, 1, 2, 5])
    def test_noise_moment_against_monte_carlo(self, j):
        spec = get_dgp("d10")
        rng = np.random.default_rng(j)
        X, Z = spec.sample_covariates(rng, 400_000)
        X[:, j] = 0.3
        mc = np.mean(Z[:, j] ** 2 * spec.sigma(X, Z) ** 2)
        assert spec.noise_moment(j, 0.3) == pytest.approx(mc, rel=0.01)

    def test_unknown_design(self):
        with pytest.raises(ConfigurationError):
            get_dgp("d4")
        with pytest.raises(ConfigurationError):
            generate("d3", 0)


class TestBandwidthPolicies:
    def test_population_bandwidths_formula(self):
        spec = get_dgp("d3")
        c, h = population_bandwidths(spec, 100)
        x = np.linspace(0, 1, 20001)
        tau = 0.6 * np.trapezoid(spec.noise_moment(2, x), x)
        b2 = 0.01 * 4.0  # (0.1 * m3'')^2 with m3'' = 2
        assert c[2] == pytest.approx((tau / (4 * b2)) ** 0.2, rel=1e-6)
        np.testing.assert_allclose(h, c * 100 ** -0.2)

    def test_asymptotic_variance(self):
        spec = get_dgp("d3")
        v = asymptotic_variance(spec, 1, 0.5, c=0.4)
        assert v == pytest.approx(kernel_moments("epanechnikov", 1).variance_constant
                                  * spec.noise_moment(1, 0.5) / 0.4)

    def test_fixed_and_plugin(self):
        data = generate("d3", 120, seed=0)
        np.testing.assert_allclose(FixedPolicy((0.2,))(None, data, None, 1), [0.2] * 3)
        h = PluginPolicy()(None, data, "epanechnikov", 1)
        assert h.shape == (3,) and np.all(h > 0)


class TestRunStudy:
    def test_truth_has_zero_error_and_identity(self):
        rep = run_study("d3", 60, 4, [TruthEstimator(), SbfEstimator()], seed=5, grid=Grid(41))
        for j in range(3):
            assert rep.get("truth", j) == 0.0
            m, b, v = (rep.get("SBF", j, k) for k in ("MISE", "ISB", "IV"))
            assert m == pytest.approx(b + v, abs=1e-10)
        assert len(rep.iterations["SBF"]) == 4
        assert rep.replications == {"truth": 4, "SBF": 4}

    def test_reproducible_and_worker_independent(self):
        est = [SbfEstimator()]
        a = run_study("d3", 50, 3, est, seed=2, grid=Grid(21), keep_curves=True)
        b = run_study("d3", 50, 3, est, seed=2, grid=Grid(21), keep_curves=True, workers=2)
        np.testing.assert_array_equal(a.curves["SBF"], b.curves["SBF"])

    def test_failures_are_counted(self):
        rep = run_study("d3", 50, 3, [SbfEstimator(), TruthEstimator()], seed=1, grid=Grid(21), max_iter=2)
        assert rep.failures["SBF"] == {"NonConvergence": 3}
        assert rep.replications["SBF"] == 0
        assert np.isnan(rep.totals["SBF"])
        assert "failures" in rep.to_text()

    def test_mi_and_oracle_estimators(self):
        ests = [MiEstimator("MI", 5.0, components=(1,)), OracleEstimator()]
        rep = run_study("d3", 60, 3, ests, seed=0, grid=Grid(21), bandwidth_policy=FixedPolicy((0.3,)))
        assert np.isnan(rep.get("MI", 0)) and np.isfinite(rep.get("MI", 1))
        assert np.isfinite(rep.totals["oracle"])

    def test_rows_are_json(self):
        rep = run_study("d3", 40, 2, [MiEstimator("MI", 3.0, components=(0,))], grid=Grid(21))
        rows = json.loads(json.dumps(rep.to_rows()))
        assert rows[1]["MISE"] is None and rows[0]["n"] == 40

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            run_study("d3", 40, 1, [SbfEstimator()])
        with pytest.raises(ConfigurationError):
            run_study("d3", 40, 2, [SbfEstimator(), SbfEstimator()])
        with pytest.raises(ConfigurationError):
            preset_studies("table9", 2)

    def test_presets(self):
        assert set(PRESETS) == {"table1", "table2", "table3"}
        names = [e.name for e in PRESETS["table2"]["estimators"]()]
        assert names == ["MI c=1", "MI c=3", "MI c=5", "MI c=10"]
        assert all(e.h_scale == pytest.approx(1 / 3) for e in PRESETS["table2"]["estimators"]())
        reps = preset_studies("table3", 2, sizes=[60], grid=Grid(21))
        assert reps[0].config["d"] == 10 and len(reps[0].rows) == 20
