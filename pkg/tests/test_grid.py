import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vcbackfit.errors import ConfigurationError, DomainError
from vcbackfit.grid import Grid, GridFunction, GridVectorFunction, integrate, interpolate, weighted_l2_distance


class TestGrid:
    @pytest.mark.parametrize("size", [20, 22, 19, 3, 40.5])
    def test_rejects_bad_sizes(self, size):
        with pytest.raises(ConfigurationError):
            Grid(size)

    def test_nodes_and_weights(self):
        g = Grid(21)
        assert g.nodes[0] == 0.0 and g.nodes[-1] == 1.0
        assert g.weights.sum() == pytest.approx(1.0, abs=1e-15)
        assert g.spacing == pytest.approx(0.05)

    @pytest.mark.parametrize("k", [0, 1, 2, 3])
    def test_simpson_exact_for_cubics(self, k):
        g = Grid(21)
        assert g.integrate(g.nodes**k) == pytest.approx(1.0 / (k + 1), abs=1e-14)

    def test_simpson_error_order(self):
        errs = [abs(Grid(m).integrate(np.exp(Grid(m).nodes)) - (np.e - 1)) for m in (21, 41)]
        assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.05)

    def test_integrate_along_axis(self):
        g = Grid(21)
        vals = np.stack([g.nodes, g.nodes**2], axis=1)
        np.testing.assert_allclose(g.integrate(vals), [0.5, 1 / 3], atol=1e-14)
        np.testing.assert_allclose(g.integrate(vals.T, axis=1), [0.5, 1 / 3], atol=1e-14)

    def test_interpolation(self):
        g = Grid(21)
        vals = 3 * g.nodes - 1
        x = np.array([0.0, 0.123, 0.5, 1.0])
        np.testing.assert_allclose(g.interpolate(vals, x), 3 * x - 1, atol=1e-14)
        mat = np.stack([vals, -vals], axis=1)
        np.testing.assert_allclose(g.interpolate(mat, x), np.stack([3 * x - 1, 1 - 3 * x], axis=1), atol=1e-14)
        with pytest.raises(DomainError):
            g.interpolate(vals, 1.01)
        with pytest.raises(DomainError):
            g.interpolate(vals, np.nan)


class TestGridFunctions:
    def test_from_callable_and_integrate(self):
        f = GridFunction.from_callable(Grid(41), np.sin)
        assert f.integrate() == pytest.approx(1 - np.cos(1), abs=1e-8)
        assert integrate(f) == f.integrate()
        assert interpolate(f, 0.5) == pytest.approx(np.sin(0.5), abs=1e-4)

    def test_validation(self):
        g = Grid(21)
        with pytest.raises(ConfigurationError):
            GridFunction(g, np.zeros(20))
        with pytest.raises(DomainError):
            GridFunction(g, np.full(21, np.inf))
        with pytest.raises(ConfigurationError):
            GridVectorFunction(g, np.zeros(21))

    def test_vector_function(self):
        g = Grid(21)
        v = GridVectorFunction(g, np.stack([g.nodes, 2 * g.nodes], axis=1))
        assert v.length == 2
        np.testing.assert_allclose(v.component(1).values, 2 * g.nodes)
        np.testing.assert_allclose(v(0.25), [0.25, 0.5])

    def test_weighted_distance(self):
        g = Grid(21)
        f = GridFunction(g, g.nodes)
        zero = GridFunction(g, np.zeros(21))
        one = GridFunction(g, np.ones(21))
        assert weighted_l2_distance(f, zero, one) == pytest.approx(np.sqrt(1 / 3), abs=1e-14)
        assert weighted_l2_distance(f, f, one) == 0.0
        with pytest.raises(DomainError):
            weighted_l2_distance(f, zero, GridFunction(g, -np.ones(21)))
        with pytest.raises(ConfigurationError):
            weighted_l2_distance(f, GridFunction(Grid(41), np.zeros(41)), one)

    @settings(max_examples=30, deadline=None)
    @given(c=st.lists(st.floats(-5, 5), min_size=4, max_size=4))
    def test_simpson_exact_cubic_property(self, c):
        g = Grid(21)
        vals = np.polynomial.polynomial.polyval(g.nodes, c)
        exact = sum(ck / (k + 1) for k, ck in enumerate(c))
        assert g.integrate(vals) == pytest.approx(exact, abs=1e-11)
