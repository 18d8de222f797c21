import csv
import json

import numpy as np
import pytest
import yaml

from vcbackfit.errors import ConfigurationError, DomainError, IngestError
from vcbackfit.pipeline import (
    FitArtifact,
    ModelSpec,
    SplitSpec,
    Table,
    Term,
    enumerate_roles,
    evaluate_roles,
    fit_model,
    ingest,
    predict,
    read_csv,
    rspe,
    split_rows,
)


def write_csv(path, cols):
    names = list(cols)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*(cols[k] for k in names)):
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def linear_table(n=200, seed=0):
    """y = (1 + 2 u) + (0.5 - u') * w with u, u' on [0, 2] and [10, 20]."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, 2, n)
    b = rng.uniform(10, 20, n)
    w = rng.normal(size=n)
    a[:2], b[:2] = [0, 2], [10, 20]
    y = (1 + 2 * a) + (0.5 - (b - 10) / 10) * w
    return Table.from_arrays(y=y, a=a, b=b, w=w)


LINEAR = ModelSpec("y", (Term("a"), Term("b", "w")))


class TestModelSpec:
    def test_yaml_and_json_agree(self, tmp_path):
        d = {"response": "y", "terms": [{"x": "a"}, {"x": "b", "z": "w"}], "transforms": {"a": "log"}}
        (tmp_path / "m.yaml").write_text(yaml.safe_dump(d))
        (tmp_path / "m.json").write_text(json.dumps(d))
        a, b = ModelSpec.load(tmp_path / "m.yaml"), ModelSpec.load(tmp_path / "m.json")
        assert a == b and a.to_dict() == {**d, "terms": [{"x": "a", "z": None}, {"x": "b", "z": "w"}]}
        assert a.columns == ["y", "a", "b", "w"]
        assert [t.label for t in a.terms] == ["m(a)", "m(b)*w"]

    @pytest.mark.parametrize("bad", [
        {"response": "y", "terms": []},
        {"response": "y", "terms": [{"x": "a", "z": "a"}]},
        {"response": "y", "terms": [{"x": "a"}, {"x": "a"}]},
        {"response": "y", "terms": [{"x": "a"}], "transforms": {"a": "sqrt"}},
        {"terms": [{"x": "a"}]},
        {"response": "y", "terms": [{"z": "a"}]},
    ])
    def test_invalid(self, bad):
        with pytest.raises(ConfigurationError):
            ModelSpec.from_dict(bad)


class TestIngest:
    def test_rescaling(self):
        t = Table.from_arrays(y=[1.0, 2.0, 3.0], x=[2.0, 4.0, 6.0])
        ing = ingest(t, ModelSpec("y", (Term("x"),)))
        np.testing.assert_allclose(ing.data.X[:, 0], [0.0, 0.5, 1.0])
        np.testing.assert_allclose(ing.data.Z, 1.0)
        assert ing.rescale == {"x": (2.0, 6.0)}

    def test_log_of_zero_names_row(self):
        t = Table.from_arrays(y=[1.0, 2.0, 3.0], x=[2.0, 0.0, 6.0])
        with pytest.raises(IngestError, match="row 2"):
            ingest(t, ModelSpec("y", (Term("x"),), {"x": "log"}))

    def test_non_numeric_and_missing(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", {"y": ["1", "2", "3"], "x": ["0.1", "abc", "0.3"]})
        table = read_csv(path)
        with pytest.raises(IngestError, match="'abc'.*row 2"):
            ingest(table, ModelSpec("y", (Term("x"),)))
        with pytest.raises(IngestError, match="missing column 'q'"):
            ingest(table, ModelSpec("y", (Term("q"),)))

    def test_zero_range(self):
        t = Table.from_arrays(y=[1.0, 2.0], x=[3.0, 3.0])
        with pytest.raises(IngestError, match="zero range"):
            ingest(t, ModelSpec("y", (Term("x"),)))

    def test_ragged_csv(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("y,x\n1,2\n3\n")
        with pytest.raises(IngestError, match="row 2"):
            read_csv(p)


class TestFitPredict:
    def test_linear_truth_and_round_trip(self, tmp_path):
        table = linear_table()
        art = fit_model(table, LINEAR, h=[0.3, 0.3], grid_size=51)
        assert art.diagnostics["converged"]
        yhat = predict(art, table)
        np.testing.assert_allclose(yhat, table["y"], atol=1e-4)
        art.save(tmp_path / "fit.json")
        back = FitArtifact.load(tmp_path / "fit.json")
        assert predict(back, table).tobytes() == yhat.tobytes()

    def test_zero_z_and_constant_model(self):
        n = 80
        rng = np.random.default_rng(1)
        x = rng.uniform(size=n)
        table = Table.from_arrays(y=np.full(n, 4.5), x=x, w=rng.normal(size=n))
        const = fit_model(table, ModelSpec("y", (Term("x"),)), h=[0.3], grid_size=41)
        np.testing.assert_allclose(predict(const, table), 4.5, atol=1e-10)
        art = fit_model(linear_table(), LINEAR, h=[0.3, 0.3], grid_size=41)
        probe = Table.from_arrays(y=[0.0, 0.0], a=[0.0, 2.0], b=[12.0, 17.0], w=[0.0, 0.0])
        np.testing.assert_allclose(predict(art, probe), [1.0, 5.0], atol=1e-6)

    def test_out_of_range(self):
        art = fit_model(linear_table(), LINEAR, h=[0.3, 0.3], grid_size=41)
        probe = Table.from_arrays(y=[0.0], a=[2.5], b=[15.0], w=[1.0])
        with pytest.warns(UserWarning, match="clamped"):
            clamped = predict(art, probe)
        assert clamped[0] == pytest.approx(5.0 + 0.0, abs=1e-6)
        with pytest.raises(DomainError, match="row 1"):
            predict(art, probe, strict=True)

    def test_plugin_default(self):
        art = fit_model(linear_table(seed=3), LINEAR, grid_size=41)
        assert len(art.bandwidths) == 2 and "bandwidth" in art.diagnostics

    def test_bad_version(self):
        art = fit_model(linear_table(), LINEAR, h=0.3, grid_size=21)
        raw = json.loads(art.to_json())
        raw["version"] = 99
        with pytest.raises(ConfigurationError):
            FitArtifact.from_json(json.dumps(raw))


class TestRspe:
    def test_reference_values(self):
        a = np.array([1.0, 2.0, 4.0])
        assert rspe(a, a) == 0.0
        assert rspe(np.full(3, a.mean()), a) == pytest.approx(1.0)

    def test_errors(self):
        with pytest.raises(ConfigurationError):
            rspe([1.0, 1.0], [2.0, 2.0])
        with pytest.raises(ConfigurationError):
            rspe([1.0], [2.0])


class TestSplit:
    def test_partition(self):
        train, test = split_rows(101, SplitSpec(0.2, seed=4))
        assert len(test) == 20
        assert np.array_equal(np.sort(np.r_[train, test]), np.arange(101))

    def test_proportional_allocation(self):
        groups = np.array(["a"] * 50 + ["b"] * 30 + ["c"] * 20)
        train, test = split_rows(100, SplitSpec(0.25, strata="g"), groups)
        labels, counts = np.unique(groups[test], return_counts=True)
        # quotas 12.5, 7.5, 5: one leftover row, the tie goes to the first group
        assert dict(zip(labels, counts)) == {"a": 13, "b": 7, "c": 5}
        assert len(np.intersect1d(train, test)) == 0

    def test_index_file(self, tmp_path):
        p = tmp_path / "idx.txt"
        p.write_text("3\n1\n")
        train, test = split_rows(5, SplitSpec(test_index_file=str(p)))
        assert test.tolist() == [1, 3] and train.tolist() == [0, 2, 4]
        p.write_text("7\n")
        with pytest.raises(ConfigurationError):
            split_rows(5, SplitSpec(test_index_file=str(p)))

    @pytest.mark.parametrize("frac", [0.0, 1.0])
    def test_fraction_validation(self, frac):
        with pytest.raises(ConfigurationError):
            SplitSpec(frac)


class TestRoles:
    def test_twelve_models_in_order(self):
        models = enumerate_roles("y", Term("a"), ["p", "q", "r", "s"])
        assert len(models) == 12
        pairs = [tuple((t.x, t.z) for t in m.terms[1:]) for m in models]
        assert len(set(pairs)) == 12
        assert pairs[0] == (("p", "q"), ("r", "s"))
        assert pairs[1] == (("p", "q"), ("s", "r"))
        assert all(m.terms[0] == Term("a") for m in models)

    def test_odd_candidates(self):
        with pytest.raises(ConfigurationError):
            enumerate_roles("y", Term("a"), ["p", "q", "r"])

    def test_evaluation_finds_true_roles(self):
        rng = np.random.default_rng(7)
        n = 300
        cols = {k: rng.uniform(size=n) for k in "apqrs"}
        y = np.sin(3 * cols["a"]) + np.cos(3 * cols["p"]) * cols["q"] + 2 * cols["r"] * cols["s"]
        table = Table.from_arrays(y=y + 0.05 * rng.normal(size=n), **cols)
        models = enumerate_roles("y", Term("a"), ["p", "q", "r", "s"])
        rows = evaluate_roles(table, models, SplitSpec(0.2, seed=1), grid_size=41)
        scores = np.array([r["rspe"] for r in rows])
        # r * s is symmetric, so models 1 and 2 both hold the truth
        assert np.all(scores[:2] < 0.05)
        assert np.all(scores[2:] > 2 * scores[:2].max())
