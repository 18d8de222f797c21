"""CSV-to-prediction workflow: model specs, ingestion, splits, fit artifacts.

A model spec names the response and a list of terms ``(x, z)``; ``z`` may be
omitted for a term whose coefficient multiplies the constant 1.  Column
transforms (``log``) apply wherever the column is used.  X columns are mapped
to [0, 1] by a min-max rescale that is recorded in the fit artifact.
"""

from __future__ import annotations

import csv
import itertools
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .backfit import BackfitConfig, backfit_local_polynomial
from .bandwidth import select_bandwidths
from .dataset import Dataset
from .errors import ConfigurationError, DomainError, IngestError, VcBackfitError
from .grid import Grid
from .kernel import get_kernel
from .smoothers import build_smoothers

__all__ = [
    "Term",
    "ModelSpec",
    "SplitSpec",
    "Table",
    "Ingested",
    "FitArtifact",
    "read_csv",
    "ingest",
    "split_rows",
    "fit_model",
    "predict",
    "rspe",
    "response_values",
    "enumerate_roles",
    "evaluate_roles",
]

TRANSFORMS = {"none": lambda v: v, "log": np.log}
ARTIFACT_VERSION = 1


@dataclass(frozen=True)
class Term:
    x: str
    z: Optional[str] = None

    @property
    def label(self) -> str:
        return f"m({self.x})" + (f"*{self.z}" if self.z else "")


@dataclass(frozen=True)
class ModelSpec:
    response: str
    terms: tuple
    transforms: dict = field(default_factory=dict)

    def __post_init__(self):
        terms = tuple(t if isinstance(t, Term) else Term(*t) if isinstance(t, (list, tuple))
                      else Term(**t) for t in self.terms)
        if not terms:
            raise ConfigurationError("a model needs at least one term")
        for t in terms:
            if t.x is None:
                raise ConfigurationError("every term needs an x column")
            if t.z is not None and t.z == t.x:
                raise ConfigurationError(f"column {t.x!r} used as both x and z of one term")
        if len({(t.x, t.z) for t in terms}) != len(terms):
            raise ConfigurationError("duplicate term in model")
        for col, tr in self.transforms.items():
            if tr not in TRANSFORMS:
                raise ConfigurationError(f"unknown transform {tr!r} for column {col!r}")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "transforms", dict(self.transforms))

    @property
    def d(self) -> int:
        return len(self.terms)

    @property
    def columns(self) -> list[str]:
        cols = [self.response]
        for t in self.terms:
            cols += [c for c in (t.x, t.z) if c is not None]
        return list(dict.fromkeys(cols))

    def to_dict(self) -> dict:
        return {"response": self.response,
                "terms": [{"x": t.x, "z": t.z} for t in self.terms],
                "transforms": dict(self.transforms)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        try:
            return cls(d["response"], tuple(d["terms"]), d.get("transforms") or {})
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed model spec: {exc}") from None

    @classmethod
    def load(cls, path) -> "ModelSpec":
        """Read a YAML or JSON model description."""
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh))


@dataclass(frozen=True)
class SplitSpec:
    """Hold-out split; ``strata`` names a grouping column for proportional allocation."""

    test_fraction: float = 0.2
    strata: Optional[str] = None
    seed: int = 0
    test_index_file: Optional[str] = None

    def __post_init__(self):
        if self.test_index_file is None and not 0.0 < self.test_fraction < 1.0:
            raise ConfigurationError("test_fraction must lie in (0, 1)")


class Table(dict):
    """Column name -> raw string values, with the row count remembered."""

    def __init__(self, columns: dict, nrows: int):
        super().__init__(columns)
        self.nrows = nrows

    def numeric(self, col: str) -> np.ndarray:
        if col not in self:
            raise IngestError(f"missing column {col!r}; available: {sorted(self)}")
        vals = self[col]
        if isinstance(vals, np.ndarray) and vals.dtype.kind == "f":
            return vals
        out = np.empty(len(vals))
        for i, v in enumerate(vals):
            try:
                out[i] = float(v)
            except (TypeError, ValueError):
                raise IngestError(f"non-numeric value {v!r} in column {col!r}, row {i + 1}") from None
        return out

    def take(self, rows) -> "Table":
        rows = np.asarray(rows)
        return Table({k: [v[i] for i in rows] if isinstance(v, list) else v[rows]
                      for k, v in self.items()}, len(rows))

    @classmethod
    def from_arrays(cls, **cols) -> "Table":
        arrs = {k: np.asarray(v, dtype=float) for k, v in cols.items()}
        sizes = {len(v) for v in arrs.values()}
        if len(sizes) != 1:
            raise IngestError("columns have different lengths")
        return cls(arrs, sizes.pop())


def read_csv(path) -> Table:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise IngestError(f"{path}: row {i + 1} has {len(r)} fields, header has {len(header)}")
    cols = {h: [r[k].strip() for r in rows] for k, h in enumerate(header)}
    return Table(cols, len(rows))


def _transformed(table: Table, spec: ModelSpec, col: str) -> np.ndarray:
    v = table.numeric(col)
    tr = spec.transforms.get(col, "none")
    if tr == "log":
        bad = np.flatnonzero(v <= 0)
        if bad.size:
            raise IngestError(f"log of non-positive value {v[bad[0]]!r} in column {col!r}, row {bad[0] + 1}")
    return TRANSFORMS[tr](v)


def response_values(table: Table, spec: ModelSpec) -> np.ndarray:
    """The transformed response column."""
    return _transformed(table, spec, spec.response)


@dataclass
class Ingested:
    data: Dataset
    rescale: dict


def _design_arrays(table: Table, spec: ModelSpec, rescale: dict):
    n = table.nrows
    X = np.empty((n, spec.d))
    Z = np.ones((n, spec.d))
    for j, t in enumerate(spec.terms):
        lo, hi = rescale[t.x]
        X[:, j] = (_transformed(table, spec, t.x) - lo) / (hi - lo)
        if t.z is not None:
            Z[:, j] = _transformed(table, spec, t.z)
    return X, Z


def ingest(table, spec: ModelSpec, rescale: dict | None = None) -> Ingested:
    """Build a Dataset from a table (or CSV path).

    Without ``rescale`` the X columns are min-max scaled on this table and the
    (min, max) pairs are returned; with it, the given pairs are reused and
    values must already fall in [0, 1].
    """
    if not isinstance(table, Table):
        table = read_csv(table)
    if rescale is None:
        rescale = {}
        for t in spec.terms:
            v = _transformed(table, spec, t.x)
            lo, hi = float(v.min()), float(v.max())
            if not hi > lo:
                raise IngestError(f"column {t.x!r} has zero range and cannot serve as x")
            rescale[t.x] = (lo, hi)
    X, Z = _design_arrays(table, spec, rescale)
    Y = _transformed(table, spec, spec.response)
    return Ingested(Dataset(X, Z, Y), dict(rescale))


def split_rows(nrows: int, split: SplitSpec, groups=None) -> tuple[np.ndarray, np.ndarray]:
    """Train and test row indices.

    With ``groups`` the test rows are allocated to groups in proportion to group
    size (largest remainders break ties) and drawn uniformly within groups.
    """
    if split.test_index_file is not None:
        test = np.unique(np.loadtxt(split.test_index_file, dtype=int, ndmin=1))
        if test.size and (test.min() < 0 or test.max() >= nrows):
            raise ConfigurationError("test index out of range")
    else:
        rng = np.random.default_rng(split.seed)
        n_test = int(round(split.test_fraction * nrows))
        if not 0 < n_test < nrows:
            raise ConfigurationError(f"test fraction leaves an empty part for n={nrows}")
        if groups is None:
            test = rng.choice(nrows, n_test, replace=False)
        else:
            groups = np.asarray(groups)
            labels, inverse, counts = np.unique(groups, return_inverse=True, return_counts=True)
            quota = counts * n_test / nrows
            take = np.floor(quota).astype(int)
            rest = n_test - take.sum()
            take[np.argsort(-(quota - take), kind="stable")[:rest]] += 1
            test = np.concatenate([
                rng.choice(np.flatnonzero(inverse == g), take[g], replace=False)
                for g in range(len(labels))
            ])
        test = np.sort(test)
    train = np.setdiff1d(np.arange(nrows), test)
    return train, test


@dataclass
class FitArtifact:
    """Everything needed to predict from a fitted model; serializes to JSON."""

    spec: dict
    order: int
    kernel: str
    grid_size: int
    bandwidths: list
    rescale: dict
    curves: list
    derivatives: list
    diagnostics: dict = field(default_factory=dict)
    version: int = ARTIFACT_VERSION

    @property
    def model(self) -> ModelSpec:
        return ModelSpec.from_dict(self.spec)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "FitArtifact":
        raw = json.loads(text)
        if raw.get("version") != ARTIFACT_VERSION:
            raise ConfigurationError(f"unsupported artifact version {raw.get('version')!r}")
        raw["rescale"] = {k: tuple(v) for k, v in raw["rescale"].items()}
        return cls(**raw)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "FitArtifact":
        return cls.from_json(Path(path).read_text())


def fit_model(table, spec: ModelSpec, h=None, order: int = 1, kernel="epanechnikov",
              grid_size: int = 101, tol: float = 1e-11, max_iter: int = 200) -> FitArtifact:
    """Ingest, choose bandwidths (plug-in unless ``h`` is given) and backfit."""
    ing = ingest(table, spec)
    data = ing.data
    diag = {}
    if h is None:
        bw = select_bandwidths(data, kernel, order)
        h = bw.h
        diag["bandwidth"] = bw.diagnostics
    h = np.broadcast_to(np.asarray(h, dtype=float), (data.d,))
    grid = Grid(grid_size)
    s = build_smoothers(data, h, kernel, order, grid)
    res = backfit_local_polynomial(s, BackfitConfig(tol=tol, max_iter=max_iter))
    diag.update(iterations=res.iterations, final_delta=res.final_delta, converged=res.converged,
                n=data.n)
    return FitArtifact(
        spec=spec.to_dict(), order=order, kernel=get_kernel(kernel).name, grid_size=grid_size,
        bandwidths=[float(v) for v in h], rescale=ing.rescale,
        curves=res.curves.tolist(),
        derivatives=[[g.values.tolist() for g in comp] for comp in res.derivatives],
        diagnostics=diag,
    )


def predict(artifact: FitArtifact, table, strict: bool = False) -> np.ndarray:
    """Y_hat = sum_j m_j(x_j) z_j with linear interpolation on the grid.

    Rescaled x outside [0, 1] raise DomainError when ``strict`` and are clamped
    with a warning otherwise.
    """
    if not isinstance(table, Table):
        table = read_csv(table)
    spec = artifact.model
    X, Z = _design_arrays(table, spec, artifact.rescale)
    out = (X < 0.0) | (X > 1.0)
    if np.any(out):
        rows, cols = np.nonzero(out)
        msg = (f"{rows.size} x value(s) outside the training range, first at row {rows[0] + 1}, "
               f"column {spec.terms[cols[0]].x!r}")
        if strict:
            raise DomainError(msg)
        warnings.warn(msg + "; clamped to the boundary", stacklevel=2)
        X = np.clip(X, 0.0, 1.0)
    grid = Grid(artifact.grid_size)
    curves = np.asarray(artifact.curves)
    yhat = np.zeros(table.nrows)
    for j in range(spec.d):
        yhat += grid.interpolate(curves[j], X[:, j]) * Z[:, j]
    return yhat


def rspe(predictions, actuals) -> float:
    """Out-of-sample squared error relative to that of the evaluation mean."""
    p = np.asarray(predictions, dtype=float)
    a = np.asarray(actuals, dtype=float)
    if p.shape != a.shape or a.size < 2:
        raise ConfigurationError("predictions and actuals need equal length of at least 2")
    denom = float(np.sum((a - a.mean()) ** 2))
    if denom == 0.0:
        raise ConfigurationError("actuals are all equal; relative error undefined")
    return float(np.sum((a - p) ** 2)) / denom


def enumerate_roles(response: str, base: Term, candidates, transforms=None) -> list[ModelSpec]:
    """All models pairing the candidate columns into (x, z) terms after ``base``.

    Terms are unordered, so each assignment is listed once with x columns in
    candidate order; four candidates give twelve models.
    """
    candidates = list(candidates)
    if len(candidates) % 2 or len(set(candidates)) != len(candidates):
        raise ConfigurationError("need an even number of distinct candidate columns")
    k = len(candidates) // 2
    pos = {c: i for i, c in enumerate(candidates)}
    models = []
    for perm in itertools.permutations(candidates):
        xs = perm[0::2]
        if all(pos[a] < pos[b] for a, b in zip(xs, xs[1:])):
            terms = (base,) + tuple(Term(perm[2 * i], perm[2 * i + 1]) for i in range(k))
            models.append(ModelSpec(response, terms, transforms or {}))
    return models


def evaluate_roles(table: Table, models, split: SplitSpec, **fit_kw) -> list[dict]:
    """Fit every model on the training rows and report test RSPE.

    Fits that fail (e.g. a negative variance integral in the bandwidth formula)
    are reported as ``None`` with the reason.
    """
    groups = table[split.strata] if split.strata else None
    train, test = split_rows(table.nrows, split, groups)
    tr, te = table.take(train), table.take(test)
    out = []
    for i, spec in enumerate(models, 1):
        row = {"model": i, "terms": [t.label for t in spec.terms], "rspe": None, "reason": ""}
        try:
            art = fit_model(tr, spec, **fit_kw)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                yhat = predict(art, te)
            row["rspe"] = rspe(yhat, response_values(te, spec))
        except VcBackfitError as exc:
            row["reason"] = type(exc).__name__
        out.append(row)
    return out
