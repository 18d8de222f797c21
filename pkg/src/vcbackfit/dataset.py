from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError


@dataclass(frozen=True)
class Dataset:
    """Sample of (X, Z, Y) with X in [0, 1]^d.

    ``X`` and ``Z`` are ``(n, d)`` arrays, ``Y`` has length ``n``.
    """

    X: np.ndarray
    Z: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Z = np.atleast_2d(np.asarray(self.Z, dtype=float))
        Y = np.asarray(self.Y, dtype=float).ravel()
        if X.shape != Z.shape:
            raise ConfigurationError(f"X and Z shapes differ: {X.shape} vs {Z.shape}")
        if X.shape[0] != Y.shape[0]:
            raise ConfigurationError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
        for name, arr in (("X", X), ("Z", Z), ("Y", Y)):
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"{name} contains non-finite values")
        if np.any((X < 0.0) | (X > 1.0)):
            raise DomainError("X entries must lie in [0, 1]; rescale before fitting")
        for name, arr in (("X", X), ("Z", Z), ("Y", Y)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def check_order(self, order: int) -> None:
        if self.n <= self.d * (order + 1):
            raise ConfigurationError(
                f"n={self.n} too small for d={self.d} components at order {order}"
            )

    def with_response(self, Y) -> "Dataset":
        return Dataset(self.X, self.Z, Y)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.X[rows], self.Z[rows], self.Y[rows])
