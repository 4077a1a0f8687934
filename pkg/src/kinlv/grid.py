"""Uniform 1-D meshes and piecewise-constant densities on them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Mesh1D:
    """Uniform mesh of ``n_cells`` cells on ``[x_min, x_max]``."""

    n_cells: int
    x_max: float
    x_min: float = 0.0

    def __post_init__(self) -> None:
        if int(self.n_cells) != self.n_cells or self.n_cells < 16:
            raise ValueError("n_cells must be an integer >= 16")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_cells + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx


@dataclass
class GridDensity:
    """Cell-averaged density on a (possibly nonuniform) set of edges.

    Within a cell the density is taken as constant, so the CDF is piecewise
    linear. Values must be nonnegative.
    """

    edges: np.ndarray
    values: np.ndarray
    t: float = 0.0
    _checked: bool = field(default=False, repr=False)

    def __post_init__(self) -> None:
        self.edges = np.asarray(self.edges, float)
        self.values = np.asarray(self.values, float)
        if self.edges.ndim != 1 or self.values.shape != (self.edges.size - 1,):
            raise ValueError("need len(edges) == len(values) + 1")
        if np.any(np.diff(self.edges) <= 0):
            raise ValueError("edges must be strictly increasing")
        if self.values.size == 0:
            raise ValueError("empty density")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ValueError("density values must be finite and nonnegative")

    @classmethod
    def on_mesh(cls, mesh: Mesh1D, values: np.ndarray, t: float = 0.0) -> "GridDensity":
        return cls(mesh.edges, values, t)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def weights(self) -> np.ndarray:
        """Probability of each cell."""
        w = self.values * self.widths
        return w / w.sum()

    @property
    def mass(self) -> float:
        return float(np.sum(self.values * self.widths))

    @property
    def mean(self) -> float:
        return float(self.weights @ self.centers)

    @property
    def variance(self) -> float:
        """Exact variance of the piecewise-constant density."""
        w, c, h = self.weights, self.centers, self.widths
        m = w @ c
        return float(w @ ((c - m) ** 2 + h**2 / 12))

    def cdf_at_edges(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.weights)])

    def scaled(self, lam: float) -> "GridDensity":
        """Density of ``lam * X``."""
        if not lam > 0:
            raise ValueError("lam must be > 0")
        return GridDensity(self.edges * lam, self.values / lam, self.t)
