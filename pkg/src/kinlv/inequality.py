"""Inequality measures on analytic, gridded and sampled distributions.

Three scalar summaries are provided for a distribution with mean ``m``:

* the coefficient of variation ``cv = sd / |m|``;
* the Gini index ``G = E|X - Y| / (2|m|)`` for independent copies ``X, Y``;
* the squared Gini ``G2 = sqrt(E|X - Y|^2 / (2 m^2))``, which equals the CV.

``gini2_of`` is computed from the pairwise L2 difference on purpose, not from
the variance, so that the identity ``G2 == cv`` is a genuine check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np
from scipy import special as sps

from .grid import GridDensity
from .params import ModelParams, Risk, Shape
from .special import gamma_ratio, lgamma

SQRT_PI = math.sqrt(math.pi)


class ZeroMeanError(ValueError):
    """The distribution has zero mean, so the scale-free indices are undefined."""


class EmptyInputError(ValueError):
    """No data points."""


# ---------------------------------------------------------------------------
# analytic families


class _Family:
    """Common interface: ``mean``, ``var``, ``second_moment``, ``cv``, ``gini``."""

    @property
    def var(self) -> float:
        return self.second_moment - self.mean**2

    def cv(self) -> float:
        return math.sqrt(self.var) / abs(self.mean)

    def gini2(self) -> float:
        # E(X-Y)^2 = 2 (E X^2 - m^2), from raw moments
        return math.sqrt(2 * (self.second_moment - self.mean**2) / (2 * self.mean**2))

    def scaled(self, lam: float) -> "_Family":
        raise NotImplementedError


@dataclass(frozen=True)
class GammaDist(_Family):
    shape: float
    rate: float

    def __post_init__(self) -> None:
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError("Gamma needs positive shape and rate")

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def second_moment(self) -> float:
        return self.shape * (self.shape + 1) / self.rate**2

    def cv(self) -> float:
        return 1 / math.sqrt(self.shape)

    def gini(self) -> float:
        return gamma_ratio(self.shape + 0.5, self.shape + 1) / SQRT_PI

    def logpdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        k, r = self.shape, self.rate
        with np.errstate(divide="ignore"):
            out = k * math.log(r) - lgamma(k) + (k - 1) * np.log(x) - r * x
        return np.where(x > 0, out, -np.inf)

    def pdf(self, x: np.ndarray) -> np.ndarray:
        return np.exp(self.logpdf(x))

    def cdf(self, x: np.ndarray) -> np.ndarray:
        return sps.gammainc(self.shape, self.rate * np.maximum(np.asarray(x, float), 0))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.gamma(self.shape, 1 / self.rate, n)

    def scaled(self, lam: float) -> "GammaDist":
        return GammaDist(self.shape, self.rate / lam)


@dataclass(frozen=True)
class InverseGammaDist(_Family):
    """Density ``scale^a / Gamma(a) x^{-(a+1)} exp(-scale/x)``."""

    shape: float
    scale: float

    def __post_init__(self) -> None:
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError("inverse Gamma needs positive shape and scale")

    @property
    def pareto_index(self) -> float:
        """Exponent of the power-law tail ``x^{-p}``."""
        return self.shape + 1

    @property
    def mean(self) -> float:
        if self.shape <= 1:
            return math.inf
        return self.scale / (self.shape - 1)

    @property
    def second_moment(self) -> float:
        if self.shape <= 2:
            return math.inf
        return self.scale**2 / ((self.shape - 1) * (self.shape - 2))

    def cv(self) -> float:
        if self.shape <= 2:
            raise ValueError("inverse Gamma CV needs shape > 2")
        return 1 / math.sqrt(self.shape - 2)

    def gini(self) -> float:
        if self.shape <= 1:
            raise ValueError("inverse Gamma Gini needs shape > 1")
        return gamma_ratio(self.shape - 0.5, self.shape) / SQRT_PI

    def logpdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        a, lam = self.shape, self.scale
        with np.errstate(divide="ignore", invalid="ignore"):
            out = a * math.log(lam) - lgamma(a) - (a + 1) * np.log(x) - lam / x
        return np.where(x > 0, out, -np.inf)

    def pdf(self, x: np.ndarray) -> np.ndarray:
        return np.exp(self.logpdf(x))

    def cdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        with np.errstate(divide="ignore"):
            return np.where(x > 0, sps.gammaincc(self.shape, self.scale / np.where(x > 0, x, 1)), 0.0)

    def sf(self, x: float) -> float:
        """Tail mass beyond ``x``."""
        return float(sps.gammainc(self.shape, self.scale / x))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.scale / rng.gamma(self.shape, 1.0, n)

    def scaled(self, lam: float) -> "InverseGammaDist":
        return InverseGammaDist(self.shape, self.scale * lam)


@dataclass(frozen=True)
class GaussianDist(_Family):
    mean_: float
    sd: float

    def __post_init__(self) -> None:
        if not self.sd > 0:
            raise ValueError("sd must be > 0")

    @property
    def mean(self) -> float:
        return self.mean_

    @property
    def second_moment(self) -> float:
        return self.sd**2 + self.mean_**2

    def gini(self) -> float:
        # E|X - Y| = 2 sd / sqrt(pi)
        if self.mean_ == 0:
            raise ZeroMeanError("zero mean")
        return self.sd / (SQRT_PI * abs(self.mean_))

    def pdf(self, x: np.ndarray) -> np.ndarray:
        z = (np.asarray(x, float) - self.mean_) / self.sd
        return np.exp(-0.5 * z * z) / (self.sd * math.sqrt(2 * math.pi))

    def cdf(self, x: np.ndarray) -> np.ndarray:
        return sps.ndtr((np.asarray(x, float) - self.mean_) / self.sd)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.normal(self.mean_, self.sd, n)

    def scaled(self, lam: float) -> "GaussianDist":
        return GaussianDist(self.mean_ * lam, self.sd * lam)


@dataclass(frozen=True)
class LogNormalDist(_Family):
    """Law of ``exp(N(mu_log, s_log^2))``."""

    mu_log: float
    s_log: float

    def __post_init__(self) -> None:
        if not self.s_log > 0:
            raise ValueError("s_log must be > 0")

    @property
    def mean(self) -> float:
        return math.exp(self.mu_log + self.s_log**2 / 2)

    @property
    def second_moment(self) -> float:
        return math.exp(2 * self.mu_log + 2 * self.s_log**2)

    def cv(self) -> float:
        return math.sqrt(math.expm1(self.s_log**2))

    def gini(self) -> float:
        return math.erf(self.s_log / 2)

    def pdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (np.log(x) - self.mu_log) / self.s_log
            out = np.exp(-0.5 * z * z) / (x * self.s_log * math.sqrt(2 * math.pi))
        return np.where(x > 0, out, 0.0)

    def cdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        with np.errstate(divide="ignore"):
            return np.where(x > 0, sps.ndtr((np.log(np.where(x > 0, x, 1)) - self.mu_log) / self.s_log), 0.0)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.lognormal(self.mu_log, self.s_log, n)

    def scaled(self, lam: float) -> "LogNormalDist":
        return LogNormalDist(self.mu_log + math.log(lam), self.s_log)


@dataclass(frozen=True)
class UniformDist(_Family):
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not self.hi > self.lo:
            raise ValueError("need hi > lo")

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def second_moment(self) -> float:
        return (self.lo**2 + self.lo * self.hi + self.hi**2) / 3

    def gini(self) -> float:
        if self.mean == 0:
            raise ZeroMeanError("zero mean")
        # E|X - Y| = (hi - lo)/3
        return (self.hi - self.lo) / (6 * abs(self.mean))

    def pdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        return np.where((x >= self.lo) & (x <= self.hi), 1 / (self.hi - self.lo), 0.0)

    def cdf(self, x: np.ndarray) -> np.ndarray:
        return np.clip((np.asarray(x, float) - self.lo) / (self.hi - self.lo), 0, 1)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, n)

    def scaled(self, lam: float) -> "UniformDist":
        return UniformDist(self.lo * lam, self.hi * lam)


Family = GammaDist | InverseGammaDist | GaussianDist | LogNormalDist | UniformDist


def matched_density(shape: Shape | str, mean: float, cv: float) -> Family:
    """Member of ``shape`` with the prescribed mean and CV."""
    shape = Shape(shape)
    if not mean > 0:
        raise ValueError("mean must be > 0")
    if not cv > 0:
        raise ValueError("a matched density needs cv > 0")
    if shape is Shape.GAMMA:
        k = 1 / cv**2
        return GammaDist(k, k / mean)
    if shape is Shape.LOGNORMAL:
        s2 = math.log1p(cv**2)
        return LogNormalDist(math.log(mean) - s2 / 2, math.sqrt(s2))
    half = math.sqrt(3) * cv * mean
    if half > mean:
        raise ValueError("uniform density with nonnegative support needs cv <= 1/sqrt(3)")
    return UniformDist(mean - half, mean + half)


# ---------------------------------------------------------------------------
# samples


def _as_sample(x: Any) -> np.ndarray:
    a = np.asarray(x, dtype=float).ravel()
    if a.size == 0:
        raise EmptyInputError("empty sample")
    if not np.all(np.isfinite(a)):
        raise ValueError("sample contains non-finite values")
    return a


def _nonzero_mean(m: float) -> None:
    if m == 0:
        raise ZeroMeanError("mean is zero")


def _sample_cv(x: np.ndarray, ddof: int) -> float:
    n = x.size
    if n - ddof <= 0:
        raise ValueError("not enough points for the requested ddof")
    m = x.mean()
    _nonzero_mean(m)
    return math.sqrt(float(np.sum((x - m) ** 2)) / (n - ddof)) / abs(m)


def _sample_gini(x: np.ndarray) -> float:
    n = x.size
    m = x.mean()
    _nonzero_mean(m)
    xs = np.sort(x)
    i = np.arange(1, n + 1)
    return float(np.sum((2 * i - n - 1) * xs)) / (n * n * abs(m))


_PAIRWISE_MAX = 8192


def _pairwise_sq_sum(c: np.ndarray, w: np.ndarray | None = None) -> float:
    """``sum_ij w_i w_j (c_i - c_j)^2``, blocked double sum."""
    c = c - np.mean(c)
    if w is None:
        w = np.ones_like(c)
    total = 0.0
    step = 1024
    for s in range(0, c.size, step):
        d = c[s : s + step, None] - c[None, :]
        total += float(w[s : s + step] @ (d * d) @ w)
    return total


def _sample_gini2(x: np.ndarray, ddof: int) -> float:
    n = x.size
    m = x.mean()
    _nonzero_mean(m)
    if n <= _PAIRWISE_MAX:
        s = _pairwise_sq_sum(x)
    else:
        # sum_ij (x_i - x_j)^2 = 2 n sum_i (x_i - m)^2 - 2 (sum_i (x_i - m))^2
        d = x - m
        s = 2 * n * float(np.sum(d * d)) - 2 * float(np.sum(d)) ** 2
    pairs = n * n if ddof == 0 else n * (n - 1)
    if pairs == 0:
        raise ValueError("not enough points for the requested ddof")
    # divide by |m| outside the root: m*m underflows for tiny samples
    return math.sqrt(max(s, 0.0) / (2 * pairs)) / abs(m)


def _weighted_sorted_gini(xs: np.ndarray, w: np.ndarray) -> float:
    # xs sorted ascending; w integer-like counts
    W = w.sum()
    below = np.cumsum(w) - w
    above = W - below - w
    num = float(np.sum(w * xs * (below - above)))
    return num / (W * float(w @ xs))


def gini_bootstrap_se(x: Sequence[float], n_boot: int = 200, seed: int = 0) -> float:
    """Bootstrap standard error of the sample Gini index."""
    xs = np.sort(_as_sample(x))
    n = xs.size
    if n < 2:
        return 0.0
    rng = np.random.default_rng(seed)
    vals = np.empty(n_boot)
    for b in range(n_boot):
        counts = np.bincount(rng.integers(0, n, n), minlength=n).astype(float)
        vals[b] = _weighted_sorted_gini(xs, counts)
    return float(vals.std(ddof=1))


# ---------------------------------------------------------------------------
# grids


def _grid_cv(g: GridDensity) -> float:
    m = g.mean
    _nonzero_mean(m)
    return math.sqrt(g.variance) / abs(m)


def _grid_gini(g: GridDensity) -> float:
    m = g.mean
    _nonzero_mean(m)
    F = g.cdf_at_edges()
    F0, F1 = F[:-1], F[1:]
    # exact integral of F(1 - F) for piecewise-linear F
    integral = np.sum(g.widths * ((F0 + F1) / 2 - (F0 * F0 + F0 * F1 + F1 * F1) / 3))
    return float(integral) / abs(m)


def _grid_gini2(g: GridDensity) -> float:
    w, c, h = g.weights, g.centers, g.widths
    m = float(w @ c)
    _nonzero_mean(m)
    # E(X - Y)^2 for independent piecewise-uniform X, Y
    spread = 2 * float(w @ (h * h)) / 12
    if c.size <= _PAIRWISE_MAX:
        s = _pairwise_sq_sum(c, w)
    else:
        d = c - m
        s = 2 * float(w @ (d * d))
    return math.sqrt((s + spread) / 2) / abs(m)


# ---------------------------------------------------------------------------
# public dispatch


def _kind(dist: Any) -> str:
    if isinstance(dist, GridDensity):
        return "grid"
    if isinstance(dist, _Family):
        return "analytic"
    return "sample"


def cv_of(dist: Any, *, ddof: int = 0) -> float:
    """Coefficient of variation.

    Samples use the plug-in variance (``ddof=0``) by default so that the
    identity with :func:`gini2_of` is exact; ``ddof=1`` gives the unbiased
    variance and pairs with ``gini2_of(..., ddof=1)``.
    """
    kind = _kind(dist)
    if kind == "grid":
        return _grid_cv(dist)
    if kind == "analytic":
        _nonzero_mean(dist.mean)
        return dist.cv()
    return _sample_cv(_as_sample(dist), ddof)


def gini_of(dist: Any) -> float:
    """Gini index ``E|X - Y| / (2|m|)``."""
    kind = _kind(dist)
    if kind == "grid":
        return _grid_gini(dist)
    if kind == "analytic":
        _nonzero_mean(dist.mean)
        return dist.gini()
    return _sample_gini(_as_sample(dist))


def gini2_of(dist: Any, *, ddof: int = 0) -> float:
    """Squared Gini ``sqrt(E|X - Y|^2 / (2 m^2))`` from pairwise differences."""
    kind = _kind(dist)
    if kind == "grid":
        return _grid_gini2(dist)
    if kind == "analytic":
        _nonzero_mean(dist.mean)
        return dist.gini2()
    return _sample_gini2(_as_sample(dist), ddof)


def gini_double_sum(g: GridDensity | Sequence[float]) -> float:
    """Slow O(N^2) Gini, kept as a test oracle.

    For grids the within-cell term ``E|U - U'| = h/3`` of two uniforms on the
    same cell is included, so the result equals the CDF formula exactly.
    """
    if isinstance(g, GridDensity):
        w, c, h = g.weights, g.centers, g.widths
        m = float(w @ c)
        total = 0.0
        for i in range(c.size):
            d = np.abs(c[i] - c)
            # cross-cell: uniforms on disjoint cells never overlap, so E|X-Y| = |c_i - c_j|
            total += w[i] * float(w @ d)
        total += float(w @ (w * h)) / 3
        return total / (2 * abs(m))
    x = _as_sample(g)
    return float(np.abs(x[:, None] - x[None, :]).sum()) / (2 * x.size**2 * abs(x.mean()))


@dataclass(frozen=True)
class InequalityReport:
    t: float
    cv: float
    gini: float
    gini2: float
    source: str
    se: float | None = None

    def row(self) -> list:
        return [self.t, self.cv, self.gini, self.gini2, self.source, "" if self.se is None else self.se]


REPORT_HEADER = ("t", "cv", "gini", "gini2", "source", "se")


def report(dist: Any, t: float = 0.0, *, n_boot: int = 200, seed: int = 0) -> InequalityReport:
    kind = _kind(dist)
    se = gini_bootstrap_se(dist, n_boot, seed) if kind == "sample" else None
    return InequalityReport(t, cv_of(dist), gini_of(dist), gini2_of(dist), kind, se)


def gautschi_bounds(a: float, cv: float) -> tuple[float, float]:
    """Bracket of the inverse-Gamma Gini index from Gautschi's inequality."""
    if not a > 2:
        raise ValueError("Gautschi bounds need shape a > 2")
    return cv * math.sqrt((a - 2) / a) / SQRT_PI, cv * math.sqrt((a - 1) / a) / SQRT_PI


# ---------------------------------------------------------------------------
# quasi-equilibria


@dataclass(frozen=True)
class QuasiEquilibrium:
    """Density annihilating the Fokker-Planck operator at frozen means.

    For the Gamma family ``param`` is the rate, for the inverse Gamma it is
    the scale.
    """

    species: str
    risk: Risk
    family: str
    shape: float
    param: float

    @property
    def dist(self) -> GammaDist | InverseGammaDist:
        if self.family == "gamma":
            return GammaDist(self.shape, self.param)
        return InverseGammaDist(self.shape, self.param)

    @property
    def rate(self) -> float:
        return self.param

    @property
    def mean(self) -> float:
        return self.dist.mean

    def cv(self) -> float:
        return self.dist.cv()

    @property
    def pareto_index(self) -> float:
        if self.family != "inverse_gamma":
            raise AttributeError("only the inverse Gamma family has a Pareto index")
        return self.shape + 1

    def pdf(self, x: np.ndarray) -> np.ndarray:
        return self.dist.pdf(x)

    def log_normalization(self) -> float:
        """Log of the analytic normalizing constant."""
        return self.shape * math.log(self.param) - lgamma(self.shape)


def drift_constants(p: ModelParams, species: str, m_f: float, m_g: float) -> tuple[float, float, float]:
    """``(noise, c1, c0)`` such that the flux drift is ``c1 x - c0``.

    ``noise`` multiplies ``x^k`` inside the diffusion (``x`` for risk 1/2,
    ``x^2`` for risk 1) together with the factor 1/2.
    """
    if species == "deposits":
        return p.sigma_f * m_g, p.beta * m_g + p.alpha * p.chi, p.alpha * (p.chi + 1) * m_f
    if species == "loans":
        return p.sigma_g * m_f, p.gamma * (p.mu - m_f) + p.nu * p.theta, p.nu * (p.theta + 1) * m_g
    raise ValueError(f"species must be 'deposits' or 'loans', got {species!r}")


def quasi_eq_density(
    p: ModelParams,
    species: str,
    risk: Risk | str | None,
    m_f: float,
    m_g: float,
    *,
    pareto: str = "printed",
) -> QuasiEquilibrium:
    """Quasi-equilibrium at means ``(m_f, m_g)``.

    Risk 1/2 gives a Gamma density, risk 1 an inverse Gamma density. For the
    loans at risk 1, ``pareto="printed"`` uses the tail exponent
    ``2 + (2 gamma (mu - 1) + 2 theta nu)/(sigma_g m_f)`` and
    ``pareto="derived"`` the exponent obtained from the zero-flux condition,
    ``2 + 2 (gamma (mu - m_f) + nu theta)/(sigma_g m_f)``.
    """
    if not (m_f > 0 and m_g > 0):
        raise ValueError("means must be > 0")
    if risk is None:
        risk = p.risk_f if species == "deposits" else p.risk_g
    risk = Risk.parse(risk)
    noise, c1, c0 = drift_constants(p, species, m_f, m_g)
    if not noise > 0:
        raise ValueError("quasi-equilibrium needs a positive noise coefficient")
    if risk is Risk.HALF:
        if not c1 > 0:
            raise ValueError("drift does not confine: Gamma rate would be nonpositive")
        return QuasiEquilibrium(species, risk, "gamma", 2 * c0 / noise, 2 * c1 / noise)
    scale = 2 * c0 / noise
    if species == "loans" and pareto == "printed":
        tail = (2 * p.gamma * (p.mu - 1) + 2 * p.theta * p.nu + noise) / noise + 1
    elif pareto in ("printed", "derived"):
        tail = 2 + 2 * c1 / noise
    else:
        raise ValueError("pareto must be 'printed' or 'derived'")
    if not tail > 1:
        raise ValueError("inverse Gamma quasi-equilibrium is not normalizable")
    return QuasiEquilibrium(species, risk, "inverse_gamma", tail - 1, scale)


def pareto_index(p: ModelParams, m_f: float, *, pareto: str = "printed") -> float:
    """Tail exponent of the loans quasi-equilibrium at risk 1."""
    return quasi_eq_density(p, "loans", Risk.ONE, m_f, 1.0, pareto=pareto).pareto_index


@dataclass(frozen=True)
class MomentCondition:
    holds: bool
    margin: float
    sup_m_f: float


def second_moment_condition(p: ModelParams, m_f_series: Iterable[float] | Any) -> MomentCondition:
    """Check ``sigma_g * sup m_f < 2 gamma (mu - 1) + theta nu``.

    Accepts a trajectory (anything with an ``m_f`` attribute) or an array of
    deposit means. ``margin`` is the right side minus the left side.
    """
    mf = np.asarray(getattr(m_f_series, "m_f", m_f_series), float)
    if mf.size == 0:
        raise EmptyInputError("empty mean series")
    sup = float(mf.max())
    margin = 2 * p.gamma * (p.mu - 1) + p.theta * p.nu - p.sigma_g * sup
    return MomentCondition(margin > 0, margin, sup)
