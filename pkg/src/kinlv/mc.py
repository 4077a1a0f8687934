"""Agent-based Monte Carlo for the Boltzmann-type deposit-loan system.

Time advances in synchronous rounds of length ``epsilon``. In every round

1. deposits are paired with loans through a uniformly random permutation and
   both members of a pair update from their pre-interaction values,
2. every agent receives one redistribution update with a resource ``z``
   drawn from its own population.

Interaction strengths and noise variances carry a factor ``epsilon`` and the
saturating responses are evaluated at ``epsilon * state``, so that as
``epsilon -> 0`` the mean drift becomes bilinear and the ensemble follows the
Fokker-Planck system.

Randomness is drawn from one independent stream per round, derived from the
run seed, so results depend only on ``(seed, n_agents, epsilon, stride)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .inequality import gini_of, matched_density
from .params import InitialConditions, ModelParams, Risk, Shape

log = logging.getLogger(__name__)


class ResampleExhausted(ArithmeticError):
    """Too many interactions had to be skipped to keep states nonnegative."""


# ---------------------------------------------------------------------------
# microscopic rules


def holling_phi(p: ModelParams, y: np.ndarray | float, epsilon: float = 1.0) -> np.ndarray | float:
    """Deposit loss rate ``beta (eps y) / (1 + eps y)``."""
    ey = epsilon * np.asarray(y, float)
    out = p.beta * ey / (1 + ey)
    return float(out) if np.ndim(out) == 0 else out


def holling_psi(p: ModelParams, x: np.ndarray | float, epsilon: float = 1.0) -> np.ndarray | float:
    """Loan growth rate ``eps gamma (x - mu) / (1 + eps x)``."""
    x = np.asarray(x, float)
    out = epsilon * p.gamma * (x - p.mu) / (1 + epsilon * x)
    return float(out) if np.ndim(out) == 0 else out


def _exponents(p: ModelParams, p_f: float | None, p_g: float | None) -> tuple[float, float]:
    return (p.risk_f.exponent if p_f is None else p_f, p.risk_g.exponent if p_g is None else p_g)


def noise_scales(
    p: ModelParams,
    x: np.ndarray,
    y: np.ndarray,
    epsilon: float,
    *,
    x_ref: float = 1.0,
    y_ref: float = 1.0,
    p_f: float | None = None,
    p_g: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Standard deviations of the random increments of a pair."""
    ef, eg = _exponents(p, p_f, p_g)
    ey, ex = epsilon * y, epsilon * x
    sd_f = np.sqrt(epsilon * p.sigma_f * y / (1 + ey)) * (x / x_ref) ** ef
    sd_g = np.sqrt(epsilon * p.sigma_g * x / (1 + ex)) * (y / y_ref) ** eg
    if p.s0 > 0:
        sd_f = sd_f * (x >= (1 - ef) * p.s0)
        sd_g = sd_g * (y >= (1 - eg) * p.s0)
    return sd_f, sd_g


def interact_pair(
    p: ModelParams,
    x: np.ndarray | float,
    y: np.ndarray | float,
    eta_f: np.ndarray | float,
    eta_g: np.ndarray | float,
    epsilon: float = 1.0,
    *,
    x_ref: float = 1.0,
    y_ref: float = 1.0,
    p_f: float | None = None,
    p_g: float | None = None,
) -> tuple[np.ndarray | float, np.ndarray | float]:
    """Post-interaction states for given unit-variance noise draws.

    No positivity handling here; see :func:`run_mc` for the resample policy.
    """
    xa, ya = np.asarray(x, float), np.asarray(y, float)
    sd_f, sd_g = noise_scales(p, xa, ya, epsilon, x_ref=x_ref, y_ref=y_ref, p_f=p_f, p_g=p_g)
    x1 = xa - holling_phi(p, ya, epsilon) * xa + sd_f * np.asarray(eta_f, float)
    y1 = ya + holling_psi(p, xa, epsilon) * ya + sd_g * np.asarray(eta_g, float)
    if np.ndim(x1) == 0:
        return float(x1), float(y1)
    return x1, y1


def redistribute(
    p: ModelParams, value: np.ndarray | float, z: np.ndarray | float, epsilon: float, species: str
) -> np.ndarray | float:
    """Linear redistribution towards the resource ``z``."""
    v, z = np.asarray(value, float), np.asarray(z, float)
    if species == "deposits":
        out = v + epsilon * p.alpha * (z - p.chi * v)
    elif species == "loans":
        out = v + epsilon * p.nu * (z - p.theta * v)
    else:
        raise ValueError(f"species must be 'deposits' or 'loans', got {species!r}")
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# populations and configuration


@dataclass
class AgentPopulation:
    species: str
    values: np.ndarray
    seed: int
    stream: tuple[int, ...]
    epsilon: float

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, float)
        if np.any(self.values < 0):
            raise ValueError("agent states must be nonnegative")


@dataclass(frozen=True)
class McConfig:
    n_agents: int = 100_000
    epsilon: float = 0.01
    t_end: float = 20.0
    stride: float = 0.25
    seed: int = 12345
    snapshot_times: tuple[float, ...] = ()
    noise_reference: str = "unit"
    max_resample: int = 100
    abort_fraction: float = 0.01
    n_bins: int = 200
    p_f: float | None = None  # general risk exponents, extension only
    p_g: float | None = None

    def __post_init__(self) -> None:
        if self.n_agents < 2:
            raise ValueError("n_agents must be >= 2")
        if not 0 < self.epsilon <= 1:
            raise ValueError("epsilon must lie in (0, 1]")
        if not (self.t_end > 0 and self.stride > 0):
            raise ValueError("t_end and stride must be > 0")
        if self.noise_reference not in ("unit", "mean"):
            raise ValueError("noise_reference must be 'unit' or 'mean'")
        ratio = self.stride / self.epsilon
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ValueError("stride must be an integer multiple of epsilon")

    @property
    def rounds_per_output(self) -> int:
        return int(round(self.stride / self.epsilon))

    @property
    def n_rounds(self) -> int:
        return int(round(self.t_end / self.epsilon))


def initial_population(
    species: str, mean: float, cv: float, shape: Shape, cfg: McConfig
) -> AgentPopulation:
    idx = 0 if species == "deposits" else 1
    stream = (1, idx)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed, spawn_key=stream)))
    if cv == 0:
        values = np.full(cfg.n_agents, float(mean))
    else:
        values = matched_density(shape, mean, cv).sample(rng, cfg.n_agents)
    return AgentPopulation(species, values, cfg.seed, stream, cfg.epsilon)


def round_rng(seed: int, k: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(0, k))))


# ---------------------------------------------------------------------------
# simulation


HIST_HEADER = ("bin_left", "bin_right", "density_f", "density_g")


@dataclass
class Histogram:
    t: float
    edges: np.ndarray
    density_f: np.ndarray
    density_g: np.ndarray

    def rows(self) -> list[tuple[float, float, float, float]]:
        return list(zip(self.edges[:-1], self.edges[1:], self.density_f, self.density_g))


@dataclass
class McResult:
    t: np.ndarray
    m_f: np.ndarray
    m_g: np.ndarray
    v_f: np.ndarray
    v_g: np.ndarray
    gini_f: np.ndarray
    gini_g: np.ndarray
    skipped_events: np.ndarray
    se_m_f: np.ndarray
    se_m_g: np.ndarray
    se_v_f: np.ndarray
    se_v_g: np.ndarray
    min_value: float = 0.0
    total_events: int = 0
    histograms: list[Histogram] = field(default_factory=list)

    @property
    def c_f(self) -> np.ndarray:
        return np.sqrt(self.v_f) / self.m_f

    @property
    def c_g(self) -> np.ndarray:
        return np.sqrt(self.v_g) / self.m_g

    def columns(self) -> dict[str, np.ndarray]:
        return {
            "t": self.t, "m_f": self.m_f, "m_g": self.m_g, "v_f": self.v_f, "v_g": self.v_g,
            "c_f": self.c_f, "c_g": self.c_g, "gini_f": self.gini_f, "gini_g": self.gini_g,
            "skipped_events": self.skipped_events,
        }


def _moments(v: np.ndarray) -> tuple[float, float, float, float]:
    """Mean, plug-in variance and their standard errors."""
    n = v.size
    m = math.fsum(v) / n
    d = v - m
    d2 = d * d
    var = math.fsum(d2) / n
    m4 = math.fsum(d2 * d2) / n
    return m, var, math.sqrt(var / n), math.sqrt(max(m4 - var * var, 0.0) / n)


def _histogram(t: float, x: np.ndarray, y: np.ndarray, n_bins: int) -> Histogram:
    top = float(max(x.max(), y.max()))
    if top <= 0:
        top = 1.0
    edges = np.linspace(0.0, top, n_bins + 1)
    hf, _ = np.histogram(x, edges, density=True)
    hg, _ = np.histogram(y, edges, density=True)
    return Histogram(t, edges, hf, hg)


def run_mc(p: ModelParams, ic: InitialConditions, cfg: McConfig = McConfig()) -> McResult:
    """Simulate both populations and record empirical moments every stride."""
    n, eps = cfg.n_agents, cfg.epsilon
    x = initial_population("deposits", ic.m_f0, ic.c_f0, ic.shape, cfg).values
    y = initial_population("loans", ic.m_g0, ic.c_g0, ic.shape, cfg).values
    ef, eg = _exponents(p, cfg.p_f, cfg.p_g)
    snap_rounds = {int(round(t / eps)): t for t in cfg.snapshot_times}

    rows: list[tuple] = []
    hists: list[Histogram] = []
    skipped = 0
    events = 0
    min_val = float(min(x.min(), y.min()))

    def record(k: int) -> None:
        mf, vf, smf, svf = _moments(x)
        mg, vg, smg, svg = _moments(y)
        rows.append((k * eps, mf, mg, vf, vg, gini_of(x), gini_of(y), skipped, smf, smg, svf, svg))

    for k in range(cfg.n_rounds + 1):
        if k % cfg.rounds_per_output == 0:
            record(k)
        if k in snap_rounds:
            hists.append(_histogram(snap_rounds[k], x, y, cfg.n_bins))
        if k == cfg.n_rounds:
            break
        rng = round_rng(cfg.seed, k)
        if cfg.noise_reference == "mean":
            x_ref, y_ref = float(x.mean()), float(y.mean())
        else:
            x_ref = y_ref = 1.0

        # interaction round: deposit i meets loan perm[i]
        perm = rng.permutation(n)
        yp = y[perm]
        sd_f, sd_g = noise_scales(p, x, yp, eps, x_ref=x_ref, y_ref=y_ref, p_f=ef, p_g=eg)
        det_x = x - holling_phi(p, yp, eps) * x
        det_y = yp + holling_psi(p, x, eps) * yp
        x1 = det_x + sd_f * rng.standard_normal(n)
        y1 = det_y + sd_g * rng.standard_normal(n)
        bad = (x1 < 0) | (y1 < 0)
        tries = 0
        while bad.any() and tries < cfg.max_resample:
            idx = np.nonzero(bad)[0]
            x1[idx] = det_x[idx] + sd_f[idx] * rng.standard_normal(idx.size)
            y1[idx] = det_y[idx] + sd_g[idx] * rng.standard_normal(idx.size)
            bad[idx] = (x1[idx] < 0) | (y1[idx] < 0)
            tries += 1
        if bad.any():
            idx = np.nonzero(bad)[0]
            x1[idx] = x[idx]
            y1[idx] = yp[idx]
            skipped += idx.size
        y_new = np.empty(n)
        y_new[perm] = y1
        x, y = x1, y_new

        # redistribution: resources drawn from the current populations
        zx = (1 + p.chi) * x[rng.integers(0, n, n)]
        zy = (1 + p.theta) * y[rng.integers(0, n, n)]
        x = redistribute(p, x, zx, eps, "deposits")
        y = redistribute(p, y, zy, eps, "loans")

        events += 3 * n
        if skipped > cfg.abort_fraction * events:
            raise ResampleExhausted(
                f"{skipped} of {events} events skipped at t={(k + 1) * eps:.4g} (limit {cfg.abort_fraction:.0%})"
            )
        min_val = min(min_val, float(x.min()), float(y.min()))

    arr = np.array(rows)
    cols = [arr[:, j] for j in range(arr.shape[1])]
    return McResult(
        cols[0], cols[1], cols[2], cols[3], cols[4], cols[5], cols[6], cols[7].astype(np.int64),
        cols[8], cols[9], cols[10], cols[11], min_val, events, hists,
    )
