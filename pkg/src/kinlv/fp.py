"""Finite-volume solver for the coupled Fokker-Planck system.

Each species solves a drift-diffusion equation of the form

    f_t = d/dx [ a d/dx (x^k f) + (c1 x - c0) f ],

with ``k = 1`` for risk exponent 1/2 and ``k = 2`` for risk exponent 1. The
coefficients ``a, c1, c0`` depend on the current means of both species. In
flux form ``J = d f_x + b f`` with ``d = a x^k`` and
``b = k a x^{k-1} + c1 x - c0``.

Discretization
--------------
Cell-centred finite volumes with Scharfetter-Gummel (Chang-Cooper type)
exponential fitting. The edge flux uses the exact integral ``lambda`` of
``b/d`` across the edge, so the zero-flux profile of the discrete operator is
the analytic quasi-equilibrium sampled at the nodes. Time stepping is
implicit Euler for the linear operator with explicitly lagged means. The
matrix is a tridiagonal M-matrix with unit column sums, so positivity and
mass conservation hold for any step size.

Co-moving frame
---------------
With noise coefficients of order 1e-3 the densities become very narrow
compared with the excursions of the means, and a fixed mesh has cell Peclet
numbers far above one. By default each density is therefore solved in the
variable ``xi = x / s(t)``, where ``s`` follows the mean growth rate of the
species. The equation keeps its form with ``(a, c1, c0)`` replaced by
``(a s^{k-2}, c1 + s'/s, c0 / s)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import lapack

from .grid import GridDensity, Mesh1D
from .inequality import drift_constants, matched_density, quasi_eq_density
from .params import InitialConditions, ModelParams, Risk, Shape

log = logging.getLogger(__name__)

SPECIES = ("deposits", "loans")


class NonPositiveDensity(ArithmeticError):
    """A step produced a negative cell value."""


class MassDrift(ArithmeticError):
    """Mass changed by more than the allowed tolerance."""


# ---------------------------------------------------------------------------
# coefficients


def fp_coefficients_p12(
    p: ModelParams, x: np.ndarray, m_f: float, m_g: float, species: str
) -> tuple[np.ndarray, np.ndarray]:
    """Diffusion and drift for risk exponent 1/2.

    ``D`` multiplies ``x`` inside the second derivative, ``B`` is the drift in
    ``d/dx (B f)``.
    """
    x = np.asarray(x, float)
    noise, c1, c0 = drift_constants(p, species, m_f, m_g)
    return noise / 2 * x, c1 * x - c0


def fp_coefficients_p1_loans(
    p: ModelParams, y: np.ndarray, m_f: float, m_g: float
) -> tuple[np.ndarray, np.ndarray]:
    """Diffusion (``sigma_g m_f / 2 y^2``) and drift for loans at risk exponent 1."""
    y = np.asarray(y, float)
    noise, c1, c0 = drift_constants(p, "loans", m_f, m_g)
    return noise / 2 * y * y, c1 * y - c0


@dataclass(frozen=True)
class DriftDiffusion:
    """Coefficients of ``f_t = (a (x^k f)_x + (c1 x - c0) f)_x``."""

    a: float
    c1: float
    c0: float
    k: int

    def in_frame(self, s: float, r: float) -> "DriftDiffusion":
        return DriftDiffusion(self.a * s ** (self.k - 2), self.c1 + r, self.c0 / s, self.k)


def species_operator(p: ModelParams, species: str, m_f: float, m_g: float, risk: Risk | None = None) -> DriftDiffusion:
    if risk is None:
        risk = p.risk_f if species == "deposits" else p.risk_g
    noise, c1, c0 = drift_constants(p, species, m_f, m_g)
    return DriftDiffusion(noise / 2, c1, c0, 1 if risk is Risk.HALF else 2)


def bernoulli(z: np.ndarray) -> np.ndarray:
    """``z / (exp(z) - 1)`` with the removable singularity at 0."""
    z = np.asarray(z, float)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-10
    zz = z[~small]
    with np.errstate(over="ignore"):
        out[~small] = zz / np.expm1(zz)
    out[small] = 1.0 - z[small] / 2
    return out


def _edge_coefficients(op: DriftDiffusion, x: np.ndarray, dx: float) -> tuple[np.ndarray, np.ndarray]:
    """``P, Q`` with edge flux ``J_{i+1/2} = P_i f_{i+1} - Q_i f_i`` (interior edges)."""
    xl, xr = x[:-1], x[1:]
    xe = 0.5 * (xl + xr)
    if op.a == 0.0:
        b = op.c1 * xe - op.c0
        return np.maximum(b, 0.0), np.maximum(-b, 0.0)
    if op.k == 1:
        lam = (1 - op.c0 / op.a) * np.log(xr / xl) + op.c1 / op.a * (xr - xl)
    else:
        lam = (2 + op.c1 / op.a) * np.log(xr / xl) + op.c0 / op.a * (1 / xr - 1 / xl)
    d = op.a * xe**op.k / dx
    return d * bernoulli(-lam), d * bernoulli(lam)


def flux(op: DriftDiffusion, mesh: Mesh1D, f: np.ndarray) -> np.ndarray:
    """Edge fluxes including the two zero boundary fluxes."""
    P, Q = _edge_coefficients(op, mesh.centers, mesh.dx)
    J = np.zeros(mesh.n_cells + 1)
    J[1:-1] = P * f[1:] - Q * f[:-1]
    return J


def implicit_step(op: DriftDiffusion, mesh: Mesh1D, f: np.ndarray, dt: float) -> np.ndarray:
    """One implicit Euler step with zero boundary fluxes."""
    P, Q = _edge_coefficients(op, mesh.centers, mesh.dx)
    r = dt / mesh.dx
    diag = np.ones(mesh.n_cells)
    diag[:-1] += r * Q
    diag[1:] += r * P
    upper = -r * P
    lower = -r * Q
    *_, sol, info = lapack.dgtsv(lower, diag, upper, f)
    if info != 0:
        raise NonPositiveDensity(f"tridiagonal solve failed (info={info})")
    return sol


def discrete_equilibrium(op: DriftDiffusion, mesh: Mesh1D) -> np.ndarray:
    """Normalized zero-flux profile of the discrete operator."""
    x = mesh.centers
    if op.a == 0.0:
        raise ValueError("no diffusive equilibrium without noise")
    if op.k == 1:
        lam = (1 - op.c0 / op.a) * np.log(x[1:] / x[:-1]) + op.c1 / op.a * np.diff(x)
    else:
        lam = (2 + op.c1 / op.a) * np.log(x[1:] / x[:-1]) + op.c0 / op.a * (1 / x[1:] - 1 / x[:-1])
    logf = np.concatenate([[0.0], -np.cumsum(lam)])
    f = np.exp(logf - logf.max())
    return f / (f.sum() * mesh.dx)


def stable_dt(op: DriftDiffusion, mesh: Mesh1D, factor: float = 0.5) -> float:
    """``factor * min(dx^2 / max D, dx / max |B|)`` over the mesh edges."""
    xe = mesh.edges
    D = op.a * xe**op.k
    B = op.k * op.a * xe ** (op.k - 1) + op.c1 * xe - op.c0
    dmax, bmax = float(np.max(D)), float(np.max(np.abs(B)))
    cands = []
    if dmax > 0:
        cands.append(mesh.dx**2 / dmax)
    if bmax > 0:
        cands.append(mesh.dx / bmax)
    return factor * min(cands) if cands else math.inf


# ---------------------------------------------------------------------------
# moments and diagnostics


def nodal_moments(mesh: Mesh1D, f: np.ndarray) -> tuple[float, float, float]:
    """Mass, mean and variance by midpoint quadrature."""
    x, dx = mesh.centers, mesh.dx
    w = f * dx
    mass = float(w.sum())
    mean = float(w @ x) / mass
    var = float(w @ (x - mean) ** 2) / mass
    return mass, mean, var


def relative_l1(f: np.ndarray, ref: np.ndarray) -> float:
    return float(np.sum(np.abs(f - ref)) / np.sum(np.abs(ref)))


def cell_averages(dist, mesh: Mesh1D) -> np.ndarray:
    """Exact cell averages of an analytic density via its CDF."""
    return np.diff(dist.cdf(mesh.edges)) / mesh.dx


def initial_density(mesh: Mesh1D, shape: Shape, mean: float, cv: float) -> np.ndarray:
    """Matched initial density on the mesh, normalized to unit mass.

    Bounded densities are sampled at the nodes; densities with a singularity
    or jump (Gamma shape below one, uniform) use exact cell averages.
    """
    dist = matched_density(shape, mean, cv)
    bounded = shape is Shape.LOGNORMAL or (shape is Shape.GAMMA and dist.shape >= 1)
    f = dist.pdf(mesh.centers) if bounded else cell_averages(dist, mesh)
    total = f.sum() * mesh.dx
    if not total > 0:
        raise ValueError("initial density has no mass on the mesh")
    return f / total


# ---------------------------------------------------------------------------
# solver


@dataclass(frozen=True)
class FpConfig:
    n_cells: int = 1024
    x_max: float | None = None
    t_end: float = 20.0
    output_dt: float = 0.1
    snapshot_times: tuple[float, ...] = ()
    frame: str = "comoving"
    dt_factor: float = 0.5
    mass_tol: float = 1e-12

    def __post_init__(self) -> None:
        if self.frame not in ("comoving", "fixed"):
            raise ValueError("frame must be 'comoving' or 'fixed'")
        if not self.t_end > 0 or not self.output_dt > 0:
            raise ValueError("t_end and output_dt must be > 0")
        if self.x_max is not None and not self.x_max > 0:
            raise ValueError("x_max must be > 0")
        if self.n_cells < 16:
            raise ValueError("n_cells must be >= 16")


@dataclass
class SpeciesState:
    """Density of one species in its computational frame ``xi = x / s``."""

    name: str
    mesh: Mesh1D  # computational mesh
    f: np.ndarray
    s: float = 1.0
    risk: Risk = Risk.HALF

    def moments(self) -> tuple[float, float, float]:
        """Physical mass, mean and variance."""
        mass, m, v = nodal_moments(self.mesh, self.f)
        return mass, self.s * m, self.s * self.s * v

    def physical(self, mesh: Mesh1D) -> np.ndarray:
        """Conservative remap onto a physical mesh starting at 0."""
        F = np.concatenate([[0.0], np.cumsum(self.f * self.mesh.dx)])
        xi_edges = self.mesh.edges
        G = np.interp(mesh.edges / self.s, xi_edges, F, right=F[-1])
        return np.diff(G) / mesh.dx

    @property
    def extent(self) -> float:
        """Physical right end of the computational domain."""
        return self.s * self.mesh.x_max


@dataclass
class FpSystem:
    params: ModelParams
    deposits: SpeciesState
    loans: SpeciesState
    t: float = 0.0

    def means(self) -> tuple[float, float]:
        return self.deposits.moments()[1], self.loans.moments()[1]


@dataclass
class Snapshot:
    t: float
    x: np.ndarray
    f: np.ndarray
    g: np.ndarray
    tail_mass_f: float
    tail_mass_g: float


@dataclass
class FpResult:
    t: np.ndarray
    m_f: np.ndarray
    m_g: np.ndarray
    v_f: np.ndarray
    v_g: np.ndarray
    mass_f: np.ndarray
    mass_g: np.ndarray
    snapshots: list[Snapshot] = field(default_factory=list)
    mesh: Mesh1D | None = None
    n_steps: int = 0
    final: FpSystem | None = None

    @property
    def c_f(self) -> np.ndarray:
        return np.sqrt(self.v_f) / self.m_f

    @property
    def c_g(self) -> np.ndarray:
        return np.sqrt(self.v_g) / self.m_g

    def columns(self) -> dict[str, np.ndarray]:
        return {
            "t": self.t, "m_f": self.m_f, "m_g": self.m_g, "v_f": self.v_f, "v_g": self.v_g,
            "c_f": self.c_f, "c_g": self.c_g, "mass_f": self.mass_f, "mass_g": self.mass_g,
        }

    def metadata(self) -> dict:
        return {
            "mesh": {"n_cells": self.mesh.n_cells, "x_max": self.mesh.x_max},
            "dt_policy": "0.5*min(dxi^2/max D, dxi/max|B|) in the co-moving variable",
            "n_steps": self.n_steps,
            "snapshots": [
                {"t": s.t, "tail_mass_f": s.tail_mass_f, "tail_mass_g": s.tail_mass_g} for s in self.snapshots
            ],
        }


def default_x_max(p: ModelParams, ic: InitialConditions, t_end: float) -> float:
    """Default right end of the domain.

    10 times the largest mean along the orbit (40 times when a species has
    risk exponent 1), widened if needed so that each initial density loses
    at most 1e-6 of its mass to truncation.
    """
    from .ode import OdeSolverConfig, integrate_means

    tr = integrate_means(p, ic, OdeSolverConfig(t_end=t_end, output_dt=min(0.05, t_end)))
    top = float(max(tr.m_f.max(), tr.m_g.max()))
    factor = 40.0 if Risk.ONE in (p.risk_f, p.risk_g) else 10.0
    tails = [_upper_quantile(matched_density(ic.shape, m, c), 1e-6) for m, c in ((ic.m_f0, ic.c_f0), (ic.m_g0, ic.c_g0))]
    return max(factor * top, *tails)


def _upper_quantile(dist, tail: float) -> float:
    """Smallest x with ``1 - F(x) <= tail``, by bisection."""
    lo, hi = 0.0, dist.mean
    while 1.0 - dist.cdf(hi) > tail:
        hi *= 2.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if 1.0 - dist.cdf(mid) > tail else (lo, mid)
    return hi


def _frame_rates(p: ModelParams, m_f: float, m_g: float) -> tuple[float, float]:
    return p.alpha - p.beta * m_g, p.gamma * m_f - p.delta


def init_system(p: ModelParams, ic: InitialConditions, cfg: FpConfig) -> FpSystem:
    x_max = cfg.x_max if cfg.x_max is not None else default_x_max(p, ic, cfg.t_end)
    states = []
    for name, m0, c0, risk in (
        ("deposits", ic.m_f0, ic.c_f0, p.risk_f),
        ("loans", ic.m_g0, ic.c_g0, p.risk_g),
    ):
        s = m0 if cfg.frame == "comoving" else 1.0
        mesh = Mesh1D(cfg.n_cells, x_max / s)
        f = initial_density(mesh, ic.shape, m0 / s, c0)
        states.append(SpeciesState(name, mesh, f, s, risk))
    return FpSystem(p, states[0], states[1])


def step_fp(system: FpSystem, dt: float, *, frame: str = "comoving", mass_tol: float = 1e-12) -> FpSystem:
    """Advance both densities by ``dt`` with means lagged from the current state.

    A step with a negative cell value is retried with half the step. Raises
    :class:`MassDrift` if the mass of either species changes by more than
    ``mass_tol`` relative.
    """
    p = system.params
    m_f, m_g = system.means()
    r_f, r_g = _frame_rates(p, m_f, m_g) if frame == "comoving" else (0.0, 0.0)
    h = dt
    while True:
        new = []
        ok = True
        for st, r in ((system.deposits, r_f), (system.loans, r_g)):
            op = species_operator(p, st.name, m_f, m_g, st.risk).in_frame(st.s, r)
            f_new = implicit_step(op, st.mesh, st.f, h)
            if np.any(f_new < 0):
                ok = False
                break
            m_old, m_new = st.f.sum(), f_new.sum()
            if abs(m_new - m_old) > mass_tol * m_old:
                raise MassDrift(f"{st.name}: relative mass change {abs(m_new / m_old - 1):.3e}")
            new.append(SpeciesState(st.name, st.mesh, f_new, st.s * math.exp(r * h), st.risk))
        if ok:
            break
        h *= 0.5
        if h < 1e-14 * max(dt, 1.0):
            raise NonPositiveDensity("step size underflow while restoring positivity")
    return FpSystem(p, new[0], new[1], system.t + h)


def _policy_dt(system: FpSystem, frame: str, factor: float) -> float:
    p = system.params
    m_f, m_g = system.means()
    r_f, r_g = _frame_rates(p, m_f, m_g) if frame == "comoving" else (0.0, 0.0)
    dts = []
    for st, r in ((system.deposits, r_f), (system.loans, r_g)):
        op = species_operator(p, st.name, m_f, m_g, st.risk).in_frame(st.s, r)
        dts.append(stable_dt(op, st.mesh, factor))
    return min(dts)


def _tail_mass(p: ModelParams, st: SpeciesState, m_f: float, m_g: float) -> float:
    try:
        q = quasi_eq_density(p, st.name, st.risk, m_f, m_g, pareto="derived").dist
    except ValueError:
        return math.nan
    return float(1.0 - q.cdf(st.extent))


def run_fp(
    p: ModelParams,
    ic: InitialConditions,
    cfg: FpConfig = FpConfig(),
    output_times: Sequence[float] | None = None,
) -> FpResult:
    """Solve the self-consistent system and record moments and snapshots."""
    system = init_system(p, ic, cfg)
    x_max = system.deposits.extent
    phys_mesh = Mesh1D(cfg.n_cells, x_max)
    if output_times is None:
        n = int(math.floor(cfg.t_end / cfg.output_dt + 1e-9))
        output_times = np.arange(n + 1) * cfg.output_dt
    marks = sorted(set(float(t) for t in output_times) | set(cfg.snapshot_times) | {cfg.t_end})
    marks = [t for t in marks if 0 <= t <= cfg.t_end]
    out_set = set(float(t) for t in output_times)
    snap_set = set(cfg.snapshot_times)

    rec: list[tuple] = []
    snaps: list[Snapshot] = []
    n_steps = 0

    def record(t: float) -> None:
        mf = system.deposits.moments()
        mg = system.loans.moments()
        if t in out_set or t == cfg.t_end:
            rec.append((t, mf[1], mg[1], mf[2], mg[2], mf[0], mg[0]))
        if t in snap_set:
            snaps.append(
                Snapshot(
                    t,
                    phys_mesh.centers,
                    system.deposits.physical(phys_mesh),
                    system.loans.physical(phys_mesh),
                    _tail_mass(p, system.deposits, mf[1], mg[1]),
                    _tail_mass(p, system.loans, mf[1], mg[1]),
                )
            )

    k = 0
    while k < len(marks) and marks[k] <= 0:
        record(marks[k])
        k += 1
    while k < len(marks):
        target = marks[k]
        dt = min(_policy_dt(system, cfg.frame, cfg.dt_factor), target - system.t)
        system = step_fp(system, dt, frame=cfg.frame, mass_tol=cfg.mass_tol)
        n_steps += 1
        if system.t >= target - 1e-12 * max(1.0, target):
            system.t = target
            record(target)
            k += 1
    arr = np.array(rec)
    return FpResult(*(arr[:, j] for j in range(7)), snapshots=snaps, mesh=phys_mesh, n_steps=n_steps, final=system)


# ---------------------------------------------------------------------------
# frozen-coefficient steady states


def relax_to_steady(op: DriftDiffusion, mesh: Mesh1D, f0: np.ndarray, *, tol: float = 1e-14, max_iter: int = 200) -> np.ndarray:
    """Drive ``f0`` to the discrete steady state with growing implicit steps."""
    f = f0 / (f0.sum() * mesh.dx)
    dt = stable_dt(op, mesh, 1.0)
    for _ in range(max_iter):
        f_new = implicit_step(op, mesh, f, dt)
        f_new /= f_new.sum() * mesh.dx
        change = float(np.sum(np.abs(f_new - f)) * mesh.dx)
        f = f_new
        if change < tol:
            break
        dt = min(dt * 4, 1e6)
    return f


def frozen_steady_state(
    p: ModelParams, species: str, m_f: float, m_g: float, mesh: Mesh1D, risk: Risk | None = None
) -> np.ndarray:
    """Steady state of one species with both means held fixed."""
    op = species_operator(p, species, m_f, m_g, risk)
    m = m_f if species == "deposits" else m_g
    f0 = initial_density(mesh, Shape.GAMMA, m, 0.5)
    return relax_to_steady(op, mesh, f0)


def wealth_operator(m: float, sigma: float) -> DriftDiffusion:
    """Bouchaud-Mezard operator ``(sigma/2) (x^2 h)_xx + ((x - m) h)_x``."""
    return DriftDiffusion(sigma / 2, 1.0, m, 2)


def wealth_steady_state(m: float, sigma: float, mesh: Mesh1D) -> np.ndarray:
    op = wealth_operator(m, sigma)
    f0 = initial_density(mesh, Shape.GAMMA, m, 0.5)
    return relax_to_steady(op, mesh, f0)


def to_grid_density(mesh: Mesh1D, f: np.ndarray, t: float = 0.0) -> GridDensity:
    return GridDensity.on_mesh(mesh, f, t)
