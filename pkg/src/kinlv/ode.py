"""Deterministic moment dynamics of the deposit-loan system.

The means obey the classical Lotka-Volterra system

    m_f' = alpha m_f - beta m_f m_g,      m_g' = -delta m_g + gamma m_f m_g,

with ``delta = gamma*mu - nu``. Variances and coefficients of variation
depend on the risk exponent of the loans (``Risk.HALF`` or ``Risk.ONE``);
deposits always use exponent 1/2. CVs are integrated in squared form, which
is affine in ``c**2`` and free of the ``1/c`` singularity.

The Bouchaud-Mezard wealth example (:func:`wealth_cv`) lives here as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .integrate import Solution, SolverConfig, StepUnderflow, solve
from .params import InitialConditions, ModelParams, Risk

__all__ = [
    "MomentState",
    "CvState",
    "WealthParams",
    "WealthState",
    "OdeSolverConfig",
    "Trajectory",
    "Band",
    "StepUnderflow",
    "lv_rhs",
    "lv_invariant",
    "variance_rhs_p12",
    "variance_rhs_mixed",
    "cv_rhs_p12",
    "cv_rhs_mixed",
    "cv2_rhs_p12",
    "cv2_rhs_mixed",
    "stationary_cv",
    "integrate_means",
    "integrate_moments",
    "integrate_cv",
    "cv_closed_form_p12",
    "cv_longtime_band",
    "wealth_mean",
    "wealth_cv",
    "wealth_states",
]


# ---------------------------------------------------------------------------
# state records


@dataclass(frozen=True)
class MomentState:
    t: float
    m_f: float
    m_g: float
    v_f: float
    v_g: float

    def __post_init__(self) -> None:
        if not (self.m_f > 0 and self.m_g > 0):
            raise ValueError("means must be positive")
        if not (self.v_f >= 0 and self.v_g >= 0):
            raise ValueError("variances must be nonnegative")

    @property
    def c_f(self) -> float:
        return math.sqrt(self.v_f) / self.m_f

    @property
    def c_g(self) -> float:
        return math.sqrt(self.v_g) / self.m_g


@dataclass(frozen=True)
class CvState:
    t: float
    c_f: float
    c_g: float

    @classmethod
    def from_moments(cls, s: MomentState) -> "CvState":
        return cls(s.t, s.c_f, s.c_g)


@dataclass(frozen=True)
class WealthParams:
    """Bouchaud-Mezard parameters: target mean ``m`` and risk ``sigma < 2``."""

    m: float = 1.0
    sigma: float = 0.5

    def __post_init__(self) -> None:
        if not self.m > 0:
            raise ValueError("m must be > 0")
        if not 0 <= self.sigma < 2:
            raise ValueError("sigma must lie in [0, 2); variance is infinite for sigma >= 2")


@dataclass(frozen=True)
class WealthState:
    t: float
    m_h: float
    c_h: float
    params: WealthParams


@dataclass(frozen=True)
class OdeSolverConfig:
    """Integrator choice plus output sampling.

    ``method`` is ``"dp45"`` (adaptive, uses ``rtol``/``atol``) or ``"rk4"``
    (fixed step ``dt``).
    """

    t_end: float = 50.0
    method: str = "dp45"
    rtol: float = 1e-9
    atol: float = 1e-9
    dt: float = 0.01
    output_dt: float = 0.1

    def __post_init__(self) -> None:
        if not self.t_end > 0:
            raise ValueError("t_end must be > 0")
        if not self.output_dt > 0:
            raise ValueError("output_dt must be > 0")
        self.solver()  # validates method/tolerances

    def solver(self) -> SolverConfig:
        return SolverConfig(self.method, self.rtol, self.atol, self.dt)

    def output_times(self) -> np.ndarray:
        n = int(math.floor(self.t_end / self.output_dt + 1e-9))
        t = np.arange(n + 1) * self.output_dt
        if t[-1] < self.t_end - 1e-12 * self.t_end:
            t = np.append(t, self.t_end)
        return t


@dataclass
class Trajectory:
    """Sampled moment trajectory with the solver's continuous extension.

    ``v_*``/``c_*`` are ``None`` for means-only runs.
    """

    t: np.ndarray
    m_f: np.ndarray
    m_g: np.ndarray
    v_f: np.ndarray | None = None
    v_g: np.ndarray | None = None
    c_f: np.ndarray | None = None
    c_g: np.ndarray | None = None
    mode: str = "means"
    dense: Solution | None = field(default=None, repr=False)

    def means_at(self, t: float | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Means at arbitrary times inside the integration interval."""
        if self.dense is None:
            raise ValueError("trajectory has no dense output")
        y = self.dense(np.atleast_1d(np.asarray(t, float)))
        return y[:, 0], y[:, 1]

    @property
    def t_span(self) -> tuple[float, float]:
        return (self.dense.t_span if self.dense is not None else (float(self.t[0]), float(self.t[-1])))

    def columns(self) -> dict[str, np.ndarray]:
        cols = {"t": self.t, "m_f": self.m_f, "m_g": self.m_g}
        if self.v_f is not None:
            cols.update(v_f=self.v_f, v_g=self.v_g, c_f=self.c_f, c_g=self.c_g)
        return cols

    def states(self) -> list[MomentState]:
        if self.v_f is None:
            raise ValueError("means-only trajectory")
        return [
            MomentState(float(t), float(a), float(b), float(c), float(d))
            for t, a, b, c, d in zip(self.t, self.m_f, self.m_g, self.v_f, self.v_g)
        ]


# ---------------------------------------------------------------------------
# right-hand sides


def _check_positive(**kw: float) -> None:
    for name, v in kw.items():
        if not v > 0:
            raise ValueError(f"{name} must be > 0, got {v!r}")


def lv_rhs(p: ModelParams, m_f: float, m_g: float) -> tuple[float, float]:
    """Lotka-Volterra vector field of the means."""
    _check_positive(m_f=m_f, m_g=m_g)
    return (p.alpha * m_f - p.beta * m_f * m_g, -p.delta * m_g + p.gamma * m_f * m_g)


def lv_invariant(p: ModelParams, m_f: float, m_g: float) -> float:
    """First integral ``H``, constant along exact Lotka-Volterra orbits."""
    _check_positive(m_f=m_f, m_g=m_g)
    return p.gamma * m_f - p.delta * math.log(m_f) + p.beta * m_g - p.alpha * math.log(m_g)


def variance_rhs_p12(p: ModelParams, state: MomentState) -> tuple[float, float]:
    """Variance derivatives when both species have risk exponent 1/2."""
    m_f, m_g = state.m_f, state.m_g
    return (
        -2 * (p.beta * m_g + p.alpha * p.chi) * state.v_f + p.sigma_f * m_f * m_g,
        -2 * (p.gamma * (p.mu - m_f) + p.nu * p.theta) * state.v_g + p.sigma_g * m_f * m_g,
    )


def _mixed_sigma(p: ModelParams, sigma_override: bool) -> float:
    return p.sigma_g if sigma_override else p.sigma_f


def variance_rhs_mixed(
    p: ModelParams, state: MomentState, *, sigma_override: bool = False
) -> tuple[float, float]:
    """Variance derivatives with loans at risk exponent 1.

    The loans damping contains ``sigma_f``; with ``sigma_override`` it uses
    ``sigma_g`` instead.
    """
    m_f, m_g = state.m_f, state.m_g
    s = _mixed_sigma(p, sigma_override)
    dvf = -2 * (p.beta * m_g + p.alpha * p.chi) * state.v_f + p.sigma_f * m_f * m_g
    damp = p.gamma * (p.mu - (1 - s / (2 * p.gamma)) * m_f) + p.nu * p.theta
    return dvf, -2 * damp * state.v_g + p.sigma_g * m_f * m_g**2


def cv2_rhs_p12(p: ModelParams, m_f: float, m_g: float, cf2: float, cg2: float) -> tuple[float, float]:
    """Squared-CV derivatives, both exponents 1/2."""
    return (
        -2 * p.alpha * (p.chi + 1) * cf2 + p.sigma_f * m_g / m_f,
        -2 * p.nu * (p.theta + 1) * cg2 + p.sigma_g * m_f / m_g,
    )


def cv2_rhs_mixed(p: ModelParams, m_f: float, m_g: float, cf2: float, cg2: float) -> tuple[float, float]:
    """Squared-CV derivatives, loans at exponent 1."""
    return (
        -2 * p.alpha * (p.chi + 1) * cf2 + p.sigma_f * m_g / m_f,
        -(2 * p.nu * (p.theta + 1) + p.sigma_g * m_f) * cg2 + p.sigma_g * m_f,
    )


def _from_squared(c_f: float, c_g: float, d2: tuple[float, float]) -> tuple[float, float]:
    if not (c_f > 0 and c_g > 0):
        raise ValueError("the non-squared CV form requires c_f, c_g > 0; integrate the squared form")
    return d2[0] / (2 * c_f), d2[1] / (2 * c_g)


def cv_rhs_p12(p: ModelParams, m_f: float, m_g: float, c_f: float, c_g: float) -> tuple[float, float]:
    """CV derivatives, both exponents 1/2 (needs ``c > 0``)."""
    return _from_squared(c_f, c_g, cv2_rhs_p12(p, m_f, m_g, c_f**2, c_g**2))


def cv_rhs_mixed(p: ModelParams, m_f: float, m_g: float, c_f: float, c_g: float) -> tuple[float, float]:
    """CV derivatives, loans at exponent 1 (needs ``c > 0``)."""
    return _from_squared(c_f, c_g, cv2_rhs_mixed(p, m_f, m_g, c_f**2, c_g**2))


def stationary_cv(p: ModelParams, m_f: float, m_g: float, risk_g: Risk | None = None) -> tuple[float, float]:
    """CVs that balance the squared-CV equations at frozen means.

    These coincide with the CVs of the quasi-equilibrium densities.
    """
    risk_g = p.risk_g if risk_g is None else risk_g
    cf = math.sqrt(p.sigma_f * m_g / (2 * p.alpha * (p.chi + 1) * m_f))
    if risk_g is Risk.HALF:
        cg = math.sqrt(p.sigma_g * m_f / (2 * p.nu * (p.theta + 1) * m_g))
    else:
        cg = math.sqrt(p.sigma_g * m_f / (2 * p.nu * (p.theta + 1) + p.sigma_g * m_f))
    return cf, cg


# ---------------------------------------------------------------------------
# integration drivers


def _require_half_deposits(p: ModelParams) -> None:
    if p.risk_f is not Risk.HALF:
        raise ValueError("closed moment systems exist only for deposits at risk exponent 1/2")


def _times(cfg: OdeSolverConfig, t_out: Sequence[float] | None) -> np.ndarray:
    if t_out is None:
        return cfg.output_times()
    t = np.asarray(t_out, float)
    if t[0] != 0.0:
        t = np.concatenate([[0.0], t])
    return t


def _lv_vec(p: ModelParams) -> Callable[[float, np.ndarray], np.ndarray]:
    a, b, g, d = p.alpha, p.beta, p.gamma, p.delta

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        mf, mg = y[0], y[1]
        return np.array([a * mf - b * mf * mg, -d * mg + g * mf * mg])

    return rhs


def integrate_means(
    p: ModelParams,
    ic: InitialConditions,
    cfg: OdeSolverConfig = OdeSolverConfig(),
    t_out: Sequence[float] | None = None,
) -> Trajectory:
    """Integrate the mean dynamics; noise parameters play no role."""
    t = _times(cfg, t_out)
    sol = solve(_lv_vec(p), [ic.m_f0, ic.m_g0], t, cfg.solver(), positive=[True, True])
    return Trajectory(t, sol.y[:, 0].copy(), sol.y[:, 1].copy(), mode="means", dense=sol)


def _mode(p: ModelParams) -> str:
    return "half-half" if p.risk_g is Risk.HALF else "half-one"


def integrate_moments(
    p: ModelParams,
    ic: InitialConditions,
    cfg: OdeSolverConfig = OdeSolverConfig(),
    t_out: Sequence[float] | None = None,
    *,
    sigma_override: bool = False,
) -> Trajectory:
    """Integrate means together with the variance equations.

    The loans equation follows ``p.risk_g``.
    """
    _require_half_deposits(p)
    lv = _lv_vec(p)
    a, b, chi, g, mu, nu, th = p.alpha, p.beta, p.chi, p.gamma, p.mu, p.nu, p.theta
    sf, sg = p.sigma_f, p.sigma_g
    if p.risk_g is Risk.HALF:

        def rhs(t: float, y: np.ndarray) -> np.ndarray:
            mf, mg, vf, vg = y
            dm = lv(t, y)
            return np.array([
                dm[0],
                dm[1],
                -2 * (b * mg + a * chi) * vf + sf * mf * mg,
                -2 * (g * (mu - mf) + nu * th) * vg + sg * mf * mg,
            ])
    else:
        s = _mixed_sigma(p, sigma_override)

        def rhs(t: float, y: np.ndarray) -> np.ndarray:
            mf, mg, vf, vg = y
            dm = lv(t, y)
            return np.array([
                dm[0],
                dm[1],
                -2 * (b * mg + a * chi) * vf + sf * mf * mg,
                -2 * (g * (mu - (1 - s / (2 * g)) * mf) + nu * th) * vg + sg * mf * mg**2,
            ])

    t = _times(cfg, t_out)
    y0 = [ic.m_f0, ic.m_g0, (ic.c_f0 * ic.m_f0) ** 2, (ic.c_g0 * ic.m_g0) ** 2]
    sol = solve(rhs, y0, t, cfg.solver(), positive=[True, True, False, False], nonnegative=[False, False, True, True])
    mf, mg, vf, vg = (sol.y[:, k].copy() for k in range(4))
    return Trajectory(t, mf, mg, vf, vg, np.sqrt(vf) / mf, np.sqrt(vg) / mg, _mode(p), sol)


def integrate_cv(
    p: ModelParams,
    ic: InitialConditions,
    cfg: OdeSolverConfig = OdeSolverConfig(),
    t_out: Sequence[float] | None = None,
) -> Trajectory:
    """Integrate means together with the squared-CV equations."""
    _require_half_deposits(p)
    lv = _lv_vec(p)
    kf = 2 * p.alpha * (p.chi + 1)
    kg = 2 * p.nu * (p.theta + 1)
    sf, sg = p.sigma_f, p.sigma_g
    if p.risk_g is Risk.HALF:

        def rhs(t: float, y: np.ndarray) -> np.ndarray:
            mf, mg, cf2, cg2 = y
            dm = lv(t, y)
            return np.array([dm[0], dm[1], -kf * cf2 + sf * mg / mf, -kg * cg2 + sg * mf / mg])
    else:

        def rhs(t: float, y: np.ndarray) -> np.ndarray:
            mf, mg, cf2, cg2 = y
            dm = lv(t, y)
            return np.array([dm[0], dm[1], -kf * cf2 + sf * mg / mf, -(kg + sg * mf) * cg2 + sg * mf])

    t = _times(cfg, t_out)
    y0 = [ic.m_f0, ic.m_g0, ic.c_f0**2, ic.c_g0**2]
    sol = solve(rhs, y0, t, cfg.solver(), positive=[True, True, False, False], nonnegative=[False, False, True, True])
    mf, mg, cf2, cg2 = (sol.y[:, k].copy() for k in range(4))
    cf, cg = np.sqrt(cf2), np.sqrt(cg2)
    return Trajectory(t, mf, mg, cf2 * mf**2, cg2 * mg**2, cf, cg, _mode(p), sol)


# ---------------------------------------------------------------------------
# closed-form CV via quadrature


MeanSource = Trajectory | Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


def _mean_fn(means: MeanSource) -> tuple[Callable, tuple[float, float]]:
    if isinstance(means, Trajectory):
        return means.means_at, means.t_span
    return means, (-math.inf, math.inf)


def _simpson_adaptive(fn: Callable[[np.ndarray], np.ndarray], a: float, b: float, rtol: float) -> np.ndarray:
    """Composite Simpson for a vector-valued integrand, panels doubled until converged."""
    n = 4
    prev = None
    while True:
        x = np.linspace(a, b, 2 * n + 1)
        w = np.ones(2 * n + 1)
        w[1:-1:2] = 4
        w[2:-1:2] = 2
        val = (b - a) / (6 * n) * (w @ fn(x))
        if prev is not None:
            scale = np.maximum(np.abs(val), 1e-300)
            if np.all(np.abs(val - prev) <= rtol * scale) or n >= 1 << 16:
                return val
        prev = val
        n *= 2


def cv_closed_form_p12(
    p: ModelParams,
    means: MeanSource,
    c_f0: float,
    c_g0: float,
    t: float | Sequence[float],
    *,
    rtol: float = 1e-9,
) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the explicit exponential-plus-quadrature CV solution.

    ``c^2(t) = c^2(0) e^{-2kt} + sigma * int_0^t r(s) e^{-2k(t-s)} ds`` with
    ``r`` the relevant mean ratio. The integral is accumulated interval by
    interval over the sorted requested times.
    """
    fn, (lo, hi) = _mean_fn(means)
    ts = np.atleast_1d(np.asarray(t, float))
    if ts.size == 0:
        return np.array([]), np.array([])
    if np.any(ts < 0) or np.any(ts > hi * (1 + 1e-14)) or lo > 0:
        raise ValueError(f"mean series covers [{lo}, {hi}] but times up to {ts.max()} were requested")
    kf = p.alpha * (p.chi + 1)
    kg = p.nu * (p.theta + 1)
    order = np.argsort(ts, kind="stable")
    out = np.empty((ts.size, 2))
    acc = np.array([c_f0**2, c_g0**2])
    t_prev = 0.0
    for idx in order:
        tk = float(ts[idx])
        if tk > t_prev:
            dt = tk - t_prev

            def integrand(s: np.ndarray, tk: float = tk) -> np.ndarray:
                mf, mg = fn(s)
                return np.column_stack([
                    p.sigma_f * mg / mf * np.exp(-2 * kf * (tk - s)),
                    p.sigma_g * mf / mg * np.exp(-2 * kg * (tk - s)),
                ])

            acc = acc * np.exp([-2 * kf * dt, -2 * kg * dt]) + _simpson_adaptive(integrand, t_prev, tk, rtol)
            t_prev = tk
        out[idx] = acc
    cf, cg = np.sqrt(out[:, 0]), np.sqrt(out[:, 1])
    if np.ndim(t) == 0:
        return cf[0], cg[0]
    return cf, cg


# ---------------------------------------------------------------------------
# long-time band


@dataclass(frozen=True)
class Band:
    lower_f: float
    upper_f: float
    lower_g: float
    upper_g: float
    r: float  # min m_g/m_f over the orbit
    R: float  # max m_g/m_f over the orbit
    period: float | None = None

    def as_tuple(self) -> tuple[float, float, float, float]:
        return self.lower_f, self.upper_f, self.lower_g, self.upper_g

    def scaled(self, factor: float) -> "Band":
        """Band widened by ``factor`` relative on both sides."""
        return Band(
            self.lower_f * (1 - factor),
            self.upper_f * (1 + factor),
            self.lower_g * (1 - factor),
            self.upper_g * (1 + factor),
            self.r,
            self.R,
            self.period,
        )


def _band_from_ratio(p: ModelParams, r: float, R: float, period: float | None) -> Band:
    kf = 2 * p.alpha * (p.chi + 1)
    kg = 2 * p.nu * (p.theta + 1)
    # the loans ratio m_f/m_g is the reciprocal of the deposits one
    return Band(
        math.sqrt(p.sigma_f * r / kf),
        math.sqrt(p.sigma_f * R / kf),
        math.sqrt(p.sigma_g / R / kg),
        math.sqrt(p.sigma_g / r / kg),
        r,
        R,
        period,
    )


def cv_longtime_band(p: ModelParams, means: Trajectory, *, samples_per_unit: int = 400) -> Band:
    """Large-time oscillation band of the CVs from the mean-ratio extrema.

    Periods are delimited by upward crossings of ``m_f`` through its
    fixed-point value. A stationary orbit yields a degenerate band.
    """
    mf, mg = np.asarray(means.m_f), np.asarray(means.m_g)
    ratio = mg / mf
    if np.ptp(ratio) <= 1e-12 * np.max(ratio):
        r = float(ratio[0])
        return _band_from_ratio(p, r, r, None)
    mstar = p.fixed_point[0]
    s = mf - mstar
    up = np.nonzero((s[:-1] < 0) & (s[1:] >= 0))[0]
    if up.size < 2:
        raise ValueError("mean series too short to bracket one full period")
    tc = means.t[up + 1]
    t0, t1 = float(tc[0]), float(tc[-1])
    if means.dense is not None:
        n = max(2000, int((t1 - t0) * samples_per_unit))
        fine = np.linspace(t0, t1, n + 1)
        a, b = means.means_at(fine)
        rr = b / a
    else:
        rr = ratio[up[0] + 1 : up[-1] + 2]
    period = (t1 - t0) / (up.size - 1)
    return _band_from_ratio(p, float(rr.min()), float(rr.max()), period)


# ---------------------------------------------------------------------------
# Bouchaud-Mezard wealth example


def wealth_mean(pw: WealthParams, m_h0: float, t: float | np.ndarray) -> np.ndarray | float:
    """Mean of the wealth density, relaxing exponentially to ``m``."""
    return pw.m + (m_h0 - pw.m) * np.exp(-np.asarray(t, float))


def _wealth_source(pw: WealthParams, ratio: np.ndarray | float, fp_consistent: bool):
    return pw.sigma if fp_consistent else 2 * ratio


def wealth_cv_limit(pw: WealthParams, *, fp_consistent: bool = False) -> float:
    num = pw.sigma if fp_consistent else 2.0
    return math.sqrt(num / (2 - pw.sigma))


def wealth_cv(
    pw: WealthParams,
    m_h0: float,
    c_h0: float,
    t: float | Sequence[float],
    *,
    method: str = "auto",
    fp_consistent: bool = False,
    rtol: float = 1e-12,
) -> np.ndarray | float:
    """CV of the wealth density at time(s) ``t``.

    ``method`` is ``"explicit"`` (only when ``m_h0 == m``), ``"numeric"``, or
    ``"auto"`` which picks the explicit solution when ``|m_h0 - m| <= 1e-13``.
    The default source term ``2 m/m_h`` gives the limit ``sqrt(2/(2-sigma))``;
    ``fp_consistent=True`` uses the source ``sigma`` obtained from the second
    moment of the Fokker-Planck equation, with limit ``sqrt(sigma/(2-sigma))``.
    """
    if not m_h0 > 0 or c_h0 < 0:
        raise ValueError("need m_h0 > 0 and c_h0 >= 0")
    ts = np.atleast_1d(np.asarray(t, float))
    if np.any(ts < 0):
        raise ValueError("times must be >= 0")
    at_m = abs(m_h0 - pw.m) <= 1e-13
    if method == "auto":
        method = "explicit" if at_m else "numeric"
    if method == "explicit":
        if not at_m:
            raise ValueError("the explicit solution requires m_h0 == m")
        lim2 = wealth_cv_limit(pw, fp_consistent=fp_consistent) ** 2
        out = np.sqrt(lim2 + (c_h0**2 - lim2) * np.exp(-(2 - pw.sigma) * ts))
    elif method == "numeric":
        sig = pw.sigma

        def rhs(s: float, y: np.ndarray) -> np.ndarray:
            ratio = pw.m / (pw.m + (m_h0 - pw.m) * math.exp(-s))
            return np.array([-(2 * ratio - sig) * y[0] + _wealth_source(pw, ratio, fp_consistent)])

        order = np.argsort(ts, kind="stable")
        grid = np.concatenate([[0.0], ts[order]])
        sol = solve(rhs, [c_h0**2], grid, SolverConfig("dp45", rtol, rtol * 1e-2), nonnegative=[True])
        out = np.empty(ts.size)
        out[order] = np.sqrt(sol.y[1:, 0])
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(out[0]) if np.ndim(t) == 0 else out


def wealth_states(
    pw: WealthParams, m_h0: float, c_h0: float, times: Sequence[float], **kw
) -> list[WealthState]:
    cs = np.atleast_1d(wealth_cv(pw, m_h0, c_h0, list(times), **kw))
    ms = np.atleast_1d(wealth_mean(pw, m_h0, np.asarray(times, float)))
    return [WealthState(float(t), float(m), float(c), pw) for t, m, c in zip(times, ms, cs)]
