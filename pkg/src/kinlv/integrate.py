"""Explicit Runge-Kutta integrators with positivity-aware step control.

Two methods are provided:

* ``dp45``: Dormand-Prince 5(4) embedded pair with the usual 4th-order
  continuous extension, so the solution can be evaluated anywhere inside the
  integration interval.
* ``rk4``: classical fixed-step RK4. Components that do not depend on
  others are updated with identical floating-point operations regardless of
  the rest of the state, which makes runs bit-reproducible.

A step whose stages or result leave the admissible set (``> 0`` for strictly
positive components, ``>= 0`` for nonnegative ones) is rejected and retried
with half the step size.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

Rhs = Callable[[float, np.ndarray], np.ndarray]


class StepUnderflow(ArithmeticError):
    """Step size fell below ``1e-14 * t_end``."""


@dataclass(frozen=True)
class SolverConfig:
    method: str = "dp45"
    rtol: float = 1e-9
    atol: float = 1e-9
    dt: float = 0.01
    max_steps: int = 10_000_000

    def __post_init__(self) -> None:
        if self.method not in ("dp45", "rk4"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == "rk4" and not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.method == "dp45" and not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be > 0")


# Dormand-Prince 5(4)
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = np.append(_B, 0.0) - _B4
# continuous extension (Shampine), theta polynomial coefficients per stage
_P = np.array(
    [
        [1.0, -2.8535800653862835, 3.0717434641059005, -1.1270175653862835],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 4.023133379230305, -6.249321565289, 2.675424484351598],
        [0.0, -3.7324019615885042, 10.068970589843675, -5.685526961588504],
        [0.0, 2.5548038301849423, -6.399112377351017, 3.5219323679207912],
        [0.0, -1.3744241142186024, 3.272657752246729, -1.7672812570757455],
        [0.0, 1.3824689317781436, -3.764937863556287, 2.382468931778144],
    ]
)


@dataclass
class Solution:
    """Integration result sampled at the requested times, with dense output."""

    t: np.ndarray
    y: np.ndarray  # shape (n_times, n_components)
    n_steps: int = 0
    n_rejected: int = 0
    _segments: list = field(default_factory=list, repr=False)

    @property
    def t_span(self) -> tuple[float, float]:
        return float(self._segments[0][0]), float(self._segments[-1][1])

    def __call__(self, t: float | np.ndarray) -> np.ndarray:
        """Evaluate the continuous solution at ``t`` (scalar or array)."""
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        lo, hi = self.t_span
        if np.any(ts < lo - 1e-12 * max(1.0, abs(hi))) or np.any(ts > hi + 1e-12 * max(1.0, abs(hi))):
            raise ValueError(f"requested time outside [{lo}, {hi}]")
        starts = np.array([s[0] for s in self._segments])
        idx = np.clip(np.searchsorted(starts, ts, side="right") - 1, 0, len(self._segments) - 1)
        out = np.empty((ts.size, self.y.shape[1]))
        for j in np.unique(idx):
            sel = idx == j
            out[sel] = _eval_segment(self._segments[j], ts[sel])
        return out[0] if np.ndim(t) == 0 else out


def _eval_segment(seg, ts: np.ndarray) -> np.ndarray:
    t0, t1, y0, data = seg
    h = t1 - t0
    if h == 0:
        return np.repeat(y0[None, :], ts.size, axis=0)
    theta = (ts - t0) / h
    if data[0] == "dp":
        Q = data[1]  # (n, 4)
        powers = np.cumprod(np.repeat(theta[:, None], 4, axis=1), axis=1)
        return y0[None, :] + h * powers @ Q.T
    # rk4: cubic Hermite from endpoint values and slopes
    _, y1, f0, f1 = data
    th = theta[:, None]
    h00 = 2 * th**3 - 3 * th**2 + 1
    h10 = th**3 - 2 * th**2 + th
    h01 = -2 * th**3 + 3 * th**2
    h11 = th**3 - th**2
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def _admissible(y: np.ndarray, strict: np.ndarray, nonneg: np.ndarray) -> bool:
    if not np.all(np.isfinite(y)):
        return False
    return bool(np.all(y[strict] > 0) and np.all(y[nonneg] >= 0))


def solve(
    rhs: Rhs,
    y0: Sequence[float],
    t_eval: Sequence[float],
    cfg: SolverConfig = SolverConfig(),
    *,
    positive: Sequence[bool] | None = None,
    nonnegative: Sequence[bool] | None = None,
) -> Solution:
    """Integrate ``y' = rhs(t, y)`` from ``t_eval[0]`` to ``t_eval[-1]``.

    ``positive``/``nonnegative`` are per-component masks of the admissible
    set. Raises :class:`StepUnderflow` when positivity or accuracy cannot be
    met with a step above ``1e-14 * t_end``.
    """
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.ndim != 1 or t_eval.size < 1 or np.any(np.diff(t_eval) < 0):
        raise ValueError("t_eval must be a non-decreasing 1-D sequence")
    y = np.array(y0, dtype=float)
    n = y.size
    strict = np.zeros(n, bool) if positive is None else np.asarray(positive, bool)
    nonneg = np.zeros(n, bool) if nonnegative is None else np.asarray(nonnegative, bool)
    if not _admissible(y, strict, nonneg):
        raise ValueError("initial state outside the admissible set")

    t0, t_end = float(t_eval[0]), float(t_eval[-1])
    h_min = 1e-14 * max(abs(t_end), 1e-300)
    out = np.empty((t_eval.size, n))
    sol = Solution(t_eval.copy(), out)
    if t_end == t0:
        out[:] = y
        sol._segments.append((t0, t0, y.copy(), ("rk4", y.copy(), np.zeros(n), np.zeros(n))))
        return sol

    step = _dp_step if cfg.method == "dp45" else _rk4_step
    t = t0
    f = np.asarray(rhs(t, y), dtype=float)
    if cfg.method == "dp45":
        h = _initial_step(rhs, t, y, f, cfg)
    else:
        h = cfg.dt
    next_out = 0
    while next_out < t_eval.size and t_eval[next_out] <= t:
        out[next_out] = y
        next_out += 1

    while t < t_end:
        if sol.n_steps > cfg.max_steps:
            raise StepUnderflow("maximum number of steps exceeded")
        if cfg.method == "rk4":
            # fixed grid t0 + k*dt; shorten only to land on t_end
            k = round((t - t0) / cfg.dt)
            target = min(t0 + (k + 1) * cfg.dt, t_end)
            if target <= t:
                target = min(t + cfg.dt, t_end)
            h_try = target - t
            t_new, y_new, f_new, seg = _rk4_substeps(rhs, t, y, f, h_try, strict, nonneg, h_min, sol)
        else:
            h_try = min(h, t_end - t)
            if t + h_try * 1.0000001 >= t_end:
                h_try = t_end - t
            accepted = False
            while not accepted:
                if h_try < h_min:
                    raise StepUnderflow(f"step size {h_try:.3e} below {h_min:.3e} at t={t:.6g}")
                y_new, f_new, err, seg_data, ok = step(rhs, t, y, f, h_try, strict, nonneg)
                if not ok:
                    sol.n_rejected += 1
                    h_try *= 0.5
                    continue
                scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
                err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))
                if err_norm <= 1.0:
                    accepted = True
                    fac = 5.0 if err_norm == 0 else min(5.0, max(0.2, 0.9 * err_norm**-0.2))
                    t_new = t + h_try if t + h_try < t_end else t_end
                    seg = (t, t_new, y.copy(), seg_data)
                    h = h_try * fac
                else:
                    sol.n_rejected += 1
                    h_try *= max(0.2, 0.9 * err_norm**-0.2)
        sol._segments.append(seg)
        sol.n_steps += 1
        while next_out < t_eval.size and t_eval[next_out] <= t_new:
            tq = t_eval[next_out]
            out[next_out] = y_new if tq == t_new else _eval_segment(seg, np.array([tq]))[0]
            next_out += 1
        t, y, f = t_new, y_new, f_new
    return sol


def _initial_step(rhs: Rhs, t, y, f, cfg: SolverConfig) -> float:
    scale = cfg.atol + cfg.rtol * np.abs(y)
    d0 = np.sqrt(np.mean((y / scale) ** 2))
    d1 = np.sqrt(np.mean((f / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y + h0 * f
    f1 = np.asarray(rhs(t + h0, y1), dtype=float)
    d2 = np.sqrt(np.mean(((f1 - f) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1)


def _dp_step(rhs: Rhs, t, y, f, h, strict, nonneg):
    K = np.empty((7, y.size))
    K[0] = f
    for s in range(1, 6):
        ys = y + h * (np.asarray(_A[s]) @ K[:s])
        if not _admissible(ys, strict, nonneg):
            return None, None, None, None, False
        K[s] = rhs(t + _C[s] * h, ys)
    y_new = y + h * (_B @ K[:6])
    if not _admissible(y_new, strict, nonneg):
        return None, None, None, None, False
    f_new = np.asarray(rhs(t + h, y_new), dtype=float)
    K[6] = f_new
    err = h * (_E @ K)
    Q = K.T @ _P
    return y_new, f_new, err, ("dp", Q), True


def _rk4_step(rhs: Rhs, t, y, f, h, strict, nonneg):
    k1 = f
    y2 = y + (h / 2) * k1
    if not _admissible(y2, strict, nonneg):
        return None, False
    k2 = np.asarray(rhs(t + h / 2, y2), dtype=float)
    y3 = y + (h / 2) * k2
    if not _admissible(y3, strict, nonneg):
        return None, False
    k3 = np.asarray(rhs(t + h / 2, y3), dtype=float)
    y4 = y + h * k3
    if not _admissible(y4, strict, nonneg):
        return None, False
    k4 = np.asarray(rhs(t + h, y4), dtype=float)
    y_new = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    if not _admissible(y_new, strict, nonneg):
        return None, False
    return y_new, True


def _rk4_substeps(rhs, t, y, f, h, strict, nonneg, h_min, sol):
    """Advance by ``h`` with RK4, recursively halving on positivity failure."""
    y_new, ok = _rk4_step(rhs, t, y, f, h, strict, nonneg)
    if ok:
        f_new = np.asarray(rhs(t + h, y_new), dtype=float)
        return t + h, y_new, f_new, (t, t + h, y.copy(), ("rk4", y_new, f, f_new))
    sol.n_rejected += 1
    if h / 2 < h_min:
        raise StepUnderflow(f"step size {h / 2:.3e} below {h_min:.3e} at t={t:.6g}")
    tm, ym, fm, _ = _rk4_substeps(rhs, t, y, f, h / 2, strict, nonneg, h_min, sol)
    t1, y1, f1, _ = _rk4_substeps(rhs, tm, ym, fm, h / 2, strict, nonneg, h_min, sol)
    return t1, y1, f1, (t, t1, y.copy(), ("rk4", y1, f, f1))
