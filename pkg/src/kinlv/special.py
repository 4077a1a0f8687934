"""Gamma function via the Lanczos approximation (g = 7, 9 terms).

Relative error is below ``1e-13`` on the positive axis for the arguments that
appear in the closed-form inequality formulas; the reflection formula covers
``x < 1/2``.
"""

from __future__ import annotations

import math

_G = 7.0
_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _series(z: float) -> float:
    # z is the shifted argument x - 1
    a = _COEF[0]
    for k in range(1, 9):
        a += _COEF[k] / (z + k)
    return a


def gamma(x: float) -> float:
    """Gamma function for real ``x`` not a nonpositive integer."""
    x = float(x)
    if x <= 0 and x == math.floor(x):
        raise ValueError(f"gamma has a pole at {x}")
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * gamma(1.0 - x))
    z = x - 1.0
    t = z + _G + 0.5
    if x > 140:
        # avoid overflow of t**(z+0.5) on its own
        return math.exp(lgamma(x))
    return math.sqrt(2.0 * math.pi) * t ** (z + 0.5) * math.exp(-t) * _series(z)


def lgamma(x: float) -> float:
    """``log|Gamma(x)|``."""
    x = float(x)
    if x <= 0 and x == math.floor(x):
        raise ValueError(f"gamma has a pole at {x}")
    if x < 0.5:
        return math.log(math.pi / abs(math.sin(math.pi * x))) - lgamma(1.0 - x)
    z = x - 1.0
    t = z + _G + 0.5
    return _LOG_SQRT_2PI + (z + 0.5) * math.log(t) - t + math.log(_series(z))


def gamma_ratio(a: float, b: float) -> float:
    """``Gamma(a) / Gamma(b)`` computed in log space."""
    return math.exp(lgamma(a) - lgamma(b))
