"""Numeric kernels: complementary error function, its bisection inverse and
the Monte-Carlo exceedance counter.

Each kernel has a scalar-loop body that numba compiles (see ``_jit``) and a
pure-numpy twin used when JIT is disabled. ``backend()`` reports which one the
public names are bound to.
"""

from __future__ import annotations

import math

import numpy as np

from . import _jit

_SQRT_PI = math.sqrt(math.pi)
_TWO_OVER_SQRT_PI = 2.0 / _SQRT_PI

# Below this argument the positive-term series is used, above it the
# continued fraction. Both are accurate to a few ulp in their ranges.
_SERIES_CUTOFF = 2.0
_EPS = 2.220446049250313e-16


def _erfc_scalar(x):
    if x < 0.0:
        return 2.0 - _erfc_nonneg(-x)
    return _erfc_nonneg(x)


def _erfc_nonneg(x):
    if x < _SERIES_CUTOFF:
        # erf(x) = 2/sqrt(pi) * exp(-x^2) * sum_n (2x^2)^n x / (2n+1)!!
        # every term is positive, so no cancellation inside the sum
        x2 = 2.0 * x * x
        term = x
        total = x
        n = 0
        while True:
            n += 1
            term *= x2 / (2.0 * n + 1.0)
            total += term
            if term <= total * _EPS * 0.25:
                break
        return 1.0 - _TWO_OVER_SQRT_PI * math.exp(-x * x) * total
    if x > 26.6:
        return 0.0
    # erfc(x) = exp(-x^2)/sqrt(pi) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    # evaluated with the modified Lentz recurrence
    tiny = 1e-300
    f = x
    c = f
    d = 0.0
    n = 0
    while n < 500:
        n += 1
        a = 0.5 * n
        d = x + a * d
        if d == 0.0:
            d = tiny
        d = 1.0 / d
        c = x + a / c
        if c == 0.0:
            c = tiny
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x * x) / (_SQRT_PI * f)


def _erfc_inv_bisect(p, rel_tol):
    # erfc is strictly decreasing, so bracket [lo, hi] with erfc(lo) >= p > erfc(hi)
    lo = 0.0
    hi = 1.0
    while _erfc_scalar(hi) > p:
        lo = hi
        hi *= 2.0
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _erfc_scalar(mid) > p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rel_tol * hi:
            break
    return 0.5 * (lo + hi)


def _erfc_array_loop(xs):
    out = np.empty(xs.shape[0])
    for i in range(xs.shape[0]):
        out[i] = _erfc_scalar(xs[i])
    return out


def _exceedance_count_loop(eps_o, eps_s, t, eps_max):
    count = 0
    for i in range(eps_o.shape[0]):
        if abs(eps_o[i] + eps_s[i] * t) > eps_max:
            count += 1
    return count


def _exceedance_count_numpy(eps_o, eps_s, t, eps_max):
    return int(np.count_nonzero(np.abs(eps_o + eps_s * t) > eps_max))


def _erfc_array_numpy(xs):
    return np.fromiter((_erfc_scalar(float(x)) for x in xs), dtype=float, count=len(xs))


if _jit.USE_NUMBA:
    # rebinding the module globals makes the dependent kernels resolve the
    # compiled versions when they are themselves compiled on first call
    _erfc_nonneg = _jit.njit(_erfc_nonneg)
    _erfc_scalar = _jit.njit(_erfc_scalar)
    erfc = _erfc_scalar
    erfc_inv = _jit.njit(_erfc_inv_bisect)
    erfc_array = _jit.njit(_erfc_array_loop)
    exceedance_count = _jit.njit(_exceedance_count_loop)
else:
    erfc = _erfc_scalar
    erfc_inv = _erfc_inv_bisect
    erfc_array = _erfc_array_numpy
    exceedance_count = _exceedance_count_numpy


def backend() -> str:
    return "numba" if _jit.USE_NUMBA else "numpy"
