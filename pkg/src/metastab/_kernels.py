"""Compiled Euler-Maruyama kernels for a single path.

Coefficients arrive as ``(const, cos_c, sin_c)`` triples; harmonics are
generated by the angle-addition recurrence so each step costs two
trigonometric calls.
"""

import math

import numba
import numpy as np

TWO_PI = 2.0 * math.pi


@numba.njit(cache=True, inline="always")
def _coeffs(x, a0, ac, as_, b0, bc, bs):
    c1 = math.cos(TWO_PI * x)
    s1 = math.sin(TWO_PI * x)
    a = a0
    b = b0
    ck, sk = c1, s1
    n = max(ac.size, bc.size)
    for k in range(n):
        if k < ac.size:
            a += ac[k] * ck + as_[k] * sk
        if k < bc.size:
            b += bc[k] * ck + bs[k] * sk
        ck, sk = ck * c1 - sk * s1, sk * c1 + ck * s1
    return a, b


@numba.njit(cache=True)
def advance(x, Z, dt, eps, rec_at, out, a0, ac, as_, b0, bc, bs):
    """Run ``len(Z)`` steps from ``x``; ``out[j]`` receives the state after
    step ``rec_at[j]`` (0-based within this chunk, -1 to skip)."""
    noise = math.sqrt(2.0 * eps * dt)
    j = 0
    while j < rec_at.size and rec_at[j] < 0:
        j += 1
    for i in range(Z.size):
        a, b = _coeffs(x, a0, ac, as_, b0, bc, bs)
        x = x + b * dt + noise * math.sqrt(a) * Z[i]
        while j < rec_at.size and rec_at[j] == i:
            out[j] = x
            j += 1
    return x


@numba.njit(cache=True)
def advance_until_exit(x, Z, U, dt, eps, l, r, a0, ac, as_, b0, bc, bs):
    """Steps until ``(l, r)`` is left, with a Brownian-bridge crossing test.

    Returns ``(x, steps_taken, side)`` with side +1 (right), -1 (left) or 0
    (still inside after ``len(Z)`` steps).
    """
    noise = math.sqrt(2.0 * eps * dt)
    for i in range(Z.size):
        a, b = _coeffs(x, a0, ac, as_, b0, bc, bs)
        y = x + b * dt + noise * math.sqrt(a) * Z[i]
        if y >= r:
            return y, i + 1, 1
        if y <= l:
            return y, i + 1, -1
        var = 2.0 * eps * a * dt
        if var > 0.0:
            pr = math.exp(-2.0 * (r - x) * (r - y) / var)
            pl = math.exp(-2.0 * (x - l) * (y - l) / var)
            # one uniform decides both boundaries; crossings are disjoint events
            if U[i] < pr:
                return y, i + 1, 1
            if U[i] < pr + pl:
                return y, i + 1, -1
        x = y
    return x, Z.size, 0


def coefficient_arrays(spec):
    """Arrays consumed by the kernels, padded to a common harmonic count."""
    h = spec.harmonics

    def pad(v):
        out = np.zeros(h)
        out[: len(v)] = v
        return out

    return (float(spec.a_const), pad(spec.a_cos), pad(spec.a_sin),
            float(spec.b_const), pad(spec.b_cos), pad(spec.b_sin))
