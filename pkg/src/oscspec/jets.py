"""Truncated-Taylor ("jet") arithmetic on arrays.

A jet of depth D at a batch of points is an array of shape (D+1, n) whose
row k holds f^(k)(x)/k! is NOT the convention here: row k holds the plain
derivative f^(k)(x). Plain-derivative rows keep Leibniz products explicit
and make the rows directly usable as function values.

Everything operates on numpy arrays; depth is small (<= ~10) so the O(D^2)
convolutions are negligible.
"""

from __future__ import annotations

import numpy as np
from math import comb, factorial

__all__ = [
    "jet_const",
    "jet_var",
    "jet_mul",
    "jet_exp",
    "jet_reciprocal",
    "jet_compose_affine",
]


def jet_const(value, depth, npts):
    """Jet of a constant: row 0 = value, higher rows zero."""
    out = np.zeros((depth + 1, npts))
    out[0] = value
    return out


def jet_var(x, depth):
    """Jet of the identity function evaluated at points x."""
    x = np.asarray(x, dtype=float)
    out = np.zeros((depth + 1, x.size))
    out[0] = x
    if depth >= 1:
        out[1] = 1.0
    return out


def jet_mul(a, b):
    """Leibniz product of two jets of equal shape."""
    depth = a.shape[0] - 1
    out = np.zeros_like(a)
    for k in range(depth + 1):
        acc = out[k]
        for j in range(k + 1):
            acc += comb(k, j) * a[j] * b[k - j]
    return out


def _to_series(a):
    # plain derivatives -> Taylor coefficients a_k = f^(k)/k!
    depth = a.shape[0] - 1
    fac = np.array([factorial(k) for k in range(depth + 1)], dtype=float)
    return a / fac[:, None], fac


def jet_exp(a):
    """exp of a jet, via the standard Taylor-coefficient recurrence."""
    s, fac = _to_series(a)
    depth = a.shape[0] - 1
    e = np.zeros_like(a)
    e[0] = np.exp(s[0])
    for k in range(1, depth + 1):
        acc = np.zeros(a.shape[1])
        for j in range(1, k + 1):
            acc += j * s[j] * e[k - j]
        e[k] = acc / k
    return e * fac[:, None]


def jet_reciprocal(a):
    """1/f for a jet with nowhere-zero leading row."""
    s, fac = _to_series(a)
    depth = a.shape[0] - 1
    r = np.zeros_like(a)
    r[0] = 1.0 / s[0]
    for k in range(1, depth + 1):
        acc = np.zeros(a.shape[1])
        for j in range(1, k + 1):
            acc += s[j] * r[k - j]
        r[k] = -acc / s[0]
    return r * fac[:, None]


def jet_compose_affine(coeff_rows, scale):
    """Rescale a jet under x -> scale*x + shift (chain rule on rows)."""
    depth = coeff_rows.shape[0] - 1
    out = coeff_rows.copy()
    for k in range(depth + 1):
        out[k] *= scale**k
    return out
