"""Boys function F_m(x) = int_0^1 t^{2m} exp(-x t^2) dt."""

from __future__ import annotations

import math

import numba
import numpy as np

SERIES_LIMIT = 35.0


@numba.njit(cache=True, nogil=True)
def boys_into(mmax, x, out):
    """Fill ``out[0..mmax]`` with F_m(x).

    Below SERIES_LIMIT the top order comes from the (all-positive) power
    series and lower orders from downward recursion; above it, F_0 from its
    large-x limit and upward recursion, which is stable there.
    """
    ex = math.exp(-x)
    if x < SERIES_LIMIT:
        denom = 2.0 * mmax + 1.0
        term = 1.0 / denom
        total = term
        k = 0
        while True:
            k += 1
            denom += 2.0
            term *= 2.0 * x / denom
            total += term
            if term < 1e-17 * total:
                break
        out[mmax] = ex * total
        for m in range(mmax - 1, -1, -1):
            out[m] = (2.0 * x * out[m + 1] + ex) / (2.0 * m + 1.0)
    else:
        out[0] = 0.5 * math.sqrt(math.pi / x)
        for m in range(mmax):
            out[m + 1] = ((2.0 * m + 1.0) * out[m] - ex) / (2.0 * x)


def boys(m: int, x: float) -> float:
    out = np.empty(m + 1)
    boys_into(m, float(x), out)
    return float(out[m])


def boys_array(mmax: int, x: float) -> np.ndarray:
    out = np.empty(mmax + 1)
    boys_into(mmax, float(x), out)
    return out


# Taylor table for the integral kernels: F_m on a uniform grid below
# SERIES_LIMIT, every grid value from the series above. Seven terms with
# |dx| <= STEP/2 keep the truncation error below 1e-14.
STEP = 0.05
TAYLOR_TERMS = 7
TABLE_MMAX = 8


def _build_table() -> np.ndarray:
    n_grid = int(round(SERIES_LIMIT / STEP)) + 1
    top = TABLE_MMAX + TAYLOR_TERMS
    table = np.empty((n_grid, top + 1))
    for k in range(n_grid):
        boys_into(top, k * STEP, table[k])
    return table


BOYS_TABLE = _build_table()
_INV_FACT = np.array([1.0 / math.factorial(j) for j in range(TAYLOR_TERMS)])


@numba.njit(cache=True, nogil=True)
def boys_fast_into(mmax, x, out, table):
    """As ``boys_into`` but the top order comes from the Taylor table."""
    if x >= SERIES_LIMIT - STEP:
        boys_into(mmax, x, out)
        return
    k = int(x / STEP + 0.5)
    dx = k * STEP - x
    acc = 0.0
    pw = 1.0
    for j in range(TAYLOR_TERMS):
        acc += table[k, mmax + j] * pw * _INV_FACT[j]
        pw *= dx
    out[mmax] = acc
    ex = math.exp(-x)
    for m in range(mmax - 1, -1, -1):
        out[m] = (2.0 * x * out[m + 1] + ex) / (2.0 * m + 1.0)
