"""Hartigan-Hartigan dip statistic and bootstrap p-values.

The dip of a sample is the smallest sup-distance between its empirical
CDF and any unimodal CDF, computed with the greatest-convex-minorant /
least-concave-majorant sweep (Hartigan & Hartigan 1985, AS 217).  For a
sample of n distinct points the statistic lies in [1/(2n), 1/4].

P-values use Hartigan's calibration: the fraction of dips of B
uniform(0,1) samples of size n that reach the observed value.  Null
tables are deterministic given (n, B, seed) and cached, since the null
distribution depends on the sample size only.
"""

from __future__ import annotations

import threading
from collections import OrderedDict

import numpy as np


class DipError(ValueError):
    """Invalid input to the dip computation."""


def dip_statistic(samples) -> float:
    """Dip statistic of an ascending-sorted sample (n >= 4).

    Ties are allowed; a fully degenerate sample (all values equal) has
    dip 0 by convention.
    """
    x = [float(v) for v in samples]
    n = len(x)
    if n < 4:
        raise DipError(f"dip needs at least 4 samples, got {n}")
    for k in range(1, n):
        if x[k] < x[k - 1]:
            raise DipError("samples must be sorted ascending")
    return _dip_sorted(x)


def _dip_sorted(x: list[float]) -> float:
    """AS 217 sweep on a sorted list.  Internally distances are kept in
    units of 2n; the floor of 1 in those units gives the 1/(2n) bound."""
    n = len(x)
    low, high = 0, n - 1
    dip = 1.0
    if x[high] == x[low]:
        return 0.0

    # mn[j]: previous change point of the greatest convex minorant at j
    mn = [0] * n
    for j in range(1, n):
        mn[j] = j - 1
        while True:
            mnj = mn[j]
            mnmnj = mn[mnj]
            if mnj == 0 or (x[j] - x[mnj]) * (mnj - mnmnj) < (x[mnj] - x[mnmnj]) * (
                j - mnj
            ):
                break
            mn[j] = mnmnj

    # mj[k]: next change point of the least concave majorant at k
    mj = [0] * n
    mj[n - 1] = n - 1
    for k in range(n - 2, -1, -1):
        mj[k] = k + 1
        while True:
            mjk = mj[k]
            mjmjk = mj[mjk]
            if mjk == n - 1 or (x[k] - x[mjk]) * (mjk - mjmjk) < (x[mjk] - x[mjmjk]) * (
                k - mjk
            ):
                break
            mj[k] = mjmjk

    gcm = [0] * (n + 1)
    lcm = [0] * (n + 1)
    while True:
        # change points of the GCM from high down to low
        gcm[0] = high
        i = 0
        while gcm[i] > low:
            gcm[i + 1] = mn[gcm[i]]
            i += 1
        ig = l_gcm = i
        ix = ig - 1

        # change points of the LCM from low up to high
        lcm[0] = low
        i = 0
        while lcm[i] < high:
            lcm[i + 1] = mj[lcm[i]]
            i += 1
        ih = l_lcm = i
        iv = 1

        # largest distance between the GCM and the LCM on [low, high]
        if l_gcm != 1 or l_lcm != 1:
            d = 0.0
            while True:
                gcmix = gcm[ix]
                lcmiv = lcm[iv]
                if gcmix > lcmiv:
                    gcmi1 = gcm[ix + 1]
                    dx = (lcmiv - gcmi1 + 1) - (x[lcmiv] - x[gcmi1]) * (
                        gcmix - gcmi1
                    ) / (x[gcmix] - x[gcmi1])
                    iv += 1
                    if dx >= d:
                        d = dx
                        ig = ix + 1
                        ih = iv - 1
                else:
                    lcmiv1 = lcm[iv - 1]
                    dx = (x[gcmix] - x[lcmiv1]) * (lcmiv - lcmiv1) / (
                        x[lcmiv] - x[lcmiv1]
                    ) - (gcmix - lcmiv1 - 1)
                    ix -= 1
                    if dx >= d:
                        d = dx
                        ig = ix + 1
                        ih = iv
                if ix < 0:
                    ix = 0
                if iv > l_lcm:
                    iv = l_lcm
                if gcm[ix] == lcm[iv]:
                    break
        else:
            d = 1.0
        if d < dip:
            break

        # dip within the GCM segments
        dip_l = 0.0
        for j in range(ig, l_gcm):
            max_t = 1.0
            jb = gcm[j + 1]
            je = gcm[j]
            if je - jb > 1 and x[je] != x[jb]:
                c = (je - jb) / (x[je] - x[jb])
                for jj in range(jb, je + 1):
                    t = (jj - jb + 1) - (x[jj] - x[jb]) * c
                    if max_t < t:
                        max_t = t
            if dip_l < max_t:
                dip_l = max_t

        # dip within the LCM segments
        dip_u = 0.0
        for j in range(ih, l_lcm):
            max_t = 1.0
            jb = lcm[j]
            je = lcm[j + 1]
            if je - jb > 1 and x[je] != x[jb]:
                c = (je - jb) / (x[je] - x[jb])
                for jj in range(jb, je + 1):
                    t = (x[jj] - x[jb]) * c - (jj - jb - 1)
                    if max_t < t:
                        max_t = t
            if dip_u < max_t:
                dip_u = max_t

        dip_new = dip_l if dip_l > dip_u else dip_u
        if dip < dip_new:
            dip = dip_new
        if low == gcm[ig] and high == lcm[ih]:
            break
        low = gcm[ig]
        high = lcm[ih]

    return dip / (2 * n)


_table_lock = threading.Lock()
_table_cache: OrderedDict[tuple[int, int, int], np.ndarray] = OrderedDict()
_TABLE_CACHE_MAX = 32


def null_dip_table(n: int, bootstrap_b: int, seed: int) -> np.ndarray:
    """Sorted dips of ``bootstrap_b`` uniform(0,1) samples of size n.

    Deterministic given the seed; memoized because the null depends on n
    alone and QC reuses it across structures and scans.
    """
    if bootstrap_b < 200:
        raise DipError(f"bootstrap_B must be >= 200, got {bootstrap_b}")
    if n < 4:
        raise DipError(f"null table needs n >= 4, got {n}")
    key = (int(n), int(bootstrap_b), int(seed))
    with _table_lock:
        if key in _table_cache:
            _table_cache.move_to_end(key)
            return _table_cache[key]
    rng = np.random.default_rng(seed)
    draws = np.sort(rng.random((bootstrap_b, n)), axis=1)
    dips = np.fromiter(
        (_dip_sorted(row.tolist()) for row in draws), dtype=float, count=bootstrap_b
    )
    dips.sort()
    dips.setflags(write=False)
    with _table_lock:
        _table_cache[key] = dips
        while len(_table_cache) > _TABLE_CACHE_MAX:
            _table_cache.popitem(last=False)
    return dips


def dip_pvalue(d: float, n: int, bootstrap_b: int = 2000, seed: int = 0) -> float:
    """Bootstrap p-value: fraction of uniform-null dips >= d."""
    table = null_dip_table(n, bootstrap_b, seed)
    # table is sorted ascending; count entries >= d
    idx = np.searchsorted(table, d, side="left")
    return float(table.size - idx) / table.size
