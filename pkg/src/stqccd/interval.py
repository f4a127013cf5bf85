"""Outward-rounded double-precision interval primitives for numba kernels.

Every rounded result ``r`` is widened to ``r -/+ (|r| * 2**-52 + 2**-600)``.
That offset is at least one ulp of ``r`` (subnormals included), and
rounding to nearest is monotone, so the widened bounds enclose the exact
result of the operation without touching the FPU rounding mode. Inputs are
assumed far from overflow (|x| < 1e150 keeps every product finite).
"""

from numba import njit

EPS = 2.0 ** -52
# Absolute floor of every pad. Far above the subnormal range so that products
# of padded zeros with parameters never go subnormal (a large slowdown on x86).
ETA = 2.0 ** -600


@njit(cache=True, nogil=True, inline="always")
def _pad(r):
    return abs(r) * EPS + ETA


@njit(cache=True, nogil=True, inline="always")
def down(r):
    return r - _pad(r)


@njit(cache=True, nogil=True, inline="always")
def up(r):
    return r + _pad(r)


@njit(cache=True, nogil=True, inline="always")
def add_bounds(a, b):
    """(lo, hi) enclosing the exact a + b."""
    s = a + b
    e = _pad(s)
    return s - e, s + e


@njit(cache=True, nogil=True, inline="always")
def mul_bounds(a, b):
    """(lo, hi) enclosing the exact a * b."""
    p = a * b
    e = _pad(p)
    return p - e, p + e


@njit(cache=True, nogil=True, inline="always")
def iadd(alo, ahi, blo, bhi):
    return down(alo + blo), up(ahi + bhi)


@njit(cache=True, nogil=True, inline="always")
def isub(alo, ahi, blo, bhi):
    return down(alo - bhi), up(ahi - blo)


@njit(cache=True, nogil=True, inline="always")
def smul(s, lo, hi):
    """Scalar ``s`` (exact) times interval [lo, hi]."""
    if s == 0.0:
        return 0.0, 0.0
    if s == 1.0:
        return lo, hi
    if s > 0.0:
        return down(s * lo), up(s * hi)
    return down(s * hi), up(s * lo)


@njit(cache=True, nogil=True)
def lerp(x0, x1, t):
    """Interval enclosing x0 + t * (x1 - x0) for an exact t >= 0."""
    dlo, dhi = add_bounds(x1, -x0)
    mlo, mhi = smul(t, dlo, dhi)
    return down(x0 + mlo), up(x0 + mhi)
