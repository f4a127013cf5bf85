"""Exact univariate polynomials over the rationals (coefficients low -> high).

Only what root isolation of low-degree polynomials on [0, 1] needs: Euclidean
gcd, Sturm sequences, exact sign evaluation and interval range bounds.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Sequence

Poly = list  # int or Fraction coefficients, lowest degree first, no trailing zeros


def trim(p: Sequence) -> Poly:
    p = list(p)
    while p and p[-1] == 0:
        p.pop()
    return p


def degree(p: Poly) -> int:
    return len(p) - 1  # -1 for the zero polynomial


def add(p: Poly, q: Poly) -> Poly:
    n = max(len(p), len(q))
    return trim([(p[i] if i < len(p) else 0) + (q[i] if i < len(q) else 0) for i in range(n)])


def sub(p: Poly, q: Poly) -> Poly:
    return add(p, [-c for c in q])


def mul(p: Poly, q: Poly) -> Poly:
    if not p or not q:
        return []
    out = [0] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a:
            for j, b in enumerate(q):
                out[i + j] += a * b
    return trim(out)


def deriv(p: Poly) -> Poly:
    return trim([i * p[i] for i in range(1, len(p))])


def divmod_(p: Poly, q: Poly) -> tuple[Poly, Poly]:
    if not q:
        raise ZeroDivisionError("polynomial division by zero")
    r = list(p)
    quo = [Fraction(0)] * max(0, len(p) - len(q) + 1)
    lead = Fraction(q[-1])
    while len(r) >= len(q) and r:
        c = r[-1] / lead
        shift = len(r) - len(q)
        quo[shift] = c
        for i, b in enumerate(q):
            r[shift + i] -= c * b
        r = trim(r)
    return trim(quo), r


def monic(p: Poly) -> Poly:
    return [Fraction(c) / p[-1] for c in p] if p else []


def gcd(p: Poly, q: Poly) -> Poly:
    p, q = trim(p), trim(q)
    while q:
        p, q = q, divmod_(p, q)[1]
    return monic(p)


def square_free(p: Poly) -> Poly:
    """p divided by gcd(p, p'): same roots, all simple."""
    g = gcd(p, deriv(p))
    if degree(g) <= 0:
        return monic(p)
    return monic(divmod_(p, g)[0])


def evaluate(p: Poly, x: Fraction) -> Fraction:
    acc = Fraction(0)
    for c in reversed(p):
        acc = acc * x + c
    return acc


def sign(x) -> int:
    return (x > 0) - (x < 0)


def sturm_sequence(p: Poly) -> list[Poly]:
    seq = [p, deriv(p)]
    while seq[-1]:
        r = divmod_(seq[-2], seq[-1])[1]
        if not r:
            break
        seq.append([-c for c in r])
    return [s for s in seq if s]


def variations(seq: list[Poly], x: Fraction) -> int:
    signs = [sign(evaluate(s, x)) for s in seq]
    signs = [s for s in signs if s]
    return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


def count_roots(seq: list[Poly], a: Fraction, b: Fraction) -> int:
    """Distinct real roots in the half-open interval (a, b]."""
    return variations(seq, a) - variations(seq, b)


def taylor_coefficients(p: Poly, x: Fraction) -> list[Fraction]:
    """Coefficients of p(x + h) as a polynomial in h."""
    coeffs = list(p)
    out = []
    n = len(coeffs)
    for _ in range(n):
        # synthetic division by (h - x) repeatedly
        acc = Fraction(0)
        rem = []
        for c in reversed(coeffs):
            acc = acc * x + c
            rem.append(acc)
        out.append(rem[-1])
        coeffs = list(reversed(rem[:-1]))
    return out


def range_bound(p: Poly, lo: Fraction, hi: Fraction) -> tuple[Fraction, Fraction]:
    """Exact enclosure of {p(t) : lo <= t <= hi} via the Taylor form at ``lo``."""
    if not p:
        return Fraction(0), Fraction(0)
    tc = taylor_coefficients(p, lo)
    w = hi - lo
    low = high = tc[0]
    wp = Fraction(1)
    for c in tc[1:]:
        wp *= w
        term = c * wp
        if term < 0:
            low += term
        else:
            high += term
    return low, high


def integer_form(p: Poly) -> list[int]:
    """Integer coefficients of a positive multiple of ``p`` (same signs and roots)."""
    den = 1
    for c in p:
        den = den * c.denominator // math.gcd(den, c.denominator)
    return [int(c * den) for c in p]


def sign_at_dyadic(ip: Sequence[int], m: int, k: int) -> int:
    """Sign of the integer polynomial ``ip`` at m / 2**k, in exact integer arithmetic."""
    if not ip:
        return 0
    n = len(ip) - 1
    acc = ip[n]
    for i in range(n - 1, -1, -1):
        acc = acc * m + (ip[i] << (k * (n - i)))
    return (acc > 0) - (acc < 0)


def bernstein_signs(ip: Sequence[int]) -> set[int]:
    """Signs of the Bernstein coefficients of an integer polynomial on [0, 1].

    All coefficients sharing one strict sign proves the polynomial has no
    root in [0, 1] (the graph lies in their convex hull).
    """
    n = len(ip) - 1
    binom = [math.comb(n, i) for i in range(n + 1)]
    lcm = 1
    for b in binom:
        lcm = lcm * b // math.gcd(lcm, b)
    out = set()
    for k in range(n + 1):
        s = sum(math.comb(k, i) * (lcm // binom[i]) * ip[i] for i in range(k + 1))
        out.add((s > 0) - (s < 0))
    return out


def range_sign_dyadic(ip: Sequence[int], ma: int, mb: int, k: int) -> int:
    """Sign of the integer polynomial ``ip`` certified over [ma, mb] / 2**k, else 0.

    Substitutes x = (ma + h) / 2**k and bounds the integer Taylor form in
    h over [0, mb - ma].
    """
    n = len(ip) - 1
    if n < 0:
        return 0
    # Q(y) = 2**(k n) p(y / 2**k), shifted to y = ma + h by repeated synthetic division
    coeffs = [ip[i] << (k * (n - i)) for i in range(n + 1)]
    taylor = []
    for _ in range(n + 1):
        acc = 0
        rem = []
        for c in reversed(coeffs):
            acc = acc * ma + c
            rem.append(acc)
        taylor.append(rem[-1])
        coeffs = rem[-2::-1]
    w = mb - ma
    low = high = taylor[0]
    wp = 1
    for c in taylor[1:]:
        wp *= w
        if c < 0:
            low += c * wp
        else:
            high += c * wp
    if low > 0:
        return 1
    if high < 0:
        return -1
    return 0
