"""Bounded scalar minimisation by golden-section search."""

import math

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
INV_PHI2 = (3.0 - math.sqrt(5.0)) / 2.0


def golden_section(f, lo: float, hi: float, tol: float = 1e-6):
    """Minimise ``f`` on ``[lo, hi]``; return ``(x, f(x))``.

    The bracket endpoints are scored as well, so a minimum sitting exactly
    on a bound is returned as that bound rather than a point ``tol`` inside.
    """
    if not lo < hi:
        raise ValueError(f"invalid bracket [{lo}, {hi}]")
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    a, b = float(lo), float(hi)
    h = b - a
    c = a + INV_PHI2 * h
    d = a + INV_PHI * h
    fc, fd = f(c), f(d)
    n = max(0, int(math.ceil(math.log(tol / h) / math.log(INV_PHI))))
    for _ in range(n):
        if fc < fd:
            b, d, fd = d, c, fc
            h = INV_PHI * h
            c = a + INV_PHI2 * h
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            h = INV_PHI * h
            d = a + INV_PHI * h
            fd = f(d)
    best_x, best_f = (c, fc) if fc < fd else (d, fd)
    f_lo = f(float(lo))
    if f_lo <= best_f:
        best_x, best_f = float(lo), f_lo
    f_hi = f(float(hi))
    if f_hi < best_f:
        best_x, best_f = float(hi), f_hi
    return best_x, best_f
