"""Independent reference computations used by the tests.

Nothing here imports the package's numerics: the tree is enumerated path by
path (no recombination), implicit steps go through ``scipy.optimize.brentq``
and the VN peak comes from the closed-form one-dimensional maximiser.
"""

import math

import numpy as np
from scipy.optimize import brentq

PROBS = ((+1, 1.0 / 6.0), (0, 2.0 / 3.0), (-1, 1.0 / 6.0))


def brute_force_y0(f, terminal, T, n, theta, w=0.0, level=0):
    """``(Y, Z)`` at the root by nested expectations over all ``3**n`` paths.

    ``f`` and ``terminal`` are scalar functions.  The implicit step solves
    ``y - h f(y, z) = E[Y']`` with brentq on an expanding bracket.
    """
    h = T / n
    d = math.sqrt(3.0 * h)
    if level == n:
        return float(terminal(w)), 0.0
    kids = [(s, p, brute_force_y0(f, terminal, T, n, theta, w + s * d, level + 1)[0])
            for s, p in PROBS]
    ey = sum(p * y for _, p, y in kids)
    z = sum(p * y * (s * d / h) for s, p, y in kids)
    if theta == 0:
        return ey + h * sum(p * f(y, z) for _, p, y in kids), z
    g = lambda y: y - h * f(y, z) - ey  # noqa: E731
    width = max(abs(ey), 1.0)
    while g(ey - width) > 0 or g(ey + width) < 0:
        width *= 2.0
    return brentq(g, ey - width, ey + width, xtol=1e-15, rtol=4 * np.finfo(float).eps), z


def tree_law(T, n):
    """Exact distribution of the terminal node: ``{offset j: probability}``."""
    law = {0: 1.0}
    for _ in range(n):
        nxt = {}
        for j, q in law.items():
            for s, p in PROBS:
                nxt[j + s] = nxt.get(j + s, 0.0) + q * p
        law = nxt
    return law


def implicit_peak_1d(a, b, h):
    """``sup_k |lambda(k)|**2`` for the implicit scheme in one dimension, by calculus.

    ``g(x) = (1 + h**2 b**2 x) e^{-h x}`` over ``x = k**2 >= 0`` peaks at
    ``x = 1/h - 1/(b**2 h**2)`` when ``b**2 h > 1``, else at ``x = 0``.
    """
    if b * b * h > 1:
        x = 1.0 / h - 1.0 / (b * b * h * h)
        g = (1 + h * h * b * b * x) * math.exp(-h * x)
    else:
        g = 1.0
    return g / (1.0 - a * h) ** 2


def explicit_peak_1d(a, b, h):
    """Same for the pseudo-explicit scheme: ``((1+ah)**2 + h**2 b**2 x) e^{-h x}``."""
    c = (1.0 + a * h) ** 2
    if b * b * h > c:
        x = 1.0 / h - c / (b * b * h * h)
        return (c + h * h * b * b * x) * math.exp(-h * x)
    return c
