"""Composite quadrature for endpoint-singular integrals.

All the weakly singular integrals in this package have the form
int_a^b |s - e|^w g(s) ds with w > -1, the singular endpoint e being a
or b, and g smooth (or of algebraic type u^alpha) away from e.  The
rule used throughout: geometric panels graded toward e with a
Gauss-Legendre rule per panel, and a Gauss-Jacobi head panel that
absorbs the power weight exactly next to e.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi

from .errors import DomainError, PrecisionLossError


@lru_cache(maxsize=256)
def _panel_rules(w: float, levels: int, order: int):
    """Reference nodes/weights on (0, 1] for the measure u^w du.

    Geometric panels [2^-j, 2^-(j-1)] carry Gauss-Legendre nodes with
    the u^w factor folded into the weights; the head panel [0, 2^-levels]
    carries a Gauss-Jacobi rule exact for the u^w weight.
    """
    if w <= -1.0:
        raise DomainError(f"weight exponent must exceed -1, got {w}")
    gx, gw = leggauss(order)
    nodes, weights = [], []
    hi = 1.0
    for _ in range(levels):
        lo = hi / 2.0
        mid, half = (hi + lo) / 2.0, (hi - lo) / 2.0
        x = mid + half * gx
        nodes.append(x)
        weights.append(half * gw * x ** w)
        hi = lo
    xj, wj = roots_jacobi(order, 0.0, w)
    y = (1.0 + xj) / 2.0
    nodes.append(hi * y)
    weights.append(wj * 2.0 ** (-w - 1.0) * hi ** (1.0 + w))
    return np.concatenate(nodes), np.concatenate(weights)


def singular_rule(length: float, w: float, levels: int = 30, order: int = 12):
    """Nodes u_i in (0, length] and weights W_i with
    sum W_i g(u_i) ~ int_0^length u^w g(u) du for smooth g."""
    if length <= 0.0:
        raise DomainError(f"interval length must be positive, got {length}")
    x, wt = _panel_rules(float(w), int(levels), int(order))
    return length * x, length ** (1.0 + w) * wt


def weighted_integral(
    f,
    a: float,
    b: float,
    w: float,
    singular_end: str = "a",
    levels: int = 30,
    order: int = 12,
):
    """int_a^b |s-e|^w f(s) ds with e the singular endpoint a or b.

    f must accept a vector of s values; its output may be scalar-valued
    per node (1-d) or vector-valued (nodes on the last axis is NOT
    assumed: outputs of shape (n_nodes,) or (n_nodes, d) are reduced
    over the first axis).
    """
    if singular_end not in ("a", "b"):
        raise DomainError(f"singular_end must be 'a' or 'b', got {singular_end!r}")
    u, wt = singular_rule(b - a, w, levels=levels, order=order)
    s = a + u if singular_end == "a" else b - u
    vals = np.asarray(f(s), dtype=float)
    if vals.ndim == 1:
        return float(np.dot(wt, vals))
    return np.tensordot(wt, vals, axes=(0, 0))


def certified_weighted_integral(
    f,
    a: float,
    b: float,
    w: float,
    singular_end: str = "a",
    tol: float = 1e-8,
    levels: int = 30,
    order: int = 12,
    max_doublings: int = 3,
):
    """weighted_integral with mesh-doubling certification.

    Doubles panel count until successive values agree to tol (absolute
    plus relative); raises PrecisionLossError with the achieved estimate
    otherwise.
    """
    prev = weighted_integral(f, a, b, w, singular_end, levels, order)
    for _ in range(max_doublings):
        levels *= 2
        order = order + 4
        cur = weighted_integral(f, a, b, w, singular_end, levels, order)
        diff = float(np.max(np.abs(np.asarray(cur) - np.asarray(prev))))
        scale = max(1.0, float(np.max(np.abs(np.asarray(cur)))))
        if diff <= tol * scale:
            return cur
        prev = cur
    raise PrecisionLossError(
        f"quadrature failed to certify tol={tol}: last change {diff:.2e}"
    )
