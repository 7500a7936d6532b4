"""Spectrally truncated state space on [0, pi].

States are coefficient vectors against the orthonormal eigenfunctions
w_n(xi) = sqrt(2/pi) sin(n xi) of the Dirichlet Laplacian; throughout
the package a state is a plain 1-d float array of length n_modes.  The
fractional solution operators act diagonally in this basis as
Mittag-Leffler multipliers E_{a,1}(lam_n t^a) and E_{a,a}(lam_n t^a).

L^p norms and the duality map are computed on a Gauss-Legendre spatial
grid, which integrates the trigonometric products far below the
tolerances asserted elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import DomainError
from .special import ml_eval


@dataclass(frozen=True)
class GeneratorSpec:
    """Truncated diagonal generator with strictly negative spectrum."""

    n_modes: int = 8
    eigenvalues: tuple = None
    M: float = 1.0
    grid_points: int = 201

    def __post_init__(self):
        if self.n_modes < 1:
            raise DomainError(f"n_modes must be positive, got {self.n_modes}")
        if self.eigenvalues is None:
            object.__setattr__(
                self,
                "eigenvalues",
                tuple(-float(n * n) for n in range(1, self.n_modes + 1)),
            )
        ev = tuple(float(v) for v in self.eigenvalues)
        object.__setattr__(self, "eigenvalues", ev)
        if len(ev) != self.n_modes:
            raise DomainError("eigenvalues length must equal n_modes")
        if any(v >= 0.0 for v in ev):
            raise DomainError("eigenvalues must be strictly negative")
        if any(a < b for a, b in zip(ev, ev[1:])):
            raise DomainError("eigenvalues must be sorted decreasing")
        if self.M < 1.0:
            raise DomainError(f"M must be >= 1, got {self.M}")
        if self.grid_points < 8:
            raise DomainError("grid_points too small")

    @property
    def lam(self) -> np.ndarray:
        return np.asarray(self.eigenvalues)

    def validate_state(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if s.shape != (self.n_modes,):
            raise DomainError(
                f"state must have shape ({self.n_modes},), got {s.shape}"
            )
        return s


@dataclass(frozen=True)
class LpContext:
    """Spatial grid, quadrature weights, and the L^p exponent."""

    p: float
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.p < 2.0:
            raise DomainError(f"p must be >= 2, got {self.p}")
        if np.any(self.weights <= 0.0):
            raise DomainError("quadrature weights must be positive")

    @classmethod
    def for_generator(cls, g: GeneratorSpec, p: float = 2.0) -> "LpContext":
        gx, gw = leggauss(g.grid_points)
        nodes = (gx + 1.0) * (np.pi / 2.0)
        weights = gw * (np.pi / 2.0)
        return cls(p=float(p), nodes=nodes, weights=weights)


def eigenfunction_matrix(g: GeneratorSpec, nodes: np.ndarray) -> np.ndarray:
    """Matrix W with W[i, n] = w_{n+1}(nodes[i])."""
    n = np.arange(1, g.n_modes + 1)
    return np.sqrt(2.0 / np.pi) * np.sin(np.outer(nodes, n))


def grid_values(ctx: LpContext, g: GeneratorSpec, s) -> np.ndarray:
    """Pointwise values of the state's expansion on the spatial grid."""
    return eigenfunction_matrix(g, ctx.nodes) @ g.validate_state(s)


def op_symbols(g: GeneratorSpec, alpha: float, t, kind: str) -> np.ndarray:
    """ML multiplier values, shape t.shape + (n_modes,).

    kind="T" gives E_{a,1}(lam_n t^a); kind="T_hat" gives
    E_{a,a}(lam_n t^a).
    """
    if not (0.5 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (1/2,1), got {alpha}")
    if kind not in ("T", "T_hat"):
        raise DomainError(f"kind must be 'T' or 'T_hat', got {kind!r}")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("t must be nonnegative")
    beta = 1.0 if kind == "T" else alpha
    z = t[..., None] ** alpha * g.lam
    vals = ml_eval(alpha, beta, z.ravel()).reshape(z.shape)
    return vals


def apply_solution_op(g: GeneratorSpec, alpha: float, t: float, s, kind: str):
    """Diagonal action of T_alpha(t) or T_hat_alpha(t) on a state."""
    s = g.validate_state(s)
    return op_symbols(g, alpha, float(t), kind) * s


def lp_norm(ctx: LpContext, g: GeneratorSpec, s) -> float:
    """Composite-quadrature L^p norm of the state's expansion on [0, pi]."""
    s = g.validate_state(s)
    if ctx.p == 2.0:
        # orthonormal basis: Euclidean norm is exact, skip the grid
        return float(np.linalg.norm(s))
    v = grid_values(ctx, g, s)
    return float(np.sum(ctx.weights * np.abs(v) ** ctx.p) ** (1.0 / ctx.p))


def duality_map(ctx: LpContext, g: GeneratorSpec, s) -> np.ndarray:
    """Normalized duality map J with <x, J[x]> = ||x||^2 = ||J[x]||^2.

    Identity for p=2; for p>2 the pointwise map
    ||x||^{2-p} |x(xi)|^{p-2} x(xi) projected back to coefficients.
    """
    s = g.validate_state(s)
    if ctx.p == 2.0:
        return s.copy()
    nrm = lp_norm(ctx, g, s)
    if nrm == 0.0:
        return np.zeros_like(s)
    v = grid_values(ctx, g, s)
    y = nrm ** (2.0 - ctx.p) * np.abs(v) ** (ctx.p - 2.0) * v
    W = eigenfunction_matrix(g, ctx.nodes)
    return W.T @ (ctx.weights * y)


def duality_residuals(ctx: LpContext, g: GeneratorSpec, s) -> dict:
    """Residuals of the two defining identities of J.

    The pairing identity <x, J[x]> = ||x||^2 is preserved exactly by the
    projection onto the mode span; the dual-norm identity
    ||J[x]||_{p'} = ||x||_p holds for the pointwise map before
    projection, so it is reported on those values.
    """
    s = g.validate_state(s)
    nrm = lp_norm(ctx, g, s)
    if nrm == 0.0:
        return {"pairing": 0.0, "dual_norm": 0.0}
    J = duality_map(ctx, g, s)
    if ctx.p == 2.0:
        return {"pairing": abs(float(s @ J) - nrm ** 2), "dual_norm": 0.0}
    v = grid_values(ctx, g, s)
    pairing = abs(float(np.sum(ctx.weights * v * grid_values(ctx, g, J))) - nrm ** 2)
    y = nrm ** (2.0 - ctx.p) * np.abs(v) ** (ctx.p - 2.0) * v
    pp = ctx.p / (ctx.p - 1.0)
    dual = abs(float(np.sum(ctx.weights * np.abs(y) ** pp) ** (1.0 / pp)) - nrm)
    return {"pairing": pairing, "dual_norm": dual}
