"""Input operator, controllability Gramians, regularized resolvent, control law.

The per-interval Gramian is the weakly singular integral
Phi = int_a^b (b-s)^w T_hat(b-s) B B* T_hat*(b-s) ds, computed in the
eigenbasis as an ML-weighted quadrature, with w = 2(alpha-1) for the
standard control law and w = alpha-1 for the alternative law whose cost
weights the control energy by (T-t)^{alpha-1}.

The resolvent solve inverts lam*z + Phi J[z] = lam*h; its contraction
property ||z|| <= ||h|| is what drives terminal error to zero as the
regularization parameter shrinks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DomainError, PrecisionLossError
from .quadrature import singular_rule
from .special import ml_eval
from .state_space import (
    GeneratorSpec,
    LpContext,
    duality_map,
    eigenfunction_matrix,
)


@dataclass(frozen=True)
class ControlOperator:
    """Input operator in the eigenbasis; matrix acts on mode coefficients."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DomainError("control operator matrix must be square")
        if not np.all(np.isfinite(m)):
            raise DomainError("control operator entries must be finite")

    @classmethod
    def diagonal(cls, b: np.ndarray) -> "ControlOperator":
        b = np.asarray(b, dtype=float)
        if np.any(b <= 0.0):
            raise DomainError("diagonal control operator requires positive entries")
        return cls(np.diag(b))

    @classmethod
    def identity(cls, n: int) -> "ControlOperator":
        return cls(np.eye(n))

    @classmethod
    def symmetric_kernel(cls, g: GeneratorSpec, kernel) -> "ControlOperator":
        """B from an integral kernel K(xi, zeta) on [0,pi]^2,
        B_{nm} = int int w_n(xi) K(xi,zeta) w_m(zeta) dxi dzeta."""
        ctx = LpContext.for_generator(g)
        W = eigenfunction_matrix(g, ctx.nodes)
        K = np.asarray(kernel(ctx.nodes[:, None], ctx.nodes[None, :]), dtype=float)
        WB = ctx.weights[:, None] * W
        return cls(WB.T @ K @ WB)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))


@dataclass(frozen=True)
class GramianBlock:
    """Symmetric PSD interval Gramian with its quadrature metadata."""

    k: int
    Phi: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        P = np.asarray(self.Phi, dtype=float)
        object.__setattr__(self, "Phi", P)
        if np.max(np.abs(P - P.T)) > 1e-10 * max(1.0, np.max(np.abs(P))):
            raise DomainError("Gramian must be symmetric")
        if np.min(np.linalg.eigvalsh(P)) < -1e-10 * max(1.0, np.max(np.abs(P))):
            raise DomainError("Gramian must be positive semidefinite")

    @property
    def sigma_min(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.Phi)))


def _gramian_matrix(g, B, alpha, length, w, levels, order):
    u, wt = singular_rule(length, w, levels=levels, order=order)
    E = ml_eval(alpha, alpha, (u[:, None] ** alpha * g.lam).ravel()).reshape(
        len(u), g.n_modes
    )
    I = E.T @ (wt[:, None] * E)
    BBt = B.matrix @ B.matrix.T
    return BBt * I


def assemble_gramian(
    g: GeneratorSpec,
    B: ControlOperator,
    alpha: float,
    interval,
    law: str = "standard",
    k: int = 0,
    tol: float = 1e-8,
) -> GramianBlock:
    """Interval controllability Gramian with mesh-doubling certification."""
    if law not in ("standard", "alternative"):
        raise DomainError(f"law must be 'standard' or 'alternative', got {law!r}")
    if not (0.5 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (1/2,1), got {alpha}")
    a, b = float(interval[0]), float(interval[1])
    if b <= a:
        raise DomainError(f"interval must have b > a, got {interval}")
    w = 2.0 * (alpha - 1.0) if law == "standard" else alpha - 1.0
    levels, order = 30, 12
    prev = _gramian_matrix(g, B, alpha, b - a, w, levels, order)
    for _ in range(3):
        levels, order = levels * 2, order + 4
        cur = _gramian_matrix(g, B, alpha, b - a, w, levels, order)
        diff = float(np.max(np.abs(cur - prev)))
        if diff <= tol * max(1.0, float(np.max(np.abs(cur)))):
            sym = (cur + cur.T) / 2.0
            return GramianBlock(
                k=k,
                Phi=sym,
                meta={"law": law, "interval": (a, b), "levels": levels,
                      "order": order, "mesh_change": diff},
            )
        prev = cur
    raise PrecisionLossError(
        f"Gramian quadrature did not certify tol={tol}: last change {diff:.2e}"
    )


def resolve(
    lam: float,
    Phi: GramianBlock,
    h,
    ctx: LpContext,
    g: GeneratorSpec,
    tol: float = 1e-8,
    max_iter: int = 500,
):
    """Solve lam*z + Phi J[z] = lam*h; returns z with ||z|| <= ||h||."""
    if lam <= 0.0:
        raise DomainError(f"lambda must be positive, got {lam}")
    h = g.validate_state(h)
    P = Phi.Phi
    if ctx.p == 2.0:
        return np.linalg.solve(lam * np.eye(g.n_modes) + P, lam * h)
    hn = float(np.linalg.norm(h))
    if hn == 0.0:
        return np.zeros_like(h)
    target = tol * lam * hn

    def residual(z):
        return float(np.linalg.norm(lam * z + P @ duality_map(ctx, g, z) - lam * h))

    # damped Newton on G(z) = lam z + Phi J[z] - lam h; the Newton
    # direction is always a descent direction for ||G||^2, so a
    # backtracking line search converges globally for this monotone map
    def G(z):
        return lam * z + P @ duality_map(ctx, g, z) - lam * h

    z = np.linalg.solve(lam * np.eye(g.n_modes) + P, lam * h)  # p=2 warm start
    gz = G(z)
    res = float(np.linalg.norm(gz))
    history = [res]
    n = g.n_modes
    for _ in range(max_iter):
        if res <= target:
            return z
        scale = max(float(np.linalg.norm(z)), hn)
        fd = 1e-7 * scale
        Jac = np.empty((n, n))
        for j in range(n):
            e = np.zeros(n)
            e[j] = fd
            Jac[:, j] = (G(z + e) - gz) / fd
        try:
            step = np.linalg.solve(Jac, -gz)
        except np.linalg.LinAlgError:
            step = -gz / max(lam, 1e-12)
        omega = 1.0
        improved = False
        for _ in range(40):
            z_new = z + omega * step
            g_new = G(z_new)
            res_new = float(np.linalg.norm(g_new))
            if res_new < res:
                z, gz, res = z_new, g_new, res_new
                improved = True
                break
            omega *= 0.5
        history.append(res)
        if not improved:
            break
    if res <= target:
        return z
    raise ConvergenceError(
        f"resolvent iteration stalled at residual {res:.2e} (target {target:.2e})",
        residuals=history,
    )


def control_direction(
    lam: float, Phi: GramianBlock, p_k, ctx: LpContext, g: GeneratorSpec
):
    """eta = J[R(lam,Phi) p_k], the mode-space direction the control feeds
    back through B* T_hat*.  Uses degree-1 homogeneity of J: the resolve
    output equals lam*R(lam,Phi)p_k, so J of it is lam*eta."""
    z = resolve(lam, Phi, p_k, ctx, g)
    return duality_map(ctx, g, z) / lam


def control_value(
    g: GeneratorSpec,
    B: ControlOperator,
    alpha: float,
    eta,
    t: float,
    t_next: float,
    law: str = "standard",
):
    """Feedback control at time t in [tau_k, t_next) given the direction
    eta = J[R p_k]; the standard law carries the (t_next - t)^{alpha-1}
    prefactor, the alternative law drops it."""
    if t >= t_next:
        raise DomainError("control defined on the half-open interval t < t_next")
    u = t_next - t
    sym = ml_eval(alpha, alpha, g.lam * u ** alpha)
    vec = B.matrix.T @ (sym * eta)
    if law == "standard":
        vec = u ** (alpha - 1.0) * vec
    return vec


def control_energy(eta, Phi: GramianBlock) -> float:
    """int over the interval of w(t)*||u(t)||^2 dt, evaluated exactly as
    the Gramian quadratic form <eta, Phi eta>."""
    eta = np.asarray(eta, dtype=float)
    return float(eta @ Phi.Phi @ eta)


def regulator_cost(
    x_T_achieved, x_T_target, etas, Phis, lam: float
) -> float:
    """Terminal mismatch plus lam times the weighted control energy."""
    d = np.asarray(x_T_achieved, dtype=float) - np.asarray(x_T_target, dtype=float)
    energy = sum(control_energy(e, P) for e, P in zip(etas, Phis))
    return float(d @ d) + lam * energy


def final_state_identity_check(
    x_T_achieved, x_T_target, lam: float, Phi: GramianBlock, p,
    ctx: LpContext, g: GeneratorSpec,
) -> float:
    """Residual of x(T) - x_T = -lam R(lam,Phi) p for a linear solve."""
    z = resolve(lam, Phi, p, ctx, g)
    d = np.asarray(x_T_achieved, dtype=float) - np.asarray(x_T_target, dtype=float)
    return float(np.linalg.norm(d + z))
