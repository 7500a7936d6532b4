"""Histories, trajectory segments, state-dependent delay, seminorms.

A history assigns a state to each lag theta in [-theta_max, 0]; the
phase seminorm combines a sup-window integral over [-r, 0] with an
exponentially weighted L^p integral of the tail.  Trajectories carry
piecewise-linear grid values on [0, T] with separate left and right
limits at impulse onsets (the stored grid value at an onset is the left
limit).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import DomainError


@dataclass(frozen=True)
class InitialHistory:
    """Sampled history on [-theta_max, 0]; also used for segment views.

    theta_grid is sorted increasing with theta_grid[-1] == 0; values has
    one state row per node.  Evaluation below -theta_max returns zero,
    consistent with the tail-truncation convention of the seminorm.
    """

    theta_grid: np.ndarray
    values: np.ndarray
    nu: float = 1.0
    r: float = 0.0
    p_phase: float = 1.0

    def __post_init__(self):
        tg = np.asarray(self.theta_grid, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "theta_grid", tg)
        object.__setattr__(self, "values", vals)
        if tg.ndim != 1 or len(tg) < 2:
            raise DomainError("theta_grid must hold at least two nodes")
        if np.any(np.diff(tg) <= 0):
            raise DomainError("theta_grid must be strictly increasing")
        if abs(tg[-1]) > 1e-12:
            raise DomainError("theta_grid must end at 0")
        if vals.shape[0] != len(tg):
            raise DomainError("values row count must match theta_grid")
        if self.nu <= 0:
            raise DomainError(f"nu must be positive, got {self.nu}")
        if self.r < 0:
            raise DomainError(f"r must be nonnegative, got {self.r}")
        if self.p_phase < 1:
            raise DomainError(f"p_phase must be >= 1, got {self.p_phase}")
        if not np.all(np.isfinite(vals)):
            raise DomainError("history values must be finite")

    @property
    def theta_max(self) -> float:
        return -float(self.theta_grid[0])

    def at(self, theta: float) -> np.ndarray:
        """Linear interpolation; zero below the support."""
        return self.at_many(np.array([float(theta)]))[0]

    def at_many(self, thetas: np.ndarray) -> np.ndarray:
        """Vectorized interpolation, one state row per lag."""
        thetas = np.asarray(thetas, dtype=float)
        if np.any(thetas > 1e-12):
            raise DomainError("history lags must be <= 0")
        out = np.stack(
            [
                np.interp(thetas, self.theta_grid, self.values[:, j])
                for j in range(self.values.shape[1])
            ],
            axis=1,
        )
        out[thetas < self.theta_grid[0]] = 0.0
        return out

    @classmethod
    def constant(cls, state, theta_max: float, n_nodes: int = 33, **kw):
        tg = np.linspace(-theta_max, 0.0, n_nodes)
        vals = np.tile(np.asarray(state, dtype=float), (n_nodes, 1))
        return cls(tg, vals, **kw)


@dataclass(frozen=True)
class DelaySpec:
    """Scalar delay sigma as a function of the current state norm."""

    kind: str = "bounded"
    params: tuple = (0.2,)

    def __post_init__(self):
        if self.kind not in ("constant", "bounded", "zero"):
            raise DomainError(f"unknown delay kind {self.kind!r}")
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))
        if any(v < 0 for v in self.params):
            raise DomainError("delay parameters must be nonnegative")

    def sigma(self, norm_x: float) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return self.params[0]
        a = self.params[0]
        return a * norm_x / (1.0 + norm_x)

    @property
    def bound(self) -> float:
        return 0.0 if self.kind == "zero" else self.params[0]


@dataclass
class Trajectory:
    """Piecewise-linear grid trajectory with impulse-onset jump data."""

    history: InitialHistory
    times: np.ndarray
    values: np.ndarray
    right_limits: dict = field(default_factory=dict)  # time index -> state

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise DomainError("trajectory grid must be strictly increasing")
        if self.values.shape[0] != len(self.times):
            raise DomainError("values row count must match times")

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def _extended(self):
        """Grid with jump nodes split so plain interpolation honors the
        left-limit convention: an extra node just after each onset
        carries the right limit."""
        if getattr(self, "_ext_cache", None) is None:
            ts = list(self.times)
            vs = list(self.values)
            for idx in sorted(self.right_limits, reverse=True):
                eps = 1e-13 * max(1.0, self.times[-1])
                ts.insert(idx + 1, self.times[idx] + eps)
                vs.insert(idx + 1, np.asarray(self.right_limits[idx], dtype=float))
            self._ext_cache = (np.array(ts), np.stack(vs))
        return self._ext_cache

    def values_at(self, ts: np.ndarray) -> np.ndarray:
        """Vectorized left-limit interpolation, one state row per time."""
        ts = np.clip(np.asarray(ts, dtype=float), 0.0, self.times[-1])
        et, ev = self._extended()
        return np.stack(
            [np.interp(ts, et, ev[:, j]) for j in range(ev.shape[1])], axis=1
        )

    def value_at(self, t: float, side: str = "left") -> np.ndarray:
        """Interpolated state; at a jump node the side selects the limit."""
        if t < -1e-12 or t > self.times[-1] + 1e-12:
            raise DomainError(f"t={t} outside [0, {self.times[-1]}]")
        t = min(max(t, 0.0), self.times[-1])
        idx = np.searchsorted(self.times, t)
        if idx < len(self.times) and abs(self.times[idx] - t) < 1e-12:
            if side == "right" and idx in self.right_limits:
                return self.right_limits[idx].copy()
            return self.values[idx].copy()
        lo = idx - 1
        left_val = self.right_limits.get(lo, self.values[lo])
        w = (t - self.times[lo]) / (self.times[lo + 1] - self.times[lo])
        return (1.0 - w) * left_val + w * self.values[lo + 1]


_GX4, _GW4 = leggauss(4)


def _interval_quad(f, lo: float, hi: float) -> float:
    mid, half = (hi + lo) / 2.0, (hi - lo) / 2.0
    return half * float(np.sum(_GW4 * f(mid + half * _GX4)))


def phase_seminorm(h: InitialHistory) -> float:
    """Sup-window integral over [-r,0] plus weighted L^p tail norm."""
    edges = np.unique(np.clip(
        np.concatenate([h.theta_grid, [-h.r, 0.0]]), h.theta_grid[0], 0.0
    ))
    lo, hi = edges[:-1], edges[1:]
    mid, half = (hi + lo) / 2.0, (hi - lo) / 2.0
    nodes = (mid[:, None] + half[:, None] * _GX4).ravel()
    norms = np.linalg.norm(h.at_many(nodes), axis=1).reshape(-1, 4)
    head_mask = lo >= -h.r - 1e-15
    head = float(np.sum(half[head_mask, None] * _GW4 * norms[head_mask]))
    tail_vals = np.exp(h.nu * nodes).reshape(-1, 4) * norms ** h.p_phase
    tail = float(np.sum(half[~head_mask, None] * _GW4 * tail_vals[~head_mask]))
    return head + tail ** (1.0 / h.p_phase)


def segment(tr: Trajectory, t: float) -> InitialHistory:
    """History view x_t(theta) = x(t+theta) on [-theta_max, 0].

    Node set is the union of shifted trajectory and history nodes so no
    resampling error is introduced; the value at theta=0 is the left
    limit when t is an impulse onset.
    """
    h = tr.history
    if t < -1e-12 or t > tr.T + 1e-12:
        raise DomainError(f"t={t} outside [0, {tr.T}]")
    t = min(max(t, 0.0), tr.T)
    theta_max = h.theta_max
    nodes = [h.theta_grid - t, np.array([-theta_max])]
    nodes.append(tr.times[tr.times <= t + 1e-12] - t)
    theta = np.unique(np.concatenate(nodes))
    theta = theta[(theta >= -theta_max - 1e-12) & (theta <= 1e-12)]
    theta[-1] = 0.0
    s = t + theta
    future = s >= -1e-12
    vals = np.empty((len(theta), tr.values.shape[1]))
    if np.any(future):
        vals[future] = tr.values_at(s[future])
    if np.any(~future):
        vals[~future] = h.at_many(s[~future])
    return InitialHistory(theta, vals, nu=h.nu, r=h.r, p_phase=h.p_phase)


def delayed_state(tr: Trajectory, d: DelaySpec, s: float) -> InitialHistory:
    """History at the delayed time rho = s - sigma(||x(s)||)."""
    h = tr.history
    if d.bound > h.theta_max + 1e-12:
        raise DomainError(
            f"delay bound {d.bound} exceeds history depth {h.theta_max}"
        )
    x_s = tr.value_at(s, side="left")
    rho = s - d.sigma(float(np.linalg.norm(x_s)))
    if rho >= 0.0:
        return segment(tr, rho)
    if rho < -h.theta_max:
        raise DomainError(f"delayed time {rho} below history support")
    # shifted initial history psi_rho(theta) = psi(rho + theta), zero-filled
    theta = h.theta_grid.copy()
    vals = np.stack([h.at(max(rho + th, -h.theta_max)) if rho + th >= -h.theta_max
                     else np.zeros(h.values.shape[1]) for th in theta])
    return InitialHistory(theta, vals, nu=h.nu, r=h.r, p_phase=h.p_phase)


def seminorm_bound_constants(h: InitialHistory, T: float) -> tuple:
    """(H1, H2) for the exponential weight: H1=1, H2=(1-e^{-nu T})/nu."""
    return 1.0, (1.0 - np.exp(-h.nu * T)) / h.nu


def seminorm_domination_check(tr: Trajectory) -> dict:
    """Segment-seminorm domination check at every grid time.

    Verifies seminorm(x_t) <= H1*seminorm(psi) + H2*sup_{[0,t]}||x||
    and reports the smallest slack (negative means violation).
    """
    h = tr.history
    H1, H2 = seminorm_bound_constants(h, tr.T)
    psi_norm = phase_seminorm(h)
    slacks = []
    run_sup = 0.0
    for i, t in enumerate(tr.times):
        run_sup = max(run_sup, float(np.linalg.norm(tr.values[i])))
        if i in tr.right_limits:
            run_sup = max(run_sup, float(np.linalg.norm(tr.right_limits[i])))
        lhs = phase_seminorm(segment(tr, float(t)))
        slacks.append(H1 * psi_norm + H2 * run_sup - lhs)
    min_slack = float(np.min(slacks))
    return {
        "H1": H1,
        "H2": H2,
        "min_slack": min_slack,
        "satisfied": min_slack >= -1e-10,
        "slacks": np.asarray(slacks),
    }
