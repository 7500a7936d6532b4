"""Experiments, sufficient-condition checker, config and table plumbing.

The central experiment is the regularization sweep: solve the impulsive
delayed control problem for a decreasing grid of lambda values and
record the terminal steering error, whose decay to zero is the numerical
signature of approximate controllability.  A linear-regulator experiment
exercises the closed-form optimal control and its final-state identity,
and the condition checker evaluates the solvability bound with its
discrete-Gronwall constants.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError
from .gramian import (
    ControlOperator,
    _gramian_matrix,
    control_energy,
    final_state_identity_check,
    resolve,
)
from .phase_space import DelaySpec, InitialHistory, seminorm_bound_constants
from .solver import ProblemSpec, Workspace, picard_solve
from .special import gamma
from .state_space import GeneratorSpec


# ---------------------------------------------------------------- Gronwall


def discrete_gronwall_bound(g, w):
    """Bound sequence for f_n <= g_n + sum_{k<n} w_k f_k:
    f_n <= g_n + sum_{k<n} g_k w_k exp(sum_{j=k+1}^{n-1} w_j)."""
    g = np.asarray(g, dtype=float)
    w = np.asarray(w, dtype=float)
    if g.shape != w.shape or g.ndim != 1:
        raise DomainError("g and w must be 1-d sequences of equal length")
    if np.any(g < 0) or np.any(w < 0):
        raise DomainError("Gronwall sequences must be nonnegative")
    n = len(g)
    cw = np.concatenate([[0.0], np.cumsum(w)])  # cw[i] = sum_{j<i} w_j
    out = np.empty(n)
    for i in range(n):
        if i == 0:
            out[i] = g[0]
            continue
        k = np.arange(i)
        # exponent sum_{j=k+1}^{i-1} w_j = cw[i] - cw[k+1]
        out[i] = g[i] + float(np.sum(g[k] * w[k] * np.exp(cw[i] - cw[k + 1])))
    return out


# ---------------------------------------------------------------- condition


@dataclass(frozen=True)
class ConditionInputs:
    """Constants entering the solvability condition and its N_k, C_k."""

    M: float
    M_tilde: float
    alpha: float
    alpha1: float
    T: float
    m: int
    lam: float
    H2: float
    beta: float = 0.0
    l_k: tuple = ()
    zeta_norms: tuple = ()
    psi0_norm: float = 0.0
    gamma_norm: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.alpha1 < self.alpha):
            raise DomainError(
                f"alpha1 must lie in [0, alpha), got {self.alpha1}"
            )
        for name in ("M", "M_tilde", "T", "lam", "H2", "beta",
                     "psi0_norm", "gamma_norm"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be nonnegative")
        if self.lam <= 0:
            raise DomainError("lam must be positive")


def check_condition(ci: ConditionInputs) -> dict:
    """Evaluate the sufficient solvability bound.

    mu = (a - a1)/(1 - a1);
    R = (M Mt a / Gamma(1+a))^2 * 2 T^{2a-1} / (lam (2a-1));
    LHS = (M H2 a beta / Gamma(1+a)) * (2 T^{a-a1} / mu^{1-a1})
          * {1 + (m+1)(m+2) R/2
             + m(m+1) R^2/2 * sum_{j<m} e^{(m+j)(m-j-1) R/2}};
    satisfied iff LHS < 1.  Also reports the offset constants
    N_0 = |zeta_0| + M|psi(0)| + (M a / Gamma(1+a)) (2 T^{a-a1}/mu^{1-a1}) |gamma|,
    N_k with M l_k in place of M|psi(0)|, and the Gronwall-chained
    C_k = N_k + R sum_{j<k} N_j e^{(k+j)(k-j-1) R/2}.
    """
    a, a1, m = ci.alpha, ci.alpha1, ci.m
    mu = (a - a1) / (1.0 - a1)
    ga = gamma(1.0 + a)
    R = (ci.M * ci.M_tilde * a / ga) ** 2 * 2.0 * ci.T ** (2.0 * a - 1.0) / (
        ci.lam * (2.0 * a - 1.0)
    )
    with np.errstate(over="ignore"):
        tail = 1.0 + (m + 1) * (m + 2) * R / 2.0
        if m >= 1:
            s = sum(np.exp((m + j) * (m - j - 1) * R / 2.0) for j in range(m))
            tail += m * (m + 1) * R ** 2 / 2.0 * s
        shape = 2.0 * ci.T ** (a - a1) / mu ** (1.0 - a1)
        pref = ci.M * ci.H2 * a * ci.beta / ga
        # a vanishing growth constant gives a zero bound even when the
        # Gronwall tail overflows to inf
        lhs = 0.0 if pref == 0.0 else pref * shape * tail
        gterm = (ci.M * a / ga) * shape * ci.gamma_norm
        zn = list(ci.zeta_norms) + [0.0] * (m + 1 - len(ci.zeta_norms))
        lk = list(ci.l_k) + [0.0] * (m - len(ci.l_k))
        N = [zn[0] + ci.M * ci.psi0_norm + gterm]
        for k in range(1, m + 1):
            N.append(zn[k] + ci.M * lk[k - 1] + gterm)
        C = [N[0]]
        for k in range(1, m + 1):
            acc = N[k]
            for j in range(k):
                acc += R * N[j] * np.exp((k + j) * (k - j - 1) * R / 2.0)
            C.append(acc)
    return {
        "lhs": float(lhs),
        "satisfied": bool(lhs < 1.0),
        "R_tilde": float(R),
        "mu": float(mu),
        "N": [float(v) for v in N],
        "C": [float(v) for v in C],
    }


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class SweepConfig:
    """Problem template plus the decreasing lambda grid."""

    problem: ProblemSpec
    lambda_grid: tuple
    beta: float = 0.0

    def __post_init__(self):
        lg = tuple(float(v) for v in self.lambda_grid)
        object.__setattr__(self, "lambda_grid", lg)
        if not lg or any(v <= 0 for v in lg):
            raise DomainError("lambda_grid entries must be positive")
        if any(b >= a for a, b in zip(lg, lg[1:])):
            raise DomainError("lambda_grid must be strictly decreasing")


def _desk_defaults() -> dict:
    return {
        "alpha1": 0.0,
        "T": 1.0,
        "modes": 8,
        "impulses": [{"t": 0.3, "tau": 0.35}, {"t": 0.6, "tau": 0.65}],
        "delay": {"kind": "bounded", "params": [0.2]},
        "memory_kernel": {"kind": "exponential", "params": [2.0]},
        "B": {"kind": "diagonal", "params": []},
        "psi": {"kind": "exponential_modes",
                "params": {"rate": 1.0, "decay": 2.0}},
        "targets": {"kind": "first_mode_bump", "value": 0.5},
        "lambda_grid": [1.0, 0.1, 0.01, 0.001],
        "law": "standard",
        "grid": {"nodes": 512, "theta_max": 28.0, "nu": 1.0},
        "tolerances": {"tol_fp": 1e-8, "max_iter": 200},
        "impulse_amplitude": 0.1,
        "beta": 0.0,
    }


def _build_memory_kernel(spec: dict):
    kind = spec.get("kind", "exponential")
    params = spec.get("params", [2.0])
    if kind == "exponential":
        rate = float(params[0]) if params else 2.0
        return lambda s: np.exp(-rate * np.asarray(s, dtype=float))
    if kind == "zero":
        return lambda s: np.zeros_like(np.asarray(s, dtype=float))
    raise DomainError(f"memory_kernel: unknown kind {kind!r}")


def _build_B(spec: dict, n: int) -> ControlOperator:
    kind = spec.get("kind", "diagonal")
    params = spec.get("params", [])
    if kind == "diagonal":
        if params:
            d = np.asarray(params, dtype=float)
            if len(d) != n:
                raise DomainError(f"B: need {n} diagonal entries")
        else:
            d = 1.0 / np.arange(1, n + 1)
        return ControlOperator.diagonal(d)
    if kind == "identity":
        return ControlOperator.identity(n)
    if kind == "zero":
        return ControlOperator(np.zeros((n, n)))
    raise DomainError(f"B: unknown kind {kind!r}")


def _build_psi(spec: dict, n: int, theta_max: float, nu: float) -> InitialHistory:
    kind = spec.get("kind", "exponential_modes")
    params = spec.get("params", {})
    if kind == "constant":
        c = np.asarray(params.get("coefficients", [0.0] * n), dtype=float)
        if len(c) != n:
            raise DomainError(f"psi: need {n} coefficients")
        return InitialHistory.constant(c, theta_max, n_nodes=64, nu=nu)
    if kind == "exponential_modes":
        if "coefficients" in params:
            c = np.asarray(params["coefficients"], dtype=float)
            if len(c) != n:
                raise DomainError(f"psi: need {n} coefficients")
        else:
            decay = float(params.get("decay", 2.0))
            c = 1.0 / np.arange(1, n + 1) ** decay
        rate = float(params.get("rate", 1.0))
        theta = np.linspace(-theta_max, 0.0, 64)
        vals = np.exp(rate * theta)[:, None] * c
        return InitialHistory(theta, vals, nu=nu)
    raise DomainError(f"psi: unknown kind {kind!r}")


def _build_targets(spec, n: int, m: int):
    if isinstance(spec, dict):
        kind = spec.get("kind", "first_mode_bump")
        if kind != "first_mode_bump":
            raise DomainError(f"targets: unknown kind {kind!r}")
        z = np.zeros(n)
        z[0] = float(spec.get("value", 0.5))
        return tuple(z.copy() for _ in range(m + 1))
    rows = [np.asarray(r, dtype=float) for r in spec]
    if len(rows) != m + 1 or any(len(r) != n for r in rows):
        raise DomainError(f"targets: need {m + 1} vectors of length {n}")
    return tuple(rows)


def _impulse_kernel(amplitude: float):
    return lambda t, xi, z: amplitude * np.sin(xi) * np.sin(z)


def config_to_spec(cfg: dict) -> SweepConfig:
    """Assemble a SweepConfig from a plain (JSON-shaped) dictionary.

    `alpha` is required; every other key falls back to the desk default."""
    if "alpha" not in cfg:
        raise DomainError("config missing required field 'alpha'")
    full = _desk_defaults()
    full.update(cfg)
    try:
        alpha = float(full["alpha"])
        n = int(full["modes"])
        grid = dict(_desk_defaults()["grid"], **full.get("grid", {}))
        tol = dict(_desk_defaults()["tolerances"], **full.get("tolerances", {}))
        imp = full["impulses"] or []
        ts = tuple(float(e["t"]) for e in imp)
        taus = tuple(float(e["tau"]) for e in imp)
        amp = float(full["impulse_amplitude"])
        g = GeneratorSpec(n_modes=n)
        nu = float(grid["nu"])
        problem = ProblemSpec(
            alpha=alpha,
            alpha1=float(full["alpha1"]),
            T=float(full["T"]),
            generator=g,
            B=_build_B(full["B"], n),
            delay=DelaySpec(full["delay"].get("kind", "bounded"),
                            tuple(full["delay"].get("params", [0.2]))),
            memory_kernel=_build_memory_kernel(full["memory_kernel"]),
            impulse_kernels=tuple(_impulse_kernel(amp) for _ in ts),
            history=_build_psi(full["psi"], n, float(grid["theta_max"]), nu),
            targets=_build_targets(full["targets"], n, len(ts)),
            lam=float(full["lambda_grid"][0]),
            impulse_times=ts,
            impulse_ends=taus,
            law=full["law"],
            n_nodes=int(grid["nodes"]),
            tol_fp=float(tol["tol_fp"]),
            max_iter=int(tol["max_iter"]),
        )
    except KeyError as e:
        raise DomainError(f"config missing field {e.args[0]!r}") from e
    except (TypeError, ValueError) as e:
        raise DomainError(f"config field invalid: {e}") from e
    return SweepConfig(problem=problem, lambda_grid=tuple(full["lambda_grid"]),
                       beta=float(full["beta"]))


def parse_config(path: str) -> SweepConfig:
    """Read and validate a JSON config file."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as e:
        raise DomainError(f"config is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise DomainError("config top level must be a JSON object")
    return config_to_spec(raw)


# ---------------------------------------------------------------- sweep


def _condition_inputs(p: ProblemSpec, lam: float, beta: float) -> ConditionInputs:
    """Condition constants derived from the problem instance."""
    _, H2 = seminorm_bound_constants(p.history, p.T)
    xi = np.linspace(0.0, np.pi, 101)
    l_k = tuple(
        float(np.pi * np.max(np.abs(k(t, xi[:, None], xi[None, :]))))
        for k, t in zip(p.impulse_kernels, p.impulse_times)
    )
    return ConditionInputs(
        M=p.generator.M,
        M_tilde=p.B.norm,
        alpha=p.alpha,
        alpha1=p.alpha1,
        T=p.T,
        m=p.m,
        lam=lam,
        H2=H2,
        beta=beta,
        l_k=l_k,
        zeta_norms=tuple(float(np.linalg.norm(z)) for z in p.targets),
        psi0_norm=float(np.linalg.norm(p.history.values[-1])),
        gamma_norm=0.0,
    )


def _unweighted_energy(p: ProblemSpec, ws: Workspace, etas) -> float:
    """int ||u||^2 dt summed over the control windows.

    For the standard law this is the Gramian quadratic form; the
    alternative law carries no prefactor, so its energy uses a w=0
    interval quadrature of the same integrand."""
    if p.law == "standard":
        return float(sum(
            control_energy(e, P) for e, P in zip(etas, ws.gramians)
        ))
    total = 0.0
    for (a, b), e in zip(p.control_intervals, etas):
        Phi0 = _gramian_matrix(p.generator, p.B, p.alpha, b - a, 0.0, 60, 16)
        total += float(e @ Phi0 @ e)
    return total


def run_lambda_sweep(cfg: SweepConfig, timings: bool = False) -> list:
    """Solve for each lambda in the grid; one result row per lambda.

    Rows are dicts with the fixed CSV fields; a non-convergent solve is
    recorded in-row (picard_iters = -1, errors as NaN) and the sweep
    continues."""
    p0 = cfg.problem
    ws = Workspace(p0)
    zeta_m = p0.targets[-1]
    rows = []
    for lam in cfg.lambda_grid:
        p = dataclasses.replace(p0, lam=lam)
        t0 = time.perf_counter()
        try:
            tr, ctrl, iters = picard_solve(p, ws)
            err = float(np.linalg.norm(tr.values[-1] - zeta_m))
            energy = _unweighted_energy(p, ws, ctrl.etas)
        except ConvergenceError:
            iters, err, energy = -1, float("nan"), float("nan")
        wall = (time.perf_counter() - t0) * 1000.0 if timings else 0.0
        lhs = check_condition(_condition_inputs(p, lam, cfg.beta))["lhs"]
        rows.append({
            "lambda": lam,
            "terminal_error": err,
            "control_energy": energy,
            "picard_iters": iters,
            "condition_lhs": lhs,
            "wall_ms": wall,
        })
    return rows


# ---------------------------------------------------------------- regulator


def run_regulator(cfg: SweepConfig) -> dict:
    """Linear-regulator experiment (m = 0, f = 0) under both laws.

    Reports, per law: terminal error, cost (terminal mismatch plus
    lambda-weighted control energy in that law's weight), and the
    final-state identity residual evaluated on a refined influence
    quadrature."""
    base = cfg.problem
    zero_b = lambda s: np.zeros_like(np.asarray(s, dtype=float))
    report = {}
    for law in ("standard", "alternative"):
        # linearize: drop impulses and the memory term, steer to zeta_m
        p = dataclasses.replace(
            base,
            memory_kernel=zero_b,
            delay=DelaySpec("zero", ()),
            impulse_times=(),
            impulse_ends=(),
            impulse_kernels=(),
            targets=(base.targets[-1],),
            law=law,
        )
        ws = Workspace(p, conv_levels=40, conv_order=14)
        tr, ctrl, iters = picard_solve(p, ws)
        target = p.targets[0]
        err = float(np.linalg.norm(tr.values[-1] - target))
        energy = float(control_energy(ctrl.etas[0], ws.gramians[0]))
        res = final_state_identity_check(
            tr.values[-1], target, p.lam, ws.gramians[0], ctrl.offsets[0],
            ws.ctx, p.generator,
        )
        report[law] = {
            "terminal_error": err,
            "cost": err ** 2 + p.lam * energy,
            "identity_residual": float(res),
            "offset_norm": float(np.linalg.norm(ctrl.offsets[0])),
            "picard_iters": iters,
        }
    return report


# ---------------------------------------------------------------- emission

_CSV_COLUMNS = ("lambda", "terminal_error", "control_energy",
                "picard_iters", "condition_lhs", "wall_ms")


def _fmt(v) -> str:
    if isinstance(v, int):
        return str(v)
    return format(float(v), ".12g")


def emit_csv(rows: list, path: str) -> None:
    """Deterministic fixed-column CSV."""
    lines = [",".join(_CSV_COLUMNS)]
    for r in rows:
        lines.append(",".join(_fmt(r[c]) for c in _CSV_COLUMNS))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_plotdata(rows: list, path: str) -> None:
    """Two-column (lambda, terminal_error) file for external plotting."""
    lines = [
        f"{_fmt(r['lambda'])} {_fmt(r['terminal_error'])}" for r in rows
    ]
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def parse_csv(path: str) -> list:
    """Inverse of emit_csv (round-trip checks)."""
    with open(path) as fh:
        lines = [l for l in fh.read().splitlines() if l]
    head = lines[0].split(",")
    if tuple(head) != _CSV_COLUMNS:
        raise DomainError(f"unexpected CSV header {head}")
    rows = []
    for line in lines[1:]:
        vals = line.split(",")
        row = dict(zip(_CSV_COLUMNS, vals))
        row["lambda"] = float(row["lambda"])
        row["terminal_error"] = float(row["terminal_error"])
        row["control_energy"] = float(row["control_energy"])
        row["picard_iters"] = int(row["picard_iters"])
        row["condition_lhs"] = float(row["condition_lhs"])
        row["wall_ms"] = float(row["wall_ms"])
        rows.append(row)
    return rows
