"""Command-line entry points.

Exit codes: 0 success, 2 configuration/validation error, 3 solver
non-convergence.
"""

from __future__ import annotations

import sys

import click
import numpy as np

from .errors import ConvergenceError, DomainError, PrecisionLossError
from .experiment import (
    check_condition,
    _condition_inputs,
    emit_csv,
    emit_plotdata,
    parse_config,
    run_lambda_sweep,
    run_regulator,
)


@click.group()
def main():
    """Numerical laboratory for regularized feedback control of
    fractional-order impulsive evolution equations with delay."""


def _load(config_path):
    try:
        return parse_config(config_path)
    except DomainError as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(2)


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--plot", "plot_path", default=None, type=click.Path(dir_okay=False),
              help="Optional (lambda, terminal_error) plot-data file.")
@click.option("--timings", is_flag=True, default=False,
              help="Record real wall times (breaks byte determinism).")
def sweep(config_path, out_path, plot_path, timings):
    """Run the lambda sweep and write the result table as CSV."""
    cfg = _load(config_path)
    rows = run_lambda_sweep(cfg, timings=timings)
    emit_csv(rows, out_path)
    if plot_path:
        emit_plotdata(rows, plot_path)
    for r in rows:
        click.echo(
            f"lambda={r['lambda']:g} terminal_error={r['terminal_error']:.6e} "
            f"iters={r['picard_iters']}"
        )
    if any(r["picard_iters"] < 0 for r in rows):
        click.echo("one or more solves did not converge", err=True)
        sys.exit(3)


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
def regulator(config_path):
    """Run the linear-regulator experiment under both control laws."""
    cfg = _load(config_path)
    try:
        rep = run_regulator(cfg)
    except ConvergenceError as e:
        click.echo(f"solver did not converge: {e}", err=True)
        sys.exit(3)
    for law, r in rep.items():
        click.echo(
            f"{law}: terminal_error={r['terminal_error']:.6e} "
            f"cost={r['cost']:.6e} "
            f"identity_residual={r['identity_residual']:.3e} "
            f"iters={r['picard_iters']}"
        )


@main.command("check-condition")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
def check_condition_cmd(config_path):
    """Evaluate the sufficient solvability condition for each lambda."""
    cfg = _load(config_path)
    for lam in cfg.lambda_grid:
        rep = check_condition(_condition_inputs(cfg.problem, lam, cfg.beta))
        click.echo(
            f"lambda={lam:g} lhs={rep['lhs']:.6e} "
            f"satisfied={rep['satisfied']} R_tilde={rep['R_tilde']:.6e}"
        )


@main.command()
def selftest():
    """Quick invariant suite over the numerical core."""
    import dataclasses

    from .gramian import ControlOperator, assemble_gramian, resolve
    from .phase_space import InitialHistory, Trajectory, seminorm_domination_check
    from .special import MLParams, mittag_leffler, subordination_oracle
    from .state_space import GeneratorSpec, LpContext, op_symbols

    failures = []

    def check(name, ok):
        click.echo(f"{'PASS' if ok else 'FAIL'} {name}")
        if not ok:
            failures.append(name)

    # special-function bridge on a small lattice
    worst = 0.0
    for a in (0.6, 0.8):
        for mu in (1.0, 16.0):
            worst = max(worst, abs(
                subordination_oracle(a, mu, 1.0, "T")
                - mittag_leffler(MLParams(a, 1.0), -mu)
            ))
    check(f"subordination bridge (err {worst:.1e})", worst < 1e-6)

    # operator bounds
    g = GeneratorSpec(n_modes=8)
    rng = np.random.default_rng(0)
    ok = True
    from .special import gamma as _gamma
    for t in np.linspace(0.0, 1.0, 6):
        sym = op_symbols(g, 0.7, float(t), "T")
        symh = op_symbols(g, 0.7, float(t), "T_hat")
        for _ in range(10):
            s = rng.standard_normal(8)
            ok &= np.linalg.norm(sym * s) <= np.linalg.norm(s) + 1e-10
            ok &= (np.linalg.norm(symh * s)
                   <= 0.7 / _gamma(1.7) * np.linalg.norm(s) + 1e-10)
    check("solution operator bounds", ok)

    # resolvent contraction
    B = ControlOperator.diagonal(1.0 / np.arange(1, 9))
    Phi = assemble_gramian(g, B, 0.7, (0.0, 1.0))
    ctx = LpContext.for_generator(g)
    ok = True
    for _ in range(20):
        h = rng.standard_normal(8)
        lam = 10.0 ** rng.uniform(-3, 0)
        z = resolve(lam, Phi, h, ctx, g)
        ok &= np.linalg.norm(z) <= np.linalg.norm(h) * (1 + 1e-12)
    check("resolvent contraction", ok)

    # phase-space segment domination
    psi = InitialHistory.constant(rng.standard_normal(8), theta_max=8.0, nu=1.0)
    ts = np.linspace(0.0, 1.0, 33)
    tr = Trajectory(psi, ts, rng.standard_normal((33, 8)), {})
    check("phase seminorm domination", seminorm_domination_check(tr)["satisfied"])

    if failures:
        sys.exit(1)
    click.echo("all selftests passed")


if __name__ == "__main__":
    main()
