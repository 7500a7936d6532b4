"""Shared builders for the default desk-scale problem instances."""

import numpy as np
import pytest

from fracctrl.gramian import ControlOperator
from fracctrl.phase_space import DelaySpec, InitialHistory
from fracctrl.solver import ProblemSpec, Workspace
from fracctrl.state_space import GeneratorSpec


def exp_kernel(rate=2.0):
    return lambda s: np.exp(-rate * np.asarray(s, dtype=float))


def zero_kernel(s):
    return np.zeros_like(np.asarray(s, dtype=float))


def sine_impulse(amplitude=0.1):
    return lambda t, xi, z: amplitude * np.sin(xi) * np.sin(z)


def desk_history(n_modes=8, theta_max=28.0, nu=1.0):
    theta = np.linspace(-theta_max, 0.0, 64)
    coef = 1.0 / np.arange(1, n_modes + 1) ** 2
    return InitialHistory(theta, np.exp(theta)[:, None] * coef, nu=nu)


def first_mode_bump(n_modes=8, value=0.5):
    z = np.zeros(n_modes)
    z[0] = value
    return z


def desk_problem(lam=0.01, n_nodes=512, law="standard", **kw):
    """Full nonlinear desk instance: N=8, alpha=0.7, two impulses."""
    g = GeneratorSpec(n_modes=8)
    zeta = first_mode_bump()
    defaults = dict(
        alpha=0.7,
        T=1.0,
        generator=g,
        B=ControlOperator.diagonal(1.0 / np.arange(1, 9)),
        delay=DelaySpec("bounded", (0.2,)),
        memory_kernel=exp_kernel(),
        impulse_kernels=(sine_impulse(), sine_impulse()),
        history=desk_history(),
        targets=(zeta, zeta, zeta),
        lam=lam,
        impulse_times=(0.3, 0.6),
        impulse_ends=(0.35, 0.65),
        law=law,
        n_nodes=n_nodes,
    )
    defaults.update(kw)
    return ProblemSpec(**defaults)


def linear_problem(n_modes=4, alpha=0.8, lam=0.1, n_nodes=256, law="standard",
                   target=None, **kw):
    """Linear problem: no impulses, no memory term, no delay."""
    g = GeneratorSpec(n_modes=n_modes)
    if target is None:
        target = first_mode_bump(n_modes)
    defaults = dict(
        alpha=alpha,
        T=1.0,
        generator=g,
        B=ControlOperator.diagonal(1.0 / np.arange(1, n_modes + 1)),
        delay=DelaySpec("zero", ()),
        memory_kernel=zero_kernel,
        impulse_kernels=(),
        history=desk_history(n_modes),
        targets=(np.asarray(target, dtype=float),),
        lam=lam,
        law=law,
        n_nodes=n_nodes,
    )
    defaults.update(kw)
    return ProblemSpec(**defaults)


@pytest.fixture(scope="session")
def desk_workspace():
    p = desk_problem()
    return p, Workspace(p)


# Acceptance-criterion reporting: one PASS/FAIL line per criterion in the
# terminal summary, independent of pytest's capture settings.
_criterion_results = []


def record_criterion(number, description, ok):
    _criterion_results.append((number, description, bool(ok)))


def pytest_terminal_summary(terminalreporter):
    if not _criterion_results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for n, desc, ok in sorted(_criterion_results):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d} {status}: {desc}")
