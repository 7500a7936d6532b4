"""Gronwall bound, solvability condition, config, sweep, CSV plumbing."""

import json

import numpy as np
import pytest
from mpmath import mp

from fracctrl.errors import DomainError
from fracctrl.experiment import (
    ConditionInputs,
    check_condition,
    config_to_spec,
    discrete_gronwall_bound,
    emit_csv,
    emit_plotdata,
    parse_config,
    parse_csv,
    run_lambda_sweep,
    run_regulator,
)


def _gronwall_worst_case(g, w):
    """Equality sequence f_n = g_n + sum_{k<n} w_k f_k (the extremal
    solution the bound must dominate)."""
    f = np.empty(len(g))
    for n in range(len(g)):
        f[n] = g[n] + np.dot(w[:n], f[:n])
    return f


class TestGronwall:
    def test_zero_weights(self):
        g = np.array([1.0, 2.0, 0.5])
        out = discrete_gronwall_bound(g, np.zeros(3))
        assert out == pytest.approx(g)

    def test_dominates_worst_case(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(1, 12))
            g = rng.uniform(0.0, 2.0, n)
            w = rng.uniform(0.0, 1.5, n)
            bound = discrete_gronwall_bound(g, w)
            f = _gronwall_worst_case(g, w)
            assert np.all(bound >= f - 1e-12 * np.maximum(1.0, f))

    def test_validation(self):
        with pytest.raises(DomainError):
            discrete_gronwall_bound([1.0, -1.0], [0.0, 0.0])
        with pytest.raises(DomainError):
            discrete_gronwall_bound([1.0], [0.0, 0.0])


def _ci(**kw):
    base = dict(M=1.0, M_tilde=1.0, alpha=0.7, alpha1=0.0, T=1.0, m=2,
                lam=0.5, H2=0.43, beta=0.0,
                l_k=(0.3, 0.3), zeta_norms=(0.5, 0.5, 0.5),
                psi0_norm=1.2, gamma_norm=0.1)
    base.update(kw)
    return ConditionInputs(**base)


def _condition_oracle(ci):
    """Independent high-precision evaluation of the solvability bound."""
    mp.dps = 50
    a, a1 = mp.mpf(ci.alpha), mp.mpf(ci.alpha1)
    M, Mt = mp.mpf(ci.M), mp.mpf(ci.M_tilde)
    T, lam = mp.mpf(ci.T), mp.mpf(ci.lam)
    H2, beta = mp.mpf(ci.H2), mp.mpf(ci.beta)
    m = ci.m
    mu = (a - a1) / (1 - a1)
    ga = mp.gamma(1 + a)
    R = (M * Mt * a / ga) ** 2 * 2 * T ** (2 * a - 1) / (lam * (2 * a - 1))
    tail = 1 + (m + 1) * (m + 2) * R / 2
    if m >= 1:
        tail += (m * (m + 1) * R ** 2 / 2) * mp.fsum(
            mp.e ** ((m + j) * (m - j - 1) * R / 2) for j in range(m)
        )
    shape = 2 * T ** (a - a1) / mu ** (1 - a1)
    return float(M * H2 * a * beta / ga * shape * tail)


class TestCondition:
    def test_beta_zero_gives_zero(self):
        rep = check_condition(_ci(beta=0.0))
        assert rep["lhs"] == 0.0
        assert rep["satisfied"]

    def test_beta_zero_survives_overflowing_tail(self):
        rep = check_condition(_ci(beta=0.0, lam=1e-6))
        assert rep["lhs"] == 0.0
        assert np.isfinite(rep["lhs"])

    def test_high_precision_recomputation(self):
        for lam in (2.0, 0.8, 0.4):
            ci = _ci(beta=0.05, lam=lam, alpha1=0.2, M_tilde=0.4)
            rep = check_condition(ci)
            assert rep["lhs"] == pytest.approx(
                _condition_oracle(ci), rel=1e-10
            )

    def test_monotone_in_lambda(self):
        # shrinking lambda inflates R and hence the bound
        vals = [check_condition(_ci(beta=0.05, M_tilde=0.3, lam=l))["lhs"]
                for l in np.geomspace(5.0, 0.5, 10)]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_monotone_in_beta_m_T(self):
        base = dict(beta=0.05, M_tilde=0.3, lam=2.0)
        l0 = check_condition(_ci(**base))["lhs"]
        assert check_condition(_ci(**dict(base, beta=0.1)))["lhs"] > l0
        assert check_condition(_ci(**dict(base, m=3)))["lhs"] > l0
        assert check_condition(_ci(**dict(base, T=1.5)))["lhs"] > l0

    def test_chained_offset_constants(self):
        ci = _ci(beta=0.02, M_tilde=0.3, lam=2.0)
        rep = check_condition(ci)
        R = rep["R_tilde"]
        N = rep["N"]
        # C_1 = N_1 + R N_0; C_2 = N_2 + R (N_0 e^R + N_1)
        assert rep["C"][0] == pytest.approx(N[0])
        assert rep["C"][1] == pytest.approx(N[1] + R * N[0], rel=1e-12)
        assert rep["C"][2] == pytest.approx(
            N[2] + R * (N[0] * np.exp(R) + N[1]), rel=1e-12
        )

    def test_offset_constant_composition(self):
        ci = _ci(beta=0.0, gamma_norm=0.0)
        rep = check_condition(ci)
        assert rep["N"][0] == pytest.approx(0.5 + 1.2)  # |zeta_0| + M|psi(0)|
        assert rep["N"][1] == pytest.approx(0.5 + 0.3)  # |zeta_1| + M l_1

    def test_validation(self):
        with pytest.raises(DomainError):
            _ci(lam=0.0)
        with pytest.raises(DomainError):
            _ci(alpha1=0.9)
        with pytest.raises(DomainError):
            _ci(M=-1.0)


class TestConfig:
    def test_minimal_fills_desk_defaults(self):
        cfg = config_to_spec({"alpha": 0.7})
        p = cfg.problem
        assert p.alpha == 0.7
        assert p.generator.n_modes == 8
        assert p.impulse_times == (0.3, 0.6)
        assert p.impulse_ends == (0.35, 0.65)
        assert cfg.lambda_grid == (1.0, 0.1, 0.01, 0.001)
        assert p.law == "standard"
        assert p.history.theta_max == 28.0

    def test_missing_alpha_named(self):
        with pytest.raises(DomainError, match="alpha"):
            config_to_spec({})

    def test_invalid_field(self):
        with pytest.raises(DomainError):
            config_to_spec({"alpha": 0.7, "modes": "many"})
        with pytest.raises(DomainError):
            config_to_spec({"alpha": 0.7, "lambda_grid": [0.1, 0.5]})

    def test_no_impulses(self):
        cfg = config_to_spec({"alpha": 0.7, "impulses": []})
        assert cfg.problem.m == 0
        assert len(cfg.problem.targets) == 1

    def test_parse_config_roundtrip(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"alpha": 0.75, "grid": {"nodes": 120}}))
        cfg = parse_config(str(path))
        assert cfg.problem.alpha == 0.75
        assert cfg.problem.n_nodes == 120

    def test_parse_config_rejects_bad_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(DomainError):
            parse_config(str(path))
        path2 = tmp_path / "list.json"
        path2.write_text("[1, 2]")
        with pytest.raises(DomainError):
            parse_config(str(path2))


@pytest.fixture(scope="module")
def small_sweep_rows():
    cfg = config_to_spec({
        "alpha": 0.7,
        "grid": {"nodes": 100},
        "lambda_grid": [0.5, 0.05],
    })
    return cfg, run_lambda_sweep(cfg)


class TestSweep:
    def test_row_shape(self, small_sweep_rows):
        cfg, rows = small_sweep_rows
        assert [r["lambda"] for r in rows] == [0.5, 0.05]
        for r in rows:
            assert r["picard_iters"] > 0
            assert r["wall_ms"] == 0.0
            assert r["condition_lhs"] == 0.0
            assert np.isfinite(r["terminal_error"])
            assert r["control_energy"] >= 0.0

    def test_error_decreases(self, small_sweep_rows):
        _, rows = small_sweep_rows
        assert rows[1]["terminal_error"] < rows[0]["terminal_error"]

    def test_nonconvergence_recorded_in_row(self):
        cfg = config_to_spec({
            "alpha": 0.7,
            "grid": {"nodes": 100},
            "lambda_grid": [0.5],
            "tolerances": {"max_iter": 1},
        })
        rows = run_lambda_sweep(cfg)
        assert rows[0]["picard_iters"] == -1
        assert np.isnan(rows[0]["terminal_error"])


class TestRegulator:
    def test_both_laws(self):
        cfg = config_to_spec({
            "alpha": 0.7,
            "grid": {"nodes": 100},
            "lambda_grid": [0.05],
        })
        rep = run_regulator(cfg)
        for law in ("standard", "alternative"):
            r = rep[law]
            assert r["identity_residual"] < 1e-6 * (1.0 + r["offset_norm"])
            assert r["terminal_error"] <= r["offset_norm"] * (1 + 1e-10)
            assert r["cost"] >= 0.0
            assert r["picard_iters"] >= 1


class TestCsv:
    ROWS = [
        {"lambda": 0.1, "terminal_error": 0.25, "control_energy": 1.5,
         "picard_iters": 6, "condition_lhs": 0.0, "wall_ms": 0.0},
        {"lambda": 0.01, "terminal_error": 0.03125,
         "control_energy": 2.125, "picard_iters": 7,
         "condition_lhs": 0.0, "wall_ms": 0.0},
    ]

    def test_round_trip(self, tmp_path):
        path = tmp_path / "rows.csv"
        emit_csv(self.ROWS, str(path))
        back = parse_csv(str(path))
        assert back == self.ROWS

    def test_byte_identical_reemission(self, tmp_path):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        emit_csv(self.ROWS, str(p1))
        emit_csv(self.ROWS, str(p2))
        assert p1.read_bytes() == p2.read_bytes()

    def test_header_checked(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,y\n1,2\n")
        with pytest.raises(DomainError):
            parse_csv(str(path))

    def test_plotdata(self, tmp_path):
        path = tmp_path / "plot.dat"
        emit_plotdata(self.ROWS, str(path))
        lines = path.read_text().splitlines()
        assert lines == ["0.1 0.25", "0.01 0.03125"]
