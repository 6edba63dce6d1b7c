import math
from dataclasses import replace

import numpy as np
import pytest

from LimeJDS.config import IntegratorConfig
from LimeJDS.coupling import (
    DECAY_COLUMNS,
    CouplingConfig,
    CouplingGridPoint,
    estimate_coupling_decay,
    girsanov_drift,
    simulate_coupled_triple,
    stopping_time_tau_delta,
)
from LimeJDS.exceptions import CouplingConfigError, DimensionMismatchError, RankDeficiencyError


@pytest.fixture
def ccfg():
    return CouplingConfig.from_estimates(lambda1=1.0, lambda2=2.0, m0=1.0, alpha0=1.0, K2=0.0, delta=0.1)


def test_recipe_constants(ccfg):
    assert ccfg.gamma0 == pytest.approx(0.5)
    assert ccfg.varsigma0 == pytest.approx(1.0 / 6.0)
    assert ccfg.C_alpha0 == pytest.approx(16.0 * math.exp(-2.0), rel=1e-5)
    assert ccfg.alpha == pytest.approx(ccfg.varsigma0 / (4.0 * ccfg.C_alpha0))
    assert ccfg.lambda0 == pytest.approx(0.0625)
    assert ccfg.lam == pytest.approx(25.0)


def test_c_alpha0_sup():
    assert CouplingConfig.c_alpha0_sup(1.0) == pytest.approx(16.0 * math.exp(-2.0), rel=1e-6)
    assert CouplingConfig.c_alpha0_sup(2.0) == pytest.approx(4.0 * math.exp(-2.0), rel=1e-6)


@pytest.mark.parametrize(
    "changes",
    [
        {"lam": 20.0},
        {"lam": 30.0, "K2": 1.0},
        {"lambda0": 0.125},
        {"lambda0": 0.0},
        {"delta": 0.0},
        {"C_alpha0": 1.0},
    ],
)
def test_config_validation(ccfg, changes):
    values = dict(
        lam=ccfg.lam, lambda0=ccfg.lambda0, gamma0=ccfg.gamma0, varsigma0=ccfg.varsigma0,
        alpha=ccfg.alpha, C_alpha0=ccfg.C_alpha0, delta=ccfg.delta, K2=ccfg.K2, alpha0=ccfg.alpha0,
    )
    values.update(changes)
    with pytest.raises(CouplingConfigError):
        CouplingConfig(**values)


def test_recipe_needs_positive_averages():
    with pytest.raises(CouplingConfigError):
        CouplingConfig.from_estimates(lambda1=-0.1, lambda2=1.0, m0=1.0, alpha0=1.0, K2=0.0, delta=0.1)


def test_zero_gap_reproduces_boundary_path(make_linear, ccfg):
    system = make_linear(a=-1.0, s=0.3, coupling=1.0)
    cfg = IntegratorConfig(dt=1e-2, horizon=2.0, master_seed=4)
    triple = simulate_coupled_triple(system, [0.3], ([0.3], [0.0]), ccfg, cfg)
    assert np.array_equal(triple.x1, triple.x1_tilde)
    assert np.all(triple.x2_tilde == 0.0)
    assert stopping_time_tau_delta(triple, ccfg) is None


def test_gap_closes_under_relaxation(make_linear, ccfg):
    system = make_linear(a=-1.0, s=0.3, coupling=1.0)
    cfg = IntegratorConfig(dt=1e-3, horizon=1.0, master_seed=4)
    triple = simulate_coupled_triple(system, [1.0], ([0.0], [1e-4]), ccfg, cfg)
    gap = np.abs(triple.x1 - triple.x1_tilde)[:, 0]
    assert gap[0] == 1.0
    assert gap[-1] < 1e-3


def test_tau_is_zero_when_started_outside(make_linear, ccfg):
    system = make_linear(a=-1.0)
    cfg = IntegratorConfig(dt=1e-2, horizon=1.0)
    triple = simulate_coupled_triple(system, [0.0], ([0.0], [ccfg.delta]), ccfg, cfg)
    assert stopping_time_tau_delta(triple, ccfg) == 0.0


def test_tau_detects_growth(make_linear, ccfg):
    system = make_linear(a=2.0)
    cfg = IntegratorConfig(dt=1e-2, horizon=3.0)
    triple = simulate_coupled_triple(system, [0.0], ([0.0], [0.5 * ccfg.delta]), ccfg, cfg)
    tau = stopping_time_tau_delta(triple, ccfg)
    # |x2| grows like exp(2t) against the shrinking barrier delta exp(-t / 2)
    assert tau == pytest.approx(math.log(2.0) / 2.5, abs=0.02)


def test_triple_start_dimensions(make_linear, ccfg, quick_cfg):
    with pytest.raises(DimensionMismatchError):
        simulate_coupled_triple(make_linear(), [0.0, 1.0], ([0.0], [0.0]), ccfg, quick_cfg)


def test_girsanov_drift(make_linear, ccfg):
    system = make_linear(sigma=2.0)
    gain = replace(ccfg, lam=30.0)
    assert girsanov_drift([1.0], [0.5], system, gain) == pytest.approx([7.5])
    assert girsanov_drift([0.6], [0.5], system, gain) == pytest.approx([1.5])
    assert girsanov_drift([0.5], [0.5], system, gain) == pytest.approx([0.0])
    with pytest.raises(RankDeficiencyError):
        girsanov_drift([1.0], [0.5], make_linear(sigma=0.0), gain)


def test_coupling_decay_report(make_linear, ccfg):
    system = make_linear(a=-1.0, s=0.3, coupling=1.0)
    cfg = IntegratorConfig(dt=1e-2, horizon=2.0, master_seed=5)
    grid = [
        CouplingGridPoint(np.array([0.5]), np.array([0.0]), 0.1),
        CouplingGridPoint(np.array([1.0]), np.array([-1.0]), 0.05),
    ]
    report = estimate_coupling_decay(system, grid, ccfg, cfg, ensemble=4, c_sigma=1.0)
    frame = report.to_frame()
    assert list(frame.columns) == DECAY_COLUMNS
    assert len(frame) == 2
    assert frame["gap0"].tolist() == [0.5, 2.0]
    assert np.all(frame["ratio"] > 0)
    assert np.all((frame["budget_frequency"] >= 0) & (frame["budget_frequency"] <= 1))
    assert report.c_tilde_hat == frame["ratio"].max()
    assert frame["paths"].tolist() == [4, 4]


def test_coupling_decay_with_every_path_diverged(make_linear, ccfg):
    system = make_linear(a=-1.0, theta=-3000.0, coupling=1.0)
    grid = [CouplingGridPoint(np.array([1.0]), np.array([0.5]), 0.1)]
    report = estimate_coupling_decay(system, grid, ccfg, IntegratorConfig(dt=1e-2, horizon=1.0), ensemble=2, c_sigma=1.0)
    row = report.to_frame().iloc[0]
    assert row["paths"] == 0
    assert math.isnan(row["ratio"]) and math.isnan(row["stderr"])
    assert math.isnan(row["budget_frequency"])
    assert math.isnan(report.c_tilde_hat)


def test_diverged_grid_point_is_left_out_of_c_tilde(make_linear, ccfg):
    system = make_linear(a=-1.0, s=0.3, coupling=1.0)
    cfg = IntegratorConfig(dt=1e-2, horizon=1.0, master_seed=5)
    report = estimate_coupling_decay(
        system, [CouplingGridPoint(np.array([0.5]), np.array([0.0]), 0.1)], ccfg, cfg, ensemble=2, c_sigma=1.0
    )
    report.rows.append(dict(report.rows[0], ratio=float("nan"), paths=0))
    assert report.c_tilde_hat == report.rows[0]["ratio"]


def test_coupling_decay_needs_a_grid(make_linear, ccfg, quick_cfg):
    with pytest.raises(CouplingConfigError):
        estimate_coupling_decay(make_linear(), [], ccfg, quick_cfg, ensemble=2)


@pytest.mark.slow
def test_decay_ratio_is_uniform_over_the_grid(make_linear, ccfg):
    system = make_linear(a=-1.0, s=0.3, coupling=1.0)
    cfg = IntegratorConfig(dt=1e-3, horizon=10.0, master_seed=6)
    grid = [
        CouplingGridPoint(np.array([x]), np.array([-x]), delta)
        for x in (0.1, 1.0, 3.0)
        for delta in (0.1, 0.01)
    ]
    report = estimate_coupling_decay(system, grid, ccfg, cfg, ensemble=32)
    ratios = report.ratios
    assert np.all(np.isfinite(ratios))
    assert ratios.max() / ratios.min() < 1e2
