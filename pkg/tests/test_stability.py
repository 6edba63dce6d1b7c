import math

import numpy as np
import pytest

from LimeJDS.config import IntegratorConfig
from LimeJDS.exceptions import DimensionMismatchError, NoInvariantMeasureError, ValidationError
from LimeJDS.stability import (
    REPORT_COLUMNS,
    OccupationMeasure,
    StabilityHypotheses,
    Verdict,
    check_hypotheses,
    estimate_invariant_measure,
    estimate_lambda,
    estimate_log_lyapunov_exponent,
    scalar_exponent,
    stability_verdict,
)
from LimeJDS.systems import ScalarField, make_system


def constant(value):
    return lambda x1: np.full(x1.shape[0], value)


def linear_hypotheses(a=-1.0, s=0.3, f1_shift=0.0):
    return StabilityHypotheses(
        V0=ScalarField.quadratic(np.eye(1)),
        V1=lambda x1: 1.0 + x1[:, 0] ** 2,
        f1=constant(-a + 0.5 * s * s + f1_shift),
        f2=constant(s * s + 0.1),
        m0=1.0,
        delta0=1.0,
        c_sigma=2.0,
        K3=3.5,
        K4=2.0,
        K5=10.0,
    )


def test_scalar_exponent():
    assert scalar_exponent(-1.0, 0.0) == -1.0
    assert scalar_exponent(0.5, 0.5) == pytest.approx(0.375)
    assert scalar_exponent(0.0, 0.0, [(1.0, 0.5)]) == pytest.approx(0.5 * (math.log(2.0) - 1.0))
    assert scalar_exponent(0.2, 0.3, [(-0.5, 1.0)]) == pytest.approx(0.2 - 0.045 + math.log(0.5) + 0.5)


def test_hypotheses_must_be_positive():
    with pytest.raises(ValidationError):
        StabilityHypotheses(V0=None, V1=None, f1=None, f2=None, m0=0.0)
    with pytest.raises(ValidationError):
        StabilityHypotheses(V0=None, V1=None, f1=None, f2=None, K5=float("inf"))


def test_occupation_measure_validation():
    with pytest.raises(ValidationError):
        OccupationMeasure(np.zeros((3, 1)), np.array([0.5, 0.5]))
    with pytest.raises(ValidationError):
        OccupationMeasure(np.zeros((2, 1)), np.array([0.7, 0.7]))
    with pytest.raises(ValidationError):
        OccupationMeasure.from_samples(np.zeros((0, 1)))
    occ = OccupationMeasure(np.array([[0.0], [2.0]]), np.array([0.25, 0.75]))
    assert occ.mean().tolist() == [1.5]
    assert occ.expect(lambda x1: x1[:, 0] ** 2) == pytest.approx(3.0)


def test_estimate_lambda_of_constant():
    occ = OccupationMeasure.from_samples(np.random.default_rng(0).standard_normal((400, 1)))
    estimate = estimate_lambda(occ, constant(0.7))
    assert estimate.value == 0.7
    assert estimate.stderr == 0.0


def test_estimate_lambda_batch_means():
    samples = np.arange(100.0).reshape(-1, 1)
    value, stderr = estimate_lambda(OccupationMeasure.from_samples(samples), lambda x1: x1[:, 0])
    assert value == pytest.approx(49.5)
    assert stderr > 0


def test_hypotheses_hold_for_linear_system(make_linear):
    system = make_linear(a=-1.0, s=0.3)
    report = check_hypotheses(system, linear_hypotheses(), samples=64)
    assert report.passed, report.worst
    assert report.checks["right_inverse"] is True


def test_hypotheses_detect_a_wrong_f1(make_linear):
    system = make_linear(a=-1.0, s=0.3)
    report = check_hypotheses(system, linear_hypotheses(f1_shift=1.0), samples=64)
    assert not report.passed
    assert report.checks["generator_bound"] is False
    assert report.worst["generator_bound"] == pytest.approx(1.0, abs=1e-6)


def test_hypotheses_without_diffusion_on_component_one(make_linear):
    system = make_linear(sigma=0.0)
    report = check_hypotheses(system, linear_hypotheses(), samples=16)
    assert report.checks["right_inverse"] is False


def test_invariant_measure_requires_finite_boundary_paths():
    exploding = make_system(1, 1, drift1=lambda x1, x2: 1000.0 * x1, drift2=lambda x1, x2: -x2)
    with pytest.raises(NoInvariantMeasureError):
        estimate_invariant_measure(exploding, [1.0], IntegratorConfig(dt=1e-2, horizon=1.0), ensemble=2)


def test_exponent_needs_nonzero_start(make_linear, quick_cfg):
    with pytest.raises(ValidationError):
        estimate_log_lyapunov_exponent(make_linear(), ([0.0], [0.0]), quick_cfg, ensemble=2)


def test_absorbed_paths_get_the_floor_slope(make_linear):
    # one Euler step with a * dt = -1 lands exactly on zero
    system = make_linear(a=-100.0)
    estimate = estimate_log_lyapunov_exponent(system, ([0.0], [1.0]), IntegratorConfig(dt=1e-2, horizon=4.0), ensemble=8)
    assert estimate.n_absorbed == 8
    assert np.all(estimate.slopes == estimate.floor)
    assert estimate.floor < -100.0


def test_stable_verdict(make_linear):
    system = make_linear(a=-1.0, s=0.3)
    cfg = IntegratorConfig(dt=1e-2, horizon=5.0, master_seed=3)
    occ = estimate_invariant_measure(system, [0.0], cfg, ensemble=4)
    report = stability_verdict(system, linear_hypotheses(), occ, cfg, ensemble=8)
    assert report.verdict is Verdict.STABLE
    assert report.lambda1_hat == pytest.approx(1.045)
    assert report.gamma0 == pytest.approx(0.5225)
    assert report.exponent_hat < 0
    assert list(report.to_row()) == REPORT_COLUMNS
    assert report.to_row()["verdict"] == "stable"


def test_unstable_indicated_verdict(make_linear):
    system = make_linear(a=1.0, s=0.0)
    cfg = IntegratorConfig(dt=1e-2, horizon=5.0)
    occ = estimate_invariant_measure(system, [0.0], cfg, ensemble=2)
    hyp = linear_hypotheses(a=1.0, s=0.0)
    report = stability_verdict(system, hyp, occ, cfg, ensemble=4)
    assert report.verdict is Verdict.UNSTABLE_INDICATED
    assert report.exponent_hat == pytest.approx(math.log(1.01) / 0.01, rel=1e-6)
    assert math.isnan(report.gamma0)


def test_verdict_checks_dimensions(make_linear, quick_cfg):
    occ = OccupationMeasure.from_samples(np.zeros((4, 2)))
    with pytest.raises(DimensionMismatchError):
        stability_verdict(make_linear(), linear_hypotheses(), occ, quick_cfg)


@pytest.mark.slow
@pytest.mark.parametrize(
    "a, s, atoms, horizon",
    [
        (-1.0, 0.0, [], 200.0),
        (0.5, 0.5, [], 40.0),
        (0.2, 0.3, [(-0.5, 1.0)], 200.0),
        (0.0, 0.0, [(1.0, 0.5)], 200.0),
    ],
)
def test_exponent_matches_closed_form(make_linear, a, s, atoms, horizon):
    system = make_linear(a=a, s=s, atoms=atoms)
    cfg = IntegratorConfig(dt=1e-3, horizon=horizon, master_seed=1)
    estimate = estimate_log_lyapunov_exponent(system, ([0.0], [1e-3]), cfg, ensemble=128)
    assert estimate.value == pytest.approx(scalar_exponent(a, s, atoms), abs=0.05)
    assert estimate.n_diverged == 0


@pytest.mark.slow
@pytest.mark.parametrize("theta, sigma", [(1.0, 1.0), (2.0, 0.5)])
def test_ou_second_moment(make_linear, theta, sigma):
    system = make_linear(theta=theta, sigma=sigma)
    cfg = IntegratorConfig(dt=1e-2, horizon=500.0, master_seed=2)
    occ = estimate_invariant_measure(system, [0.0], cfg, ensemble=32)
    second_moment = occ.expect(lambda x1: x1[:, 0] ** 2)
    assert second_moment == pytest.approx(sigma**2 / (2 * theta), rel=0.05)
