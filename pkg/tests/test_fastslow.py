import math

import numpy as np
import pytest

from LimeJDS.config import IntegratorConfig
from LimeJDS.exceptions import ConfigurationError, DimensionMismatchError, ValidationError
from LimeJDS.fastslow import (
    SWEEP_COLUMNS,
    FastSlowSystem,
    averaged_drift_matrix,
    averaged_exponent,
    lambda_eps,
    lambda_star,
    lambda_sweep,
    simulate_fastslow,
)
from LimeJDS.integrator import simulate_path
from LimeJDS.polar import LinearizedCoefficients, system_from_linearization
from LimeJDS.stability import OccupationMeasure

B0, B, MEAN, S2 = -0.5, 1.0, 0.5, 0.2


def tanh_linearization(s2=S2):
    return LinearizedCoefficients(
        1, 1,
        lambda y1: (B0 + B * np.tanh(y1[:, 0]))[:, None, None],
        [np.array([[s2]])],
        noise_depends_on_y1=False,
    )


def fast_slow(epsilon=0.1, sigma1=1.0):
    lin = tanh_linearization()
    base = system_from_linearization(
        lin,
        drift1=lambda x1, x2: -(x1 - MEAN), diff1=sigma1, name="tanh",
    )
    return FastSlowSystem(base, epsilon, lin)


def test_validation():
    fs = fast_slow()
    with pytest.raises(ValidationError):
        fs.with_epsilon(0.0)
    noisy = LinearizedCoefficients(1, 1, np.array([[-1.0]]), [lambda y1: y1[:, :, None]], noise_depends_on_y1=True)
    with pytest.raises(ValidationError):
        FastSlowSystem(fs.base, 0.1, noisy)
    other = LinearizedCoefficients(1, 2, np.eye(2), noise_depends_on_y1=False)
    with pytest.raises(DimensionMismatchError):
        FastSlowSystem(fs.base, 0.1, other)


def test_noise_must_not_see_y1():
    lin = tanh_linearization()
    base = system_from_linearization(
        LinearizedCoefficients(1, 1, np.array([[-1.0]]), [np.array([[S2]])], noise_depends_on_y1=True),
        drift1=lambda x1, x2: -x1, diff1=1.0,
    )
    with pytest.raises(ValidationError):
        FastSlowSystem(base, 0.1, lin)


def test_resolution():
    fs = fast_slow(epsilon=0.1)
    coarse = IntegratorConfig(dt=0.02, horizon=1.0)
    with pytest.raises(ConfigurationError):
        fs.check_resolution(coarse)
    with pytest.raises(ConfigurationError):
        simulate_fastslow(fs, ([0.0], [1.0]), coarse)
    assert fs.resolved(coarse).dt == pytest.approx(0.01)
    fine = IntegratorConfig(dt=0.005, horizon=1.0)
    assert fs.resolved(fine) is fine


def test_unit_epsilon_is_the_base_system():
    fs = fast_slow(epsilon=1.0)
    cfg = IntegratorConfig(dt=1e-2, horizon=1.0, master_seed=8)
    fast = simulate_fastslow(fs, ([0.2], [1.0]), cfg, path_index=1)
    plain = simulate_path(fs.base, ([0.2], [1.0]), cfg, path_index=1)
    assert np.array_equal(fast.x1, plain.x1)
    assert np.array_equal(fast.x2, plain.x2)


def test_averaged_drift_matrix():
    fs = fast_slow()
    occ = OccupationMeasure(np.array([[0.0], [1.0]]), np.array([0.5, 0.5]))
    expected = B0 + 0.5 * B * math.tanh(1.0)
    assert averaged_drift_matrix(fs, occ) == pytest.approx(np.array([[expected]]))
    with pytest.raises(DimensionMismatchError):
        averaged_drift_matrix(fs, OccupationMeasure.from_samples(np.zeros((2, 2))))


def test_lambda_star_without_fast_noise():
    fs = fast_slow(sigma1=0.0)
    cfg = IntegratorConfig(dt=1e-2, horizon=2.0)
    star = lambda_star(fs, cfg, ensemble=2, y1_0=[MEAN], theta0=[1.0])
    b2_bar = B0 + B * math.tanh(MEAN)
    assert star.B2_bar == pytest.approx(np.array([[b2_bar]]))
    assert star.value == pytest.approx(2.0 * b2_bar - S2**2)
    assert star.integral.log_quadratic.value == pytest.approx(star.value)


def test_lambda_eps_of_frozen_fast_variable():
    fs = fast_slow(epsilon=0.5, sigma1=0.0)
    cfg = IntegratorConfig(dt=1e-2, horizon=2.0)
    result = lambda_eps(fs, cfg, ensemble=2, theta0=[1.0], y1_0=[MEAN])
    assert result.value == pytest.approx(2.0 * (B0 + B * math.tanh(MEAN)) - S2**2)


def test_averaged_exponent():
    fs = fast_slow(sigma1=0.0)
    cfg = IntegratorConfig(dt=1e-3, horizon=4.0, master_seed=3)
    estimate = averaged_exponent(fs, np.array([[-0.3]]), cfg, ensemble=64, y2_0=[1.0])
    assert estimate.value == pytest.approx(-0.3 - 0.5 * S2**2, abs=0.1)


def test_sweep_frame():
    fs = fast_slow()
    cfg = IntegratorConfig(dt=1e-2, horizon=1.0)
    frame = lambda_sweep(fs, [1.0, 0.5], cfg, ensemble=2)
    assert list(frame.columns) == SWEEP_COLUMNS
    assert len(frame) == 6
    assert frame["epsilon"].tolist() == [1.0, 1.0, 0.5, 0.5, 0.0, 0.0]
    assert set(frame["variant"]) == {"log-quadratic", "generator"}
    with pytest.raises(ConfigurationError):
        lambda_sweep(fs, [0.05], cfg, ensemble=2, include_star=False, refine=False)


@pytest.mark.slow
def test_lambda_eps_approaches_lambda_star():
    fs = fast_slow()
    cfg = IntegratorConfig(dt=1e-3, horizon=50.0, master_seed=12)
    star = lambda_star(fs, cfg, ensemble=16)
    gaps = [abs(lambda_eps(fs.with_epsilon(eps), cfg, ensemble=16).value - star.value) for eps in (1.0, 0.1, 0.01)]
    assert gaps[-1] < 0.05
    assert gaps[-1] <= gaps[0] + 0.02
