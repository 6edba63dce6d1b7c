import numpy as np
import pytest

from LimeJDS.exceptions import ConfigurationError
from LimeJDS.generator import apply_generator, one_step_expectation, validate_lipschitz
from LimeJDS.stability import scalar_exponent
from LimeJDS.systems import ScalarField, make_system

A, S, JUMP, RATE, THETA, SIGMA = -1.0, 0.3, 0.5, 1.0, 1.0, 1.0


@pytest.fixture
def system(make_linear):
    return make_linear(a=A, s=S, atoms=[(JUMP, RATE)], theta=THETA, sigma=SIGMA)


@pytest.mark.parametrize("z", [(1.0, 1.0), (-0.5, 2.0), (0.0, -0.3)])
def test_generator_of_quadratic(system, z):
    x1, x2 = z
    expected = -2 * THETA * x1**2 + SIGMA**2 + (2 * A + S**2 + RATE * JUMP**2) * x2**2
    value = apply_generator(system, ScalarField.quadratic(np.eye(2)), np.array(z))
    assert value == pytest.approx(expected, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("x2", [1e-3, 0.5, -2.0])
def test_generator_of_log_norm(system, x2):
    value = apply_generator(system, ScalarField.log_norm_squared(1, 1), np.array([0.7, x2]))
    assert value == pytest.approx(2 * scalar_exponent(A, S, [(JUMP, RATE)]), rel=1e-9)


def test_one_step_expectation_matches_euler_moments(system):
    z = np.array([1.0, 1.0])
    g = ScalarField.quadratic(np.eye(2))
    generator = apply_generator(system, g, z)
    drift = system.drift(z[None, :1], z[None, 1:])[0]
    h = 1e-2
    expected = g(z) + h * generator + h**2 * float(drift @ drift)
    assert one_step_expectation(system, g, z, h) == pytest.approx(expected, rel=1e-8)


def test_one_step_expectation_converges_to_generator(system):
    z = np.array([1.0, 1.0])
    g = ScalarField(lambda p: np.cos(p[..., 0]) + p[..., 1] ** 4)
    generator = apply_generator(system, g, z)
    steps = np.array([1e-1, 1e-2, 1e-3])
    errors = [abs((one_step_expectation(system, g, z, h) - g(z)) / h - generator) for h in steps]
    slope = np.polyfit(np.log(steps), np.log(errors), 1)[0]
    assert slope >= 0.8


def test_lipschitz_bounds_for_linear_system(system):
    report = validate_lipschitz(system, 64, 4.0, declared_K1=2.0, declared_K2=1.0, seed=3)
    assert THETA**2 <= report.k1_hat <= A**2 + S**2 + RATE * JUMP**2 + 1e-9
    assert report.k2_hat <= RATE * JUMP**2
    assert not report.unbounded_trend
    assert report.passes is True
    assert validate_lipschitz(system, 64, 4.0, declared_K1=0.5).passes is False
    assert validate_lipschitz(system, 64, 4.0).passes is None
    assert set(report.to_row()) == {"k1_hat", "k2_hat", "unbounded_trend", "declared_K1", "declared_K2", "passes"}


def test_cubic_drift_is_flagged():
    cubic = make_system(1, 1, drift1=lambda x1, x2: -(x1**3), diff1=1.0, drift2=lambda x1, x2: -x2)
    report = validate_lipschitz(cubic, 128, 8.0, declared_K1=100.0)
    assert report.unbounded_trend
    assert report.passes is False
    radii = sorted(report.k1_by_radius)
    assert report.k1_by_radius[radii[-1]] > report.k1_by_radius[radii[0]]


def test_lipschitz_needs_two_samples(system):
    with pytest.raises(ConfigurationError):
        validate_lipschitz(system, 1, 1.0)
