import math

import numpy as np
import pytest

from LimeJDS.exceptions import (
    BoundaryConditionError,
    CoefficientShapeError,
    DimensionMismatchError,
    ValidationError,
)
from LimeJDS.systems import CoefficientField, LevyMeasure, PathSample, ScalarField, make_system


def test_levy_measure_from_atoms():
    levy = LevyMeasure.from_atoms([(-0.5, 1.0), (0.25, 2.0)])
    assert levy.dim == 1
    assert levy.n_atoms == len(levy) == 2
    assert levy.total_mass == pytest.approx(3.0)
    marks = [float(mark[0]) for mark, _ in levy]
    assert marks == [-0.5, 0.25]
    assert levy.scaled(0.5).total_mass == pytest.approx(1.5)
    assert LevyMeasure.from_atoms([], dim=2).dim == 2


@pytest.mark.parametrize(
    "marks, weights",
    [
        ([[1.0]], [-1.0]),
        ([[0.0]], [1.0]),
        ([[np.inf]], [1.0]),
        ([[1.0], [2.0]], [1.0]),
    ],
)
def test_levy_measure_validation(marks, weights):
    with pytest.raises(ValidationError):
        LevyMeasure(marks=np.array(marks), weights=np.array(weights))


def test_levy_measure_is_read_only():
    levy = LevyMeasure.from_atoms([(1.0, 1.0)])
    with pytest.raises(ValueError):
        levy.weights[0] = 5.0


def test_constant_coefficients_broadcast():
    field = CoefficientField.constant([[1.0, 2.0]], name="diff")
    values = field(np.zeros((5, 1)), np.zeros((5, 1)))
    assert values.shape == (5, 1, 2)
    assert np.all(values[:, 0, 1] == 2.0)
    assert field(np.zeros(1), np.zeros(1)).shape == (1, 2)


def test_coefficient_shape_error():
    field = CoefficientField(lambda x1, x2: np.zeros((x1.shape[0], 3)), (2, 1), name="bad")
    with pytest.raises(CoefficientShapeError):
        field(np.zeros((4, 1)), np.zeros((4, 1)))


def test_jump_field_requires_mark():
    field = CoefficientField.zero(1, with_mark=True)
    with pytest.raises(ValidationError):
        field(np.zeros(1), np.zeros(1))


def test_boundary_condition_enforced():
    with pytest.raises(BoundaryConditionError):
        make_system(1, 1, drift2=lambda x1, x2: x2 + 0.1)
    with pytest.raises(BoundaryConditionError):
        make_system(1, 1, diff2=lambda x1, x2: x1)
    with pytest.raises(BoundaryConditionError):
        make_system(
            1, 1,
            jump2=lambda x1, x2, mark: np.ones_like(x2),
            levy2=LevyMeasure.from_atoms([(1.0, 1.0)]),
        )


def test_make_system_defaults(make_linear):
    system = make_system(2, 1, d1=2, drift2=lambda x1, x2: -x2, name="plain")
    assert (system.dims.l1, system.dims.l2, system.dims.state_dim) == (2, 1, 3)
    x1, x2 = system.split(np.arange(3.0))
    assert x1.tolist() == [0.0, 1.0] and x2.tolist() == [2.0]
    with pytest.raises(DimensionMismatchError):
        system.split(np.zeros(4))

    linear = make_linear(a=-2.0)
    drift = linear.drift(np.array([[1.0]]), np.array([[3.0]]))
    assert drift.tolist() == [[-1.0, -6.0]]


def test_replaced_drift_is_shape_checked():
    system = make_system(1, 1, drift2=lambda x1, x2: -x2)
    assert system.with_drift1(CoefficientField.constant([[1.0]])).dims == system.dims
    with pytest.raises(DimensionMismatchError):
        system.with_drift1(CoefficientField.zero(2))


def test_quadratic_field():
    Q = np.array([[2.0, 0.5], [0.5, 1.0]])
    g = ScalarField.quadratic(Q)
    z = np.array([1.0, -2.0])
    assert g(z) == pytest.approx(z @ Q @ z)
    assert np.allclose(g.grad(z), 2.0 * Q @ z)
    assert np.allclose(g.hess(z), 2.0 * Q)
    assert np.allclose(g.evaluate_many(np.stack([z, 2 * z])), [z @ Q @ z, 4 * z @ Q @ z])


def test_finite_difference_fallback():
    g = ScalarField(lambda z: np.sin(z[..., 0]) * z[..., 1] ** 2)
    z = np.array([0.3, 1.5])
    assert np.allclose(g.grad(z), [math.cos(0.3) * 2.25, 2 * math.sin(0.3) * 1.5], atol=1e-6)
    expected = np.array([[-math.sin(0.3) * 2.25, 2 * math.cos(0.3) * 1.5], [2 * math.cos(0.3) * 1.5, 2 * math.sin(0.3)]])
    assert np.allclose(g.hess(z), expected, atol=1e-3)


def test_default_u():
    u = ScalarField.default_u(2)
    assert u(np.array([0.3, 0.4])) == pytest.approx(math.log(2.0))
    assert u(np.array([3.0, 4.0])) == 0.0
    x = np.array([0.3, 0.4])
    assert np.allclose(u.grad(x), -x / 0.25)
    assert np.allclose(u.grad(np.array([3.0, 4.0])), 0.0)


def test_log_norm_squared_matches_finite_differences():
    exact = ScalarField.log_norm_squared(1, 2)
    numeric = ScalarField(exact.value)
    z = np.array([0.7, 0.4, -1.1])
    assert np.allclose(exact.grad(z), numeric.grad(z), atol=1e-6)
    assert np.allclose(exact.hess(z), numeric.hess(z), atol=1e-3)


def test_lifted_field():
    g = ScalarField.quadratic(np.eye(1)).lifted(1, 2, component=1)
    z = np.array([2.0, 5.0, 7.0])
    assert g(z) == pytest.approx(4.0)
    assert g.grad(z).tolist() == [4.0, 0.0, 0.0]
    with pytest.raises(ValidationError):
        ScalarField.quadratic(np.eye(1)).lifted(1, 2, component=3)


def test_path_sample_frame():
    sample = PathSample(times=[0.0, 0.5, 1.0], x1=np.zeros((3, 2)), x2=np.ones(3), path_index=4)
    frame = sample.to_frame()
    assert list(frame.columns) == ["time", "path", "x1_0", "x1_1", "x2_0"]
    assert (frame["path"] == 4).all()
    assert len(sample) == 3
    assert sample.final[1].tolist() == [1.0]


@pytest.mark.parametrize(
    "times, x1",
    [
        ([], np.zeros((0, 1))),
        ([0.0, 0.0], np.zeros((2, 1))),
        ([0.0, 1.0], np.zeros((3, 1))),
    ],
)
def test_path_sample_validation(times, x1):
    with pytest.raises(ValidationError):
        PathSample(times=times, x1=x1, x2=np.zeros((len(x1), 1)))
