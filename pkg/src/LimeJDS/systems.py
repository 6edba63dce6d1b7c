"""
Model objects: finite Lévy measures, coefficient fields, coupled
jump-diffusion systems, scalar test functions and sample paths.

All objects are immutable after construction. Coefficient evaluators are
batch aware: they receive ``x1`` of shape (P, l1) and ``x2`` of shape (P, l2)
(plus one mark vector for jump coefficients) and return an array that can be
read as (P, rows, cols). A (P, rows) result is accepted when cols == 1, and
an output of the declared shape alone is broadcast as a constant.
"""

from dataclasses import dataclass, replace
from typing import Callable, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np
import pandas as pd

from .config import engine_config
from .exceptions import (
    BoundaryConditionError,
    CoefficientShapeError,
    DimensionMismatchError,
    ValidationError,
)
from .rng import sampling_generator

logger = logging.getLogger(__name__)


def _readonly(values: np.ndarray) -> np.ndarray:
    values.setflags(write=False)
    return values


def broadcast_output(out, batch: int, shape: Tuple[int, int], name: str = "coefficient") -> np.ndarray:
    """
    Normalize an evaluator result to (batch, rows, cols).

    Args:
        out: evaluator output
        batch: number of points evaluated at once
        shape: declared (rows, cols)
        name: used in the error message

    Returns:
        np.ndarray: float array of shape (batch, rows, cols)
    """
    rows, cols = shape
    values = np.asarray(out, dtype=float)
    if values.shape == (batch, rows, cols):
        return values
    size = rows * cols
    if values.ndim >= 1 and values.shape[0] == batch and values.size == batch * size:
        return values.reshape(batch, rows, cols)
    if values.size == size:
        return np.broadcast_to(values.reshape(1, rows, cols), (batch, rows, cols))
    raise CoefficientShapeError(
        f"{name}: evaluator returned shape {values.shape}, expected ({batch}, {rows}, {cols})"
    )


@dataclass(frozen=True, eq=False)
class LevyMeasure:
    """Finite jump intensity measure made of weighted atoms (marks in rows)."""

    marks: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        marks = np.array(self.marks, dtype=float)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if marks.ndim == 1:
            marks = marks.reshape(-1, 1)
        if marks.ndim != 2 or marks.shape[0] != weights.shape[0]:
            raise ValidationError(
                f"LevyMeasure needs one mark row per weight, got marks {marks.shape} and {weights.shape[0]} weights"
            )
        if not (np.all(np.isfinite(weights)) and np.all(weights >= 0)):
            raise ValidationError("LevyMeasure weights must be finite and nonnegative")
        if not np.all(np.isfinite(marks)):
            raise ValidationError("LevyMeasure marks must be finite")
        if marks.shape[0] and np.any(np.all(marks == 0.0, axis=1)):
            raise ValidationError("LevyMeasure marks must be nonzero vectors")
        object.__setattr__(self, "marks", _readonly(marks))
        object.__setattr__(self, "weights", _readonly(weights))

    @classmethod
    def from_atoms(cls, atoms: Sequence[Tuple[Union[float, Sequence[float]], float]], dim: int = 1) -> "LevyMeasure":
        if not atoms:
            return cls.empty(dim)
        marks = np.array([np.atleast_1d(np.asarray(mark, dtype=float)) for mark, _ in atoms])
        return cls(marks=marks, weights=np.array([weight for _, weight in atoms], dtype=float))

    @classmethod
    def empty(cls, dim: int = 1) -> "LevyMeasure":
        return cls(marks=np.zeros((0, dim)), weights=np.zeros(0))

    @property
    def dim(self) -> int:
        return self.marks.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.marks.shape[0]

    @property
    def total_mass(self) -> float:
        return math.fsum(self.weights)

    def scaled(self, factor: float) -> "LevyMeasure":
        """Same marks, weights multiplied by ``factor``."""
        return LevyMeasure(marks=self.marks, weights=self.weights * factor)

    def __iter__(self) -> Iterator[Tuple[np.ndarray, float]]:
        for mark, weight in zip(self.marks, self.weights):
            yield mark, float(weight)

    def __len__(self) -> int:
        return self.n_atoms


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """One coefficient (b, sigma or gamma) of a component with declared shape."""

    evaluator: Callable[..., np.ndarray]
    shape: Tuple[int, int]
    lipschitz_hint: Optional[float] = None
    with_mark: bool = False
    depends_on_x1: bool = True
    name: str = "coefficient"

    def __post_init__(self):
        rows, cols = (int(v) for v in self.shape)
        if rows < 0 or cols < 0:
            raise ValidationError(f"{self.name}: negative shape {self.shape}")
        object.__setattr__(self, "shape", (rows, cols))
        if self.lipschitz_hint is not None and not self.lipschitz_hint >= 0:
            raise ValidationError(f"{self.name}: lipschitz_hint must be nonnegative")

    def __call__(self, x1: np.ndarray, x2: np.ndarray, mark: Optional[np.ndarray] = None) -> np.ndarray:
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        single = x1.ndim == 1
        if single:
            x1, x2 = x1[None, :], x2[None, :]
        if self.with_mark:
            if mark is None:
                raise ValidationError(f"{self.name}: jump coefficient evaluated without a mark")
            out = self.evaluator(x1, x2, np.asarray(mark, dtype=float))
        else:
            out = self.evaluator(x1, x2)
        values = broadcast_output(out, x1.shape[0], self.shape, self.name)
        return values[0] if single else values

    def vector(self, x1: np.ndarray, x2: np.ndarray, mark: Optional[np.ndarray] = None) -> np.ndarray:
        """Column coefficient as (P, rows)."""
        return self(x1, x2, mark)[..., 0]

    @classmethod
    def zero(cls, rows: int, cols: int = 1, with_mark: bool = False, name: str = "zero") -> "CoefficientField":
        def evaluator(x1, x2, *mark):
            return np.zeros((x1.shape[0], rows, cols))

        return cls(evaluator, (rows, cols), lipschitz_hint=0.0, with_mark=with_mark, depends_on_x1=False, name=name)

    @classmethod
    def constant(cls, matrix, with_mark: bool = False, name: str = "constant") -> "CoefficientField":
        values = np.array(matrix, dtype=float)
        if values.ndim < 2:
            values = values.reshape(-1, 1)
        values = _readonly(values)

        def evaluator(x1, x2, *mark):
            return values

        return cls(evaluator, values.shape, lipschitz_hint=0.0, with_mark=with_mark, depends_on_x1=False, name=name)

    @classmethod
    def from_x2(
        cls,
        fn: Callable[..., np.ndarray],
        shape: Tuple[int, int],
        with_mark: bool = False,
        lipschitz_hint: Optional[float] = None,
        name: str = "coefficient",
    ) -> "CoefficientField":
        """Field whose evaluator only sees x2 (and the mark)."""

        def evaluator(x1, x2, *mark):
            return fn(x2, *mark)

        return cls(evaluator, shape, lipschitz_hint=lipschitz_hint, with_mark=with_mark, depends_on_x1=False, name=name)


@dataclass(frozen=True)
class SystemDims:
    l1: int
    l2: int
    d1: int
    d2: int
    n1: int
    n2: int

    @property
    def state_dim(self) -> int:
        return self.l1 + self.l2


@dataclass(frozen=True, eq=False)
class CoupledJumpDiffusion:
    """
    Fully coupled jump diffusion (X1, X2) with X2 = 0 an equilibrium.

    Construction checks the declared shapes and, by sampling, that the
    component-2 coefficients vanish on {x2 = 0}.
    """

    dims: SystemDims
    drift1: CoefficientField
    drift2: CoefficientField
    diff1: CoefficientField
    diff2: CoefficientField
    jump1: CoefficientField
    jump2: CoefficientField
    levy1: LevyMeasure
    levy2: LevyMeasure
    name: str = "system"
    check_samples: int = 16
    check_radius: float = 3.0

    def __post_init__(self):
        self._check_shapes()
        if self.check_samples > 0:
            violation = self.boundary_violation(self.check_samples, self.check_radius)
            if violation > 1e-12:
                raise BoundaryConditionError(
                    f"{self.name}: component-2 coefficients do not vanish at x2 = 0 (max |value| = {violation:.3g})"
                )

    def _check_shapes(self) -> None:
        d = self.dims
        expected = {
            "drift1": (self.drift1, (d.l1, 1)),
            "diff1": (self.diff1, (d.l1, d.d1)),
            "jump1": (self.jump1, (d.l1, 1)),
            "drift2": (self.drift2, (d.l2, 1)),
            "diff2": (self.diff2, (d.l2, d.d2)),
            "jump2": (self.jump2, (d.l2, 1)),
        }
        for label, (field, shape) in expected.items():
            if field.shape != shape:
                raise DimensionMismatchError(f"{self.name}: {label} has shape {field.shape}, expected {shape}")
        if not (self.jump1.with_mark and self.jump2.with_mark):
            raise ValidationError(f"{self.name}: jump coefficients must take a mark argument")
        if self.drift1.with_mark or self.drift2.with_mark or self.diff1.with_mark or self.diff2.with_mark:
            raise ValidationError(f"{self.name}: drift and diffusion coefficients take no mark")
        if self.levy1.dim != d.n1 or self.levy2.dim != d.n2:
            raise DimensionMismatchError(
                f"{self.name}: Levy measure dims ({self.levy1.dim}, {self.levy2.dim}) != (n1, n2) = ({d.n1}, {d.n2})"
            )

    def boundary_violation(self, samples: int = 16, radius: float = 3.0, seed: int = 0) -> float:
        """Largest |component-2 coefficient| seen at sampled points (x1, 0)."""
        rng = sampling_generator(seed)
        x1 = rng.uniform(-radius, radius, size=(samples, self.dims.l1))
        x2 = np.zeros((samples, self.dims.l2))
        values = [np.abs(self.drift2(x1, x2)).max(initial=0.0), np.abs(self.diff2(x1, x2)).max(initial=0.0)]
        for mark, _ in self.levy2:
            values.append(np.abs(self.jump2(x1, x2, mark)).max(initial=0.0))
        return float(max(values))

    def drift(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        """Stacked drift (P, l1 + l2)."""
        return np.concatenate([self.drift1.vector(x1, x2), self.drift2.vector(x1, x2)], axis=-1)

    def split(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.dims.state_dim:
            raise DimensionMismatchError(f"{self.name}: state has {z.shape[-1]} entries, expected {self.dims.state_dim}")
        return z[..., : self.dims.l1], z[..., self.dims.l1 :]

    def with_drift1(self, drift1: CoefficientField, name: Optional[str] = None) -> "CoupledJumpDiffusion":
        return replace(self, drift1=drift1, name=name or self.name)


def _as_field(spec, shape: Tuple[int, int], with_mark: bool, name: str) -> CoefficientField:
    if spec is None:
        return CoefficientField.zero(*shape, with_mark=with_mark, name=name)
    if isinstance(spec, CoefficientField):
        return spec
    if callable(spec):
        return CoefficientField(spec, shape, with_mark=with_mark, name=name)
    return CoefficientField.constant(np.broadcast_to(np.asarray(spec, dtype=float), shape), with_mark=with_mark, name=name)


def make_system(
    l1: int,
    l2: int,
    d1: int = 1,
    d2: int = 1,
    *,
    drift1=None,
    drift2=None,
    diff1=None,
    diff2=None,
    jump1=None,
    jump2=None,
    levy1: Optional[LevyMeasure] = None,
    levy2: Optional[LevyMeasure] = None,
    name: str = "system",
    check_samples: int = 16,
) -> CoupledJumpDiffusion:
    """
    Build a CoupledJumpDiffusion from callables, constants or fields.

    Missing coefficients are zero and missing Levy measures are empty.
    Callables follow the batch convention of CoefficientField.
    """
    levy1 = levy1 if levy1 is not None else LevyMeasure.empty(1)
    levy2 = levy2 if levy2 is not None else LevyMeasure.empty(1)
    dims = SystemDims(l1=l1, l2=l2, d1=d1, d2=d2, n1=levy1.dim, n2=levy2.dim)
    return CoupledJumpDiffusion(
        dims=dims,
        drift1=_as_field(drift1, (l1, 1), False, "drift1"),
        drift2=_as_field(drift2, (l2, 1), False, "drift2"),
        diff1=_as_field(diff1, (l1, d1), False, "diff1"),
        diff2=_as_field(diff2, (l2, d2), False, "diff2"),
        jump1=_as_field(jump1, (l1, 1), True, "jump1"),
        jump2=_as_field(jump2, (l2, 1), True, "jump2"),
        levy1=levy1,
        levy2=levy2,
        name=name,
        check_samples=check_samples,
    )


@dataclass(frozen=True, eq=False)
class ScalarField:
    """
    Twice differentiable scalar function with optional exact derivatives.

    ``value`` maps an array (..., dim) to (...); ``gradient`` and ``hessian``
    act on a single point. Missing derivatives fall back to central
    differences with step FD_STEP * (1 + |z|).
    """

    value: Callable[[np.ndarray], np.ndarray]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "g"

    def __call__(self, z: np.ndarray) -> float:
        return float(self.value(np.asarray(z, dtype=float)))

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        out = np.asarray(self.value(points), dtype=float)
        if out.shape == points.shape[:1]:
            return out
        return np.array([float(self.value(p)) for p in points])

    @staticmethod
    def _step(z: np.ndarray) -> float:
        return engine_config.FD_STEP * (1.0 + float(np.linalg.norm(z)))

    def grad(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.gradient is not None:
            return np.asarray(self.gradient(z), dtype=float).reshape(z.shape)
        h = self._step(z)
        out = np.empty_like(z)
        for i in range(z.size):
            e = np.zeros_like(z)
            e[i] = h
            out[i] = (self(z + e) - self(z - e)) / (2.0 * h)
        return out

    def hess(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        n = z.size
        if self.hessian is not None:
            return np.asarray(self.hessian(z), dtype=float).reshape(n, n)
        h = self._step(z)
        out = np.empty((n, n))
        if self.gradient is not None:
            for i in range(n):
                e = np.zeros_like(z)
                e[i] = h
                out[i] = (self.grad(z + e) - self.grad(z - e)) / (2.0 * h)
            return 0.5 * (out + out.T)
        # Second differences need a larger step than the gradient fallback
        h = h * 1e2
        f0 = self(z)
        for i in range(n):
            ei = np.zeros_like(z)
            ei[i] = h
            out[i, i] = (self(z + ei) - 2.0 * f0 + self(z - ei)) / h**2
            for j in range(i + 1, n):
                ej = np.zeros_like(z)
                ej[j] = h
                out[i, j] = out[j, i] = (
                    self(z + ei + ej) - self(z + ei - ej) - self(z - ei + ej) + self(z - ei - ej)
                ) / (4.0 * h**2)
        return out

    def lifted(self, l1: int, l2: int, component: int) -> "ScalarField":
        """Same function read on one component of z = (x1, x2)."""
        if component not in (1, 2):
            raise ValidationError(f"component must be 1 or 2, got {component}")
        block = slice(0, l1) if component == 1 else slice(l1, l1 + l2)
        n = l1 + l2

        def value(z):
            return self.value(np.asarray(z)[..., block])

        def gradient(z):
            out = np.zeros(n)
            out[block] = self.grad(z[block])
            return out

        def hessian(z):
            out = np.zeros((n, n))
            out[block, block] = self.hess(z[block])
            return out

        return ScalarField(value, gradient, hessian, name=f"{self.name}[x{component}]")

    @classmethod
    def quadratic(cls, Q) -> "ScalarField":
        """z -> zᵀQz for symmetric Q."""
        Q = _readonly(np.array(Q, dtype=float))

        def value(z):
            return np.einsum("...i,ij,...j->...", z, Q, z)

        return cls(value, lambda z: (Q + Q.T) @ z, lambda z: Q + Q.T, name="quadratic")

    @classmethod
    def log_norm_squared(cls, l1: int, l2: int) -> "ScalarField":
        """z -> ln|x2|²."""

        def value(z):
            return np.log(np.sum(np.asarray(z)[..., l1:] ** 2, axis=-1))

        def gradient(z):
            x2 = z[l1:]
            out = np.zeros(l1 + l2)
            out[l1:] = 2.0 * x2 / (x2 @ x2)
            return out

        def hessian(z):
            x2 = z[l1:]
            r2 = x2 @ x2
            out = np.zeros((l1 + l2, l1 + l2))
            out[l1:, l1:] = 2.0 * (np.eye(l2) * r2 - 2.0 * np.outer(x2, x2)) / r2**2
            return out

        return cls(value, gradient, hessian, name="log|x2|^2")

    @classmethod
    def default_u(cls, l2: int) -> "ScalarField":
        """U(x2) = max(-ln|x2|, 0) on R^{l2}."""

        def value(x2):
            return np.maximum(-np.log(np.linalg.norm(np.asarray(x2, dtype=float), axis=-1)), 0.0)

        def gradient(x2):
            r2 = x2 @ x2
            return -x2 / r2 if r2 < 1.0 else np.zeros(l2)

        def hessian(x2):
            r2 = x2 @ x2
            if r2 >= 1.0:
                return np.zeros((l2, l2))
            return (2.0 * np.outer(x2, x2) - np.eye(l2) * r2) / r2**2

        return cls(value, gradient, hessian, name="U")


class JumpEvent(NamedTuple):
    time: float
    component: int
    mark_index: int


@dataclass(frozen=True, eq=False)
class PathSample:
    """Recorded trajectory of one path on the record grid."""

    times: np.ndarray
    x1: np.ndarray  # (T, l1)
    x2: np.ndarray  # (T, l2)
    jump_log: Tuple[JumpEvent, ...] = ()
    path_index: int = 0

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise ValidationError("PathSample needs a nonempty 1-d time grid")
        if np.any(np.diff(times) <= 0):
            raise ValidationError("PathSample times must be strictly increasing")
        if len(self.x1) != times.size or len(self.x2) != times.size:
            raise ValidationError("PathSample states and times differ in length")
        x1 = np.asarray(self.x1, dtype=float).reshape(times.size, -1)
        x2 = np.asarray(self.x2, dtype=float).reshape(times.size, -1)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "x1", x1)
        object.__setattr__(self, "x2", x2)

    @property
    def states(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        return list(zip(self.x1, self.x2))

    @property
    def final(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.x1[-1], self.x2[-1]

    def __len__(self) -> int:
        return len(self.times)

    def to_frame(self) -> pd.DataFrame:
        """Flat frame: time, path, x1_0.., x2_0.."""
        frame = pd.DataFrame({"time": self.times, "path": self.path_index})
        for i in range(self.x1.shape[1]):
            frame[f"x1_{i}"] = self.x1[:, i]
        for i in range(self.x2.shape[1]):
            frame[f"x2_{i}"] = self.x2[:, i]
        return frame
