"""
Systems linearizable in y2: polar coordinates Theta = Y2 / |Y2|, R = |Y2|²,
their coefficients at r = 0, the boundary sphere process (Y1, Theta) and the
stability integral of the drift of ln R.

Normalization: every h4 value here is the drift of ln|Y2|², i.e. twice the
exponent of |Y2|.
"""

from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np

from .config import IntegratorConfig, engine_config
from .exceptions import DegenerateJumpError, DimensionMismatchError, ValidationError
from .integrator import BatchStepper, GaussianChannel, PoissonChannel, euler_increment, run_chunked
from .rng import sampling_generator
from .stability import OccupationMeasure
from .systems import CoefficientField, CoupledJumpDiffusion, LevyMeasure, broadcast_output, make_system
from .utils import EnsembleStatistics, Estimate

logger = logging.getLogger(__name__)

MatrixMap = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]
JumpMatrixMap = Union[np.ndarray, Callable[[np.ndarray, np.ndarray], np.ndarray]]


@dataclass(frozen=True, eq=False)
class LinearizedCoefficients:
    """
    Linear parts in y2 of the component-2 coefficients:
    b2 ≈ B2(y1) y2, sigma2 column l ≈ Sigma2[l](y1) y2, gamma2 ≈ Gamma2(y1, phi) y2.

    Each map is a constant (l2, l2) matrix or a batch callable of y1 (P, l1)
    (Gamma2 also receives the mark).
    """

    l1: int
    l2: int
    B2: MatrixMap
    Sigma2: Sequence[MatrixMap] = ()
    Gamma2: Optional[JumpMatrixMap] = None
    noise_depends_on_y1: bool = True

    def __post_init__(self):
        object.__setattr__(self, "Sigma2", tuple(self.Sigma2))
        probe = np.zeros((1, self.l1))
        self.B(probe)
        self.sigmas(probe)

    @property
    def d2(self) -> int:
        return len(self.Sigma2)

    def _matrix(self, spec, y1: np.ndarray, *extra) -> np.ndarray:
        values = spec(y1, *extra) if callable(spec) else spec
        return broadcast_output(values, y1.shape[0], (self.l2, self.l2), "linearized coefficient")

    def B(self, y1: np.ndarray) -> np.ndarray:
        return self._matrix(self.B2, y1)

    def sigmas(self, y1: np.ndarray) -> List[np.ndarray]:
        return [self._matrix(S, y1) for S in self.Sigma2]

    def gamma(self, y1: np.ndarray, mark: np.ndarray) -> np.ndarray:
        if self.Gamma2 is None:
            return np.zeros((y1.shape[0], self.l2, self.l2))
        if callable(self.Gamma2):
            return self._matrix(self.Gamma2, y1, mark)
        return self._matrix(self.Gamma2, y1)

    def averaged(self, B2_bar: np.ndarray) -> "LinearizedCoefficients":
        """Same noise maps with the drift matrix frozen at B2_bar."""
        return replace(self, B2=np.asarray(B2_bar, dtype=float))

    def bound_report(self, samples: int = 64, radius: float = 3.0, seed: int = 0) -> Dict[str, float]:
        """Largest matrix norms and Sigma2 condition numbers over sampled y1."""
        y1 = sampling_generator(seed).uniform(-radius, radius, size=(samples, self.l1))
        report = {"B2_norm": float(np.max(np.linalg.norm(self.B(y1), ord=2, axis=(1, 2))))}
        for index, S in enumerate(self.sigmas(y1)):
            report[f"Sigma2_{index}_norm"] = float(np.max(np.linalg.norm(S, ord=2, axis=(1, 2))))
            report[f"Sigma2_{index}_cond"] = float(np.max(np.linalg.cond(S)))
        return report


@dataclass(frozen=True)
class PolarState:
    y1: np.ndarray
    theta: np.ndarray
    r: float

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if abs(float(np.linalg.norm(theta)) - 1.0) > 1e-9:
            raise ValidationError(f"theta must be a unit vector, |theta| = {np.linalg.norm(theta)}")
        if not self.r >= 0:
            raise ValidationError(f"r must be nonnegative, got {self.r}")

    @classmethod
    def from_cartesian(cls, y1, y2) -> "PolarState":
        y2 = np.asarray(y2, dtype=float)
        norm = float(np.linalg.norm(y2))
        if norm == 0.0:
            raise ValidationError("the origin has no angular part")
        return cls(np.asarray(y1, dtype=float), y2 / norm, norm * norm)

    def to_cartesian(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.y1, math.sqrt(self.r) * np.asarray(self.theta)


def _apply(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("pij,pj->pi", M, v)


def _quad(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("pi,pij,pj->p", v, M, v)


def _jump_image(lin: LinearizedCoefficients, y1: np.ndarray, theta: np.ndarray, mark: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(Gamma theta, theta + Gamma theta)."""
    gt = _apply(lin.gamma(y1, mark), theta)
    return gt, theta + gt


def _g3(lin, y1, theta, mark) -> np.ndarray:
    _, phi = _jump_image(lin, y1, theta, mark)
    norm = np.linalg.norm(phi, axis=1)
    if np.any(norm == 0.0):
        raise DegenerateJumpError("jump maps theta to the origin: |theta + Gamma2 theta| = 0")
    return phi / norm[:, None] - theta


def _g1(lin, y1, theta, nu2: Optional[LevyMeasure], g3s: Optional[List[np.ndarray]] = None) -> np.ndarray:
    B = lin.B(y1)
    out = _apply(B, theta) - _quad(B, theta)[:, None] * theta
    for S in lin.sigmas(y1):
        st = _apply(S, theta)
        s = np.einsum("pi,pi->p", theta, st)
        out = out - s[:, None] * st + (0.5 * (-np.sum(st**2, axis=1) + 3.0 * s**2))[:, None] * theta
    if nu2 is not None:
        for atom, (mark, weight) in enumerate(nu2):
            gt, _ = _jump_image(lin, y1, theta, mark)
            g3 = g3s[atom] if g3s is not None else _g3(lin, y1, theta, mark)
            out = out + weight * (g3 - gt + np.einsum("pi,pi->p", theta, gt)[:, None] * theta)
    return out


def _g2(lin, y1, theta) -> np.ndarray:
    """(P, l2, d2): column l is Sigma_l theta - theta thetaᵀ Sigma_l theta."""
    columns = []
    for S in lin.sigmas(y1):
        st = _apply(S, theta)
        columns.append(st - np.einsum("pi,pi->p", theta, st)[:, None] * theta)
    if not columns:
        return np.zeros(theta.shape + (0,))
    return np.stack(columns, axis=2)


def _h4(lin, y1, theta, nu2: Optional[LevyMeasure], generator: bool) -> np.ndarray:
    out = 2.0 * _quad(lin.B(y1), theta)
    for S in lin.sigmas(y1):
        st = _apply(S, theta)
        out = out + np.sum(st**2, axis=1) - 2.0 * np.einsum("pi,pi->p", theta, st) ** 2
    if nu2 is not None:
        for mark, weight in nu2:
            gt, phi = _jump_image(lin, y1, theta, mark)
            phi2 = np.sum(phi**2, axis=1)
            if np.any(phi2 == 0.0):
                raise DegenerateJumpError("jump maps theta to the origin: |theta + Gamma2 theta| = 0")
            if generator:
                out = out + weight * (np.log(phi2) - 2.0 * np.einsum("pi,pi->p", theta, gt))
            else:
                out = out + weight * (np.log(phi2) - phi2 + 1.0)
    return out


def _single(lin: LinearizedCoefficients, y1, theta) -> Tuple[np.ndarray, np.ndarray]:
    y1 = np.atleast_1d(np.asarray(y1, dtype=float)).reshape(1, -1)
    theta = np.atleast_1d(np.asarray(theta, dtype=float)).reshape(1, -1)
    if y1.shape[1] != lin.l1 or theta.shape[1] != lin.l2:
        raise DimensionMismatchError(f"point dims ({y1.shape[1]}, {theta.shape[1]}) != ({lin.l1}, {lin.l2})")
    if abs(float(np.linalg.norm(theta)) - 1.0) > 1e-9:
        raise ValidationError(f"theta must be a unit vector, |theta| = {np.linalg.norm(theta)}")
    return y1, theta


def coeff_g1(lin: LinearizedCoefficients, y1, theta, nu2: Optional[LevyMeasure] = None) -> np.ndarray:
    """Sphere drift at r = 0 (jump compensation included when nu2 is given)."""
    y1, theta = _single(lin, y1, theta)
    return _g1(lin, y1, theta, nu2)[0]


def coeff_g2(lin: LinearizedCoefficients, y1, theta) -> np.ndarray:
    """Sphere diffusion (l2, d2) at r = 0."""
    y1, theta = _single(lin, y1, theta)
    return _g2(lin, y1, theta)[0]


def coeff_g3(lin: LinearizedCoefficients, y1, theta, mark) -> np.ndarray:
    """Angular jump (theta + Gamma theta) / |theta + Gamma theta| - theta."""
    y1, theta = _single(lin, y1, theta)
    return _g3(lin, y1, theta, np.atleast_1d(mark))[0]


def coeff_h1(lin: LinearizedCoefficients, y1, theta, r: float, nu2: Optional[LevyMeasure] = None) -> float:
    """Linear part of the drift of R = |Y2|²."""
    y1, theta = _single(lin, y1, theta)
    value = 2.0 * _quad(lin.B(y1), theta)[0]
    value += sum(float(np.sum(_apply(S, theta) ** 2)) for S in lin.sigmas(y1))
    if nu2 is not None:
        value += sum(w * float(np.sum(_jump_image(lin, y1, theta, mark)[0] ** 2)) for mark, w in nu2)
    return float(r * value)


def coeff_h2(lin: LinearizedCoefficients, y1, theta, r: float) -> np.ndarray:
    """Diffusion row of R: (2 r thetaᵀ Sigma_l theta)_l."""
    y1, theta = _single(lin, y1, theta)
    return np.array([2.0 * r * _quad(S, theta)[0] for S in lin.sigmas(y1)])


def coeff_h3(lin: LinearizedCoefficients, y1, theta, r: float, mark) -> float:
    y1, theta = _single(lin, y1, theta)
    _, phi = _jump_image(lin, y1, theta, np.atleast_1d(mark))
    return float(r * (np.sum(phi**2) - 1.0))


def coeff_h4(lin: LinearizedCoefficients, y1, theta, nu2: Optional[LevyMeasure] = None) -> float:
    """Drift of ln R with the jump term ln|theta + Gamma theta|² - |theta + Gamma theta|² + 1."""
    y1, theta = _single(lin, y1, theta)
    return float(_h4(lin, y1, theta, nu2, generator=False)[0])


def coeff_h4_generator(lin: LinearizedCoefficients, y1, theta, nu2: Optional[LevyMeasure] = None) -> float:
    """Generator applied to ln|y2|²: jump term ln|theta + Gamma theta|² - 2 thetaᵀ Gamma theta."""
    y1, theta = _single(lin, y1, theta)
    return float(_h4(lin, y1, theta, nu2, generator=True)[0])


def coeff_h5(lin: LinearizedCoefficients, y1, theta) -> np.ndarray:
    """Diffusion row of ln R: (2 thetaᵀ Sigma_l theta)_l."""
    y1, theta = _single(lin, y1, theta)
    return np.array([2.0 * _quad(S, theta)[0] for S in lin.sigmas(y1)])


def coeff_h6(lin: LinearizedCoefficients, y1, theta, mark) -> float:
    y1, theta = _single(lin, y1, theta)
    _, phi = _jump_image(lin, y1, theta, np.atleast_1d(mark))
    return float(np.log(np.sum(phi**2)))


def system_from_linearization(
    lin: LinearizedCoefficients,
    levy2: Optional[LevyMeasure] = None,
    *,
    d1: int = 1,
    drift1=None,
    diff1=None,
    jump1=None,
    levy1: Optional[LevyMeasure] = None,
    name: str = "linearized",
) -> CoupledJumpDiffusion:
    """Coupled system whose component 2 is exactly linear in y2 (zero remainder)."""
    l2 = lin.l2

    def drift2(x1, x2):
        return _apply(lin.B(x1), x2)

    def diff2(x1, x2):
        columns = [_apply(S, x2) for S in lin.sigmas(x1)]
        return np.stack(columns, axis=2) if columns else np.zeros(x2.shape + (0,))

    def jump2(x1, x2, mark):
        return _apply(lin.gamma(x1, mark), x2)

    noise_x1 = lin.noise_depends_on_y1
    return make_system(
        lin.l1, l2, d1=d1, d2=lin.d2,
        drift1=drift1, diff1=diff1, jump1=jump1, levy1=levy1,
        drift2=drift2,
        diff2=CoefficientField(diff2, (l2, lin.d2), depends_on_x1=noise_x1, name="diff2"),
        jump2=CoefficientField(jump2, (l2, 1), with_mark=True, depends_on_x1=noise_x1, name="jump2"),
        levy2=levy2,
        name=name,
    )


class SphereStepper(BatchStepper):
    """
    (Y1 on {y2 = 0}, Theta on the unit sphere). Theta is renormalized after
    every step. Without a system Y1 stays at its initial value.
    """

    def __init__(
        self,
        lin: LinearizedCoefficients,
        system: Optional[CoupledJumpDiffusion],
        nu2: LevyMeasure,
        start: np.ndarray,
        cfg: IntegratorConfig,
        path_indices: Sequence[int],
        time_scale: float = 1.0,
    ):
        super().__init__(cfg, path_indices)
        self.lin = lin
        self.system = system
        self.nu2 = nu2
        self.start = start
        self.drift_scale = 1.0 / time_scale
        self.diff_scale = 1.0 / math.sqrt(time_scale)
        if system is not None:
            self.rates1 = system.levy1.weights / time_scale
            self.w1 = GaussianChannel([s.brownian1 for s in self.streams], system.dims.d1)
            self.n1 = PoissonChannel([s.jumps1 for s in self.streams], self.rates1 * cfg.dt)
        self.w2 = GaussianChannel([s.brownian2 for s in self.streams], lin.d2)
        self.n2 = PoissonChannel([s.jumps2 for s in self.streams], nu2.weights * cfg.dt)

    def initial_state(self) -> np.ndarray:
        return np.broadcast_to(self.start, (self.n_paths, self.start.size)).copy()

    def advance(self, step: int, t: float, state: np.ndarray) -> np.ndarray:
        lin, l1 = self.lin, self.lin.l1
        y1, theta = state[:, :l1], state[:, l1:]
        if self.system is not None:
            sys = self.system
            zero = np.zeros((state.shape[0], sys.dims.l2))
            counts1 = self.n1.draw(step)
            y1_new = y1 + euler_increment(
                sys.drift1, sys.diff1, sys.jump1, sys.levy1.marks, self.rates1,
                y1, zero, self.sqrt_dt * self.w1.draw(step), counts1, self.dt,
                self.drift_scale, self.diff_scale,
            )
        else:
            y1_new = y1

        g3s = [_g3(lin, y1, theta, mark) for mark, _ in self.nu2]
        inc = _g1(lin, y1, theta, self.nu2, g3s) * self.dt
        inc = inc + np.einsum("pil,pl->pi", _g2(lin, y1, theta), self.sqrt_dt * self.w2.draw(step))
        counts2 = self.n2.draw(step)
        for atom, (_, weight) in enumerate(self.nu2):
            inc = inc + (counts2[:, atom] - weight * self.dt)[:, None] * g3s[atom]
        self.log_jumps(counts2, t + self.dt, 2)

        theta_new = theta + inc
        norm = np.linalg.norm(theta_new, axis=1)
        if np.any(norm == 0.0):
            raise DegenerateJumpError(f"angular state hit the origin at t={t + self.dt:.6g}")
        return np.concatenate([y1_new, theta_new / norm[:, None]], axis=1)


@dataclass(frozen=True, eq=False)
class SpherePath:
    times: np.ndarray
    y1: np.ndarray  # (T, l1)
    theta: np.ndarray  # (T, l2)
    path_index: int = 0


def _sphere_start(lin: LinearizedCoefficients, y1_0, theta0) -> np.ndarray:
    y1 = np.zeros(lin.l1) if y1_0 is None else np.atleast_1d(np.asarray(y1_0, dtype=float))
    theta = np.ones(lin.l2) if theta0 is None else np.atleast_1d(np.asarray(theta0, dtype=float))
    if y1.size != lin.l1 or theta.size != lin.l2:
        raise DimensionMismatchError(f"sphere start dims ({y1.size}, {theta.size}) != ({lin.l1}, {lin.l2})")
    norm = float(np.linalg.norm(theta))
    if norm == 0.0:
        raise ValidationError("theta0 must be nonzero")
    return np.concatenate([y1, theta / norm])


def _check_sphere_inputs(lin: LinearizedCoefficients, system: Optional[CoupledJumpDiffusion], nu2: LevyMeasure) -> None:
    if system is not None and (system.dims.l1 != lin.l1 or system.dims.l2 != lin.l2):
        raise DimensionMismatchError(
            f"system dims ({system.dims.l1}, {system.dims.l2}) differ from linearization ({lin.l1}, {lin.l2})"
        )
    if not math.isfinite(nu2.total_mass):
        raise ValidationError("sphere simulation needs a finite nu2")


def simulate_sphere_ensemble(
    lin: LinearizedCoefficients,
    system: Optional[CoupledJumpDiffusion],
    cfg: IntegratorConfig,
    path_indices: Sequence[int],
    nu2: Optional[LevyMeasure] = None,
    theta0=None,
    y1_0=None,
    time_scale: float = 1.0,
    threads: int = 1,
):
    nu2 = nu2 if nu2 is not None else (system.levy2 if system is not None else LevyMeasure.empty(1))
    _check_sphere_inputs(lin, system, nu2)
    start = _sphere_start(lin, y1_0, theta0)
    return run_chunked(
        lambda chunk: SphereStepper(lin, system, nu2, start, cfg, chunk, time_scale), path_indices, threads
    )


def simulate_boundary_sphere_system(
    lin: LinearizedCoefficients,
    system: CoupledJumpDiffusion,
    cfg: IntegratorConfig,
    path_index: int = 0,
    theta0=None,
    y1_0=None,
    time_scale: float = 1.0,
) -> SpherePath:
    """
    Joint path of Y1 on the boundary and Theta on the sphere. Y1 uses the
    component-1 coefficients of ``system`` at y2 = 0; Theta is driven by
    nu2 = system.levy2 and an independent Brownian motion of dim d2.
    """
    traj = simulate_sphere_ensemble(lin, system, cfg, [path_index], theta0=theta0, y1_0=y1_0, time_scale=time_scale)
    traj.raise_if_diverged(0)
    states = traj.states[0]
    return SpherePath(traj.times, states[:, : lin.l1], states[:, lin.l1 :], path_index)


def sphere_occupation(
    lin: LinearizedCoefficients,
    system: Optional[CoupledJumpDiffusion],
    cfg: IntegratorConfig,
    ensemble: int,
    nu2: Optional[LevyMeasure] = None,
    theta0=None,
    y1_0=None,
    time_scale: float = 1.0,
    threads: int = 1,
) -> OccupationMeasure:
    """Occupation measure over (y1, theta) after the usual burn-in."""
    traj = simulate_sphere_ensemble(
        lin, system, cfg, range(ensemble), nu2=nu2, theta0=theta0, y1_0=y1_0, time_scale=time_scale, threads=threads
    )
    if not traj.alive.all():
        logger.warning(f"{int((~traj.alive).sum())} sphere path(s) diverged and were dropped")
    burn_in = engine_config.BURN_IN_FRACTION * cfg.horizon
    keep = traj.times >= burn_in
    samples = traj.states[traj.alive][:, keep, :].reshape(-1, lin.l1 + lin.l2)
    return OccupationMeasure.from_samples(samples, burn_in)


STABILITY_INTEGRAL_COLUMNS = ["variant", "value", "stderr", "normalization"]


@dataclass(frozen=True)
class StabilityIntegral:
    """Both h4 variants averaged over a sphere occupation; the generator variant is the default."""

    log_quadratic: Estimate
    generator: Estimate

    @property
    def value(self) -> float:
        return self.generator.value

    @property
    def stderr(self) -> float:
        return self.generator.stderr

    def __iter__(self):
        yield self.value
        yield self.stderr

    @property
    def exponent(self) -> float:
        """Implied exponent of |Y2| (half the ln|Y2|² drift)."""
        return 0.5 * self.generator.value

    def to_rows(self) -> List[Dict[str, object]]:
        return [
            {"variant": name, "value": est.value, "stderr": est.stderr, "normalization": "drift of ln|y2|^2"}
            for name, est in (("log-quadratic", self.log_quadratic), ("generator", self.generator))
        ]


def stability_integral(
    lin: LinearizedCoefficients, occupation: OccupationMeasure, nu2: Optional[LevyMeasure] = None
) -> StabilityIntegral:
    """Average of both h4 variants over an occupation of (y1, theta); negative means R(t) decays."""
    if occupation.dim != lin.l1 + lin.l2:
        raise DimensionMismatchError(f"occupation dim {occupation.dim} != l1 + l2 = {lin.l1 + lin.l2}")
    y1 = occupation.samples[:, : lin.l1]
    theta = occupation.samples[:, lin.l1 :]
    weights = occupation.weights
    log_quadratic = Estimate(*EnsembleStatistics.batch_means(_h4(lin, y1, theta, nu2, generator=False), weights))
    generator = Estimate(*EnsembleStatistics.batch_means(_h4(lin, y1, theta, nu2, generator=True), weights))
    logger.info(f"stability integral: generator {generator.value:.4f} ± {generator.stderr:.4f}, log-quadratic {log_quadratic.value:.4f}")
    return StabilityIntegral(log_quadratic=log_quadratic, generator=generator)
