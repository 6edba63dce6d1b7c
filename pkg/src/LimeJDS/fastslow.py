"""
Two-time-scale systems: component 1 runs on the fast clock t / eps.

    dY1 = b1/eps dt + sigma1/sqrt(eps) dW1 + ∫gamma1 dÑ1^eps   (intensity nu1/eps)
    dY2 = b2 dt + sigma2 dW2 + ∫gamma2 dÑ2

The stability of Y2 = 0 is read from lambda_eps (the ln|Y2|² drift averaged
over the eps-scaled sphere occupation) and its eps -> 0 limit lambda_star,
which averages B2 over the boundary law of Y1 first.
"""

from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence
import logging
import math

import numpy as np
import pandas as pd

from .config import IntegratorConfig
from .exceptions import ConfigurationError, DimensionMismatchError, ValidationError
from .integrator import StateLike, simulate_ensemble
from .polar import (
    LinearizedCoefficients,
    StabilityIntegral,
    sphere_occupation,
    stability_integral,
    system_from_linearization,
)
from .rng import sampling_generator
from .stability import ExponentEstimate, OccupationMeasure, estimate_invariant_measure, estimate_log_lyapunov_exponent
from .systems import CoupledJumpDiffusion, PathSample
from .utils import frame_from_rows

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["epsilon", "variant", "lambda", "stderr"]

# Fast-scale resolution: dt <= eps / RESOLUTION
RESOLUTION = 10.0


@dataclass(frozen=True, eq=False)
class FastSlowSystem:
    """
    Base system with eps-independent coefficients plus its linearization in y2.

    sigma2 and gamma2 (and their linear parts) must not depend on y1.
    """

    base: CoupledJumpDiffusion
    epsilon: float
    lin: LinearizedCoefficients

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValidationError(f"epsilon must be positive, got {self.epsilon}")
        dims = self.base.dims
        if (dims.l1, dims.l2) != (self.lin.l1, self.lin.l2):
            raise DimensionMismatchError(
                f"base dims ({dims.l1}, {dims.l2}) differ from linearization ({self.lin.l1}, {self.lin.l2})"
            )
        if self.base.diff2.depends_on_x1 or self.base.jump2.depends_on_x1:
            raise ValidationError(f"{self.base.name}: sigma2 and gamma2 must be built from y2-only evaluators")
        if self.lin.noise_depends_on_y1:
            raise ValidationError("linearized noise must be declared independent of y1")
        self._check_noise_constant()

    def _check_noise_constant(self, samples: int = 8, seed: int = 0) -> None:
        y1 = sampling_generator(seed).uniform(-3.0, 3.0, size=(samples, self.lin.l1))
        for index, S in enumerate(self.lin.sigmas(y1)):
            if not np.allclose(S, S[:1], rtol=0.0, atol=1e-12):
                raise ValidationError(f"Sigma2[{index}] varies with y1")

    @property
    def name(self) -> str:
        return self.base.name

    def with_epsilon(self, epsilon: float) -> "FastSlowSystem":
        return replace(self, epsilon=epsilon)

    def check_resolution(self, cfg: IntegratorConfig) -> None:
        if cfg.dt > self.epsilon / RESOLUTION:
            raise ConfigurationError(
                f"dt={cfg.dt} does not resolve the fast scale eps={self.epsilon} (need dt <= {self.epsilon / RESOLUTION:.3g})"
            )

    def resolved(self, cfg: IntegratorConfig) -> IntegratorConfig:
        """cfg with dt refined to eps / 10 when it is too coarse."""
        limit = self.epsilon / RESOLUTION
        return cfg if cfg.dt <= limit else cfg.with_overrides(dt=limit)


def simulate_fastslow_ensemble(
    fs: FastSlowSystem, z0: StateLike, cfg: IntegratorConfig, path_indices: Sequence[int], threads: int = 1
):
    fs.check_resolution(cfg)
    return simulate_ensemble(fs.base, z0, cfg, path_indices=path_indices, time_scale=fs.epsilon, threads=threads)


def simulate_fastslow(fs: FastSlowSystem, z0: StateLike, cfg: IntegratorConfig, path_index: int = 0) -> PathSample:
    """
    One path of the fast-slow system. With eps = 1 this is simulate_path on
    the base system, bit for bit.

    Raises:
        ConfigurationError: dt > eps / 10
    """
    return simulate_fastslow_ensemble(fs, z0, cfg, [path_index]).path(0)


def lambda_eps(
    fs: FastSlowSystem,
    cfg: IntegratorConfig,
    ensemble: int,
    theta0=None,
    y1_0=None,
    threads: int = 1,
) -> StabilityIntegral:
    """Stability integral over the eps-scaled boundary sphere system (Y1^eps, Theta^eps)."""
    fs.check_resolution(cfg)
    occ = sphere_occupation(
        fs.lin, fs.base, cfg, ensemble, theta0=theta0, y1_0=y1_0, time_scale=fs.epsilon, threads=threads
    )
    result = stability_integral(fs.lin, occ, fs.base.levy2)
    logger.info(f"{fs.name}: lambda_eps(eps={fs.epsilon:g}) = {result.value:.4f} ± {result.stderr:.4f}")
    return result


def averaged_drift_matrix(fs: FastSlowSystem, occupation_x1: OccupationMeasure) -> np.ndarray:
    """B2 averaged over the boundary occupation of Y1."""
    if occupation_x1.dim != fs.lin.l1:
        raise DimensionMismatchError(f"occupation dim {occupation_x1.dim} != l1 = {fs.lin.l1}")
    return np.einsum("m,mij->ij", occupation_x1.weights, fs.lin.B(occupation_x1.samples))


@dataclass(frozen=True)
class LambdaStar:
    """Limit stability integral together with the averaged drift matrix it was built from."""

    integral: StabilityIntegral
    B2_bar: np.ndarray
    occupation_samples: int

    @property
    def value(self) -> float:
        return self.integral.value

    @property
    def stderr(self) -> float:
        return self.integral.stderr

    def __iter__(self):
        yield self.value
        yield self.stderr


def lambda_star(
    fs: FastSlowSystem,
    cfg: IntegratorConfig,
    ensemble: int,
    y1_0=None,
    theta0=None,
    threads: int = 1,
) -> LambdaStar:
    """
    eps -> 0 limit of lambda_eps.

    Pi1 is the occupation of the eps-free boundary Y1, B2_bar its B2 average,
    and Pi2 the occupation of the averaged sphere process (drift built from
    B2_bar). As the noise does not see y1 and h4 is linear in B2, averaging
    h4 over Pi1 x Pi2 equals averaging it with B2_bar over Pi2. The stderr
    covers the Pi2 sampling only.
    """
    l1 = fs.lin.l1
    x1_start = np.zeros(l1) if y1_0 is None else np.atleast_1d(np.asarray(y1_0, dtype=float))
    occ1 = estimate_invariant_measure(fs.base, x1_start, cfg, ensemble, threads=threads)
    B2_bar = averaged_drift_matrix(fs, occ1)
    averaged = fs.lin.averaged(B2_bar)
    occ2 = sphere_occupation(
        averaged, None, cfg, ensemble, nu2=fs.base.levy2, theta0=theta0, y1_0=x1_start, threads=threads
    )
    integral = stability_integral(averaged, occ2, fs.base.levy2)
    logger.info(f"{fs.name}: lambda_star = {integral.value:.4f} ± {integral.stderr:.4f}")
    return LambdaStar(integral=integral, B2_bar=B2_bar, occupation_samples=len(occ1))


def averaged_linear_system(fs: FastSlowSystem, B2_bar: np.ndarray) -> CoupledJumpDiffusion:
    """
    dY2 = B2_bar Y2 dt + sum_l Sigma_l Y2 dW2_l + ∫Gamma Y2 dÑ2 with a frozen
    (zero-coefficient) component 1.
    """
    return system_from_linearization(
        fs.lin.averaged(B2_bar), levy2=fs.base.levy2, name=f"{fs.name}-averaged"
    )


def averaged_exponent(
    fs: FastSlowSystem,
    B2_bar: np.ndarray,
    cfg: IntegratorConfig,
    ensemble: int,
    y2_0=None,
    threads: int = 1,
) -> ExponentEstimate:
    """Exponent of |Y2| of the averaged linear system; compare with lambda_star / 2."""
    system = averaged_linear_system(fs, B2_bar)
    l2 = fs.lin.l2
    y2 = np.full(l2, 1.0 / math.sqrt(l2)) if y2_0 is None else np.atleast_1d(np.asarray(y2_0, dtype=float))
    return estimate_log_lyapunov_exponent(system, (np.zeros(fs.lin.l1), y2), cfg, ensemble, threads=threads)


def lambda_sweep(
    fs: FastSlowSystem,
    epsilons: Sequence[float],
    cfg: IntegratorConfig,
    ensemble: int,
    include_star: bool = True,
    refine: bool = True,
    threads: int = 1,
) -> pd.DataFrame:
    """
    lambda_eps for each eps (both h4 variants) and, optionally, lambda_star
    (reported with epsilon = 0).

    With ``refine`` the step is reduced to eps / 10 where cfg is too coarse;
    otherwise a coarse cfg raises ConfigurationError.
    """
    rows: List[Dict[str, object]] = []
    for epsilon in epsilons:
        member = fs.with_epsilon(float(epsilon))
        run_cfg = member.resolved(cfg) if refine else cfg
        integral = lambda_eps(member, run_cfg, ensemble, threads=threads)
        rows.extend(_sweep_rows(float(epsilon), integral))
    if include_star:
        rows.extend(_sweep_rows(0.0, lambda_star(fs, cfg, ensemble, threads=threads).integral))
    return frame_from_rows(rows, SWEEP_COLUMNS)


def _sweep_rows(epsilon: float, integral: StabilityIntegral) -> List[Dict[str, object]]:
    return [
        {"epsilon": epsilon, "variant": row["variant"], "lambda": row["value"], "stderr": row["stderr"]}
        for row in integral.to_rows()
    ]
