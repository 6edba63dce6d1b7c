"""
Infinitesimal generator of a coupled jump diffusion and related checks.
"""

from dataclasses import dataclass, field
from itertools import product
from typing import Dict, List, Optional, Tuple
import logging
import math

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.stats import poisson

from .exceptions import ConfigurationError
from .rng import sampling_generator
from .systems import CoupledJumpDiffusion, ScalarField

logger = logging.getLogger(__name__)


def _jump_shifts(system: CoupledJumpDiffusion, x1: np.ndarray, x2: np.ndarray) -> List[Tuple[float, np.ndarray]]:
    """(weight, jump displacement of the stacked state) for every atom of both channels."""
    l1, n = system.dims.l1, system.dims.state_dim
    shifts = []
    for mark, weight in system.levy1:
        shift = np.zeros(n)
        shift[:l1] = system.jump1.vector(x1, x2, mark)[0]
        shifts.append((weight, shift))
    for mark, weight in system.levy2:
        shift = np.zeros(n)
        shift[l1:] = system.jump2.vector(x1, x2, mark)[0]
        shifts.append((weight, shift))
    return shifts


def _diffusion_matrix(system: CoupledJumpDiffusion, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Block diagonal diffusion of the stacked state, (l1 + l2, d1 + d2)."""
    d = system.dims
    out = np.zeros((d.state_dim, d.d1 + d.d2))
    out[: d.l1, : d.d1] = system.diff1(x1, x2)[0]
    out[d.l1 :, d.d1 :] = system.diff2(x1, x2)[0]
    return out


def apply_generator(system: CoupledJumpDiffusion, g: ScalarField, z: np.ndarray) -> float:
    """
    Evaluate (Lg)(z) = grad g · b + 1/2 tr(sigma sigmaᵀ Hess g)
    + sum over atoms of weight * [g(z + gamma) - g(z) - grad g · gamma].

    Args:
        system: the coupled jump diffusion
        g: scalar field on R^{l1 + l2}
        z: stacked state (x1, x2)

    Returns:
        float: generator value
    """
    z = np.asarray(z, dtype=float)
    x1, x2 = system.split(z)
    x1, x2 = x1[None, :], x2[None, :]
    grad = g.grad(z)
    hess = g.hess(z)
    sigma = _diffusion_matrix(system, x1, x2)

    terms = [float(grad @ system.drift(x1, x2)[0]), 0.5 * float(np.trace(sigma.T @ hess @ sigma))]
    g_z = g(z)
    for weight, shift in _jump_shifts(system, x1, x2):
        terms.append(weight * (g(z + shift) - g_z - float(grad @ shift)))
    return math.fsum(terms)


def one_step_expectation(
    system: CoupledJumpDiffusion,
    g: ScalarField,
    z: np.ndarray,
    h: float,
    order: int = 7,
    max_jumps: int = 3,
) -> float:
    """
    E[g(Z_h)] after one Euler step of size h from z, computed without sampling:
    Gauss–Hermite quadrature over the Brownian increment and a truncated
    (renormalized) Poisson sum over per-atom jump counts.
    """
    z = np.asarray(z, dtype=float)
    x1, x2 = system.split(z)
    x1, x2 = x1[None, :], x2[None, :]
    sigma = _diffusion_matrix(system, x1, x2)
    base = z + system.drift(x1, x2)[0] * h

    nodes, weights = hermegauss(order)
    weights = weights / math.sqrt(2.0 * math.pi)
    dim = sigma.shape[1]
    xi = np.array(list(product(nodes, repeat=dim))).reshape(-1, dim)
    wq = np.prod(np.array(list(product(weights, repeat=dim))).reshape(-1, dim), axis=1)
    gaussian_points = base + math.sqrt(h) * xi @ sigma.T

    shifts = _jump_shifts(system, x1, x2)
    total, mass = [], []
    for counts in product(range(max_jumps + 1), repeat=len(shifts)):
        prob = 1.0
        displacement = np.zeros_like(z)
        for count, (weight, shift) in zip(counts, shifts):
            prob *= poisson.pmf(count, weight * h)
            displacement = displacement + (count - weight * h) * shift
        if prob == 0.0:
            continue
        values = g.evaluate_many(gaussian_points + displacement)
        total.append(prob * float(np.dot(wq, values)))
        mass.append(prob)
    return math.fsum(total) / math.fsum(mass)


@dataclass
class LipschitzReport:
    """Empirical lower bounds for the global Lipschitz and jump growth constants."""

    k1_hat: float
    k2_hat: float
    k1_by_radius: Dict[float, float] = field(default_factory=dict)
    unbounded_trend: bool = False
    declared_K1: Optional[float] = None
    declared_K2: Optional[float] = None

    @property
    def passes(self) -> Optional[bool]:
        """None when no bound was declared."""
        if self.declared_K1 is None and self.declared_K2 is None:
            return None
        ok = True
        if self.declared_K1 is not None:
            ok &= self.k1_hat <= self.declared_K1
        if self.declared_K2 is not None:
            ok &= self.k2_hat <= self.declared_K2
        return bool(ok and not self.unbounded_trend)

    def to_row(self) -> Dict[str, object]:
        return {
            "k1_hat": self.k1_hat,
            "k2_hat": self.k2_hat,
            "unbounded_trend": self.unbounded_trend,
            "declared_K1": self.declared_K1,
            "declared_K2": self.declared_K2,
            "passes": self.passes,
        }


def _difference_quotients(system: CoupledJumpDiffusion, z: np.ndarray, zp: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    x1, x2 = system.split(z)
    y1, y2 = system.split(zp)
    num = np.sum((system.drift(x1, x2) - system.drift(y1, y2)) ** 2, axis=1)
    num += np.sum((system.diff1(x1, x2) - system.diff1(y1, y2)) ** 2, axis=(1, 2))
    num += np.sum((system.diff2(x1, x2) - system.diff2(y1, y2)) ** 2, axis=(1, 2))
    growth = np.zeros(z.shape[0])
    for coefficient, levy in ((system.jump1, system.levy1), (system.jump2, system.levy2)):
        for mark, weight in levy:
            g_z = coefficient.vector(x1, x2, mark)
            num += weight * np.sum((g_z - coefficient.vector(y1, y2, mark)) ** 2, axis=1)
            growth += weight * np.sum(g_z**2, axis=1)
    dist = np.sum((z - zp) ** 2, axis=1)
    q1 = np.where(dist > 0, num / np.where(dist > 0, dist, 1.0), 0.0)
    q2 = growth / (1.0 + np.sum(z**2, axis=1))
    return q1, q2


def validate_lipschitz(
    system: CoupledJumpDiffusion,
    sample_count: int,
    box_radius: float,
    declared_K1: Optional[float] = None,
    declared_K2: Optional[float] = None,
    seed: int = 0,
) -> LipschitzReport:
    """
    Estimate the Lipschitz quotient
    (|Δb|² + |Δsigma|² + ∫|Δgamma|² nu) / |z - z'|²
    and the jump growth quotient ∫|gamma(z)|² nu / (1 + |z|²) over random
    points in boxes of radius R/4, R/2 and R.

    The maxima are lower bounds for K1 and K2. A quotient that grows by more
    than half from each radius to the next is flagged as an unbounded trend.
    """
    if sample_count < 2:
        raise ConfigurationError(f"sample_count must be >= 2, got {sample_count}")
    rng = sampling_generator(seed)
    n = system.dims.state_dim
    k1_by_radius, k2 = {}, 0.0
    for radius in (box_radius / 4.0, box_radius / 2.0, box_radius):
        z = rng.uniform(-radius, radius, size=(sample_count, n))
        zp = rng.uniform(-radius, radius, size=(sample_count, n))
        q1, q2 = _difference_quotients(system, z, zp)
        k1_by_radius[radius] = float(q1.max())
        k2 = max(k2, float(q2.max()))

    k1_values = list(k1_by_radius.values())
    trend = all(b > 1.5 * a and b > 0 for a, b in zip(k1_values, k1_values[1:]))
    report = LipschitzReport(
        k1_hat=max(k1_values),
        k2_hat=k2,
        k1_by_radius=k1_by_radius,
        unbounded_trend=trend,
        declared_K1=declared_K1,
        declared_K2=declared_K2,
    )
    if trend:
        logger.warning(f"{system.name}: Lipschitz quotient grows with the box radius {k1_by_radius}")
    return report
