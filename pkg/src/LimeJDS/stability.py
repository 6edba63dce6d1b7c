"""
Stability of the equilibrium X2 = 0: Lyapunov data, boundary invariant
measure, the averages Lambda1 / Lambda2 and the exponent of |X2|.

Scalar functions f1, f2 and V1 are vectorised over rows: they map x1 of
shape (M, l1) to (M,). V0 and U are ScalarFields (they enter the generator).
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, Optional, Sequence, Tuple
import logging
import math

import numpy as np

from .config import IntegratorConfig, engine_config
from .exceptions import (
    DimensionMismatchError,
    DivergenceError,
    NoInvariantMeasureError,
    ValidationError,
)
from .generator import apply_generator
from .integrator import StateLike, initial_state, simulate_ensemble
from .rng import sampling_generator
from .systems import CoupledJumpDiffusion, ScalarField
from .utils import EnsembleStatistics, Estimate, LogSlopeFitter, evaluate_field

logger = logging.getLogger(__name__)

ScalarFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class StabilityHypotheses:
    """Lyapunov data for the stability theorem (U defaults to max(-ln|x2|, 0))."""

    V0: ScalarField
    V1: ScalarFunction
    f1: ScalarFunction
    f2: ScalarFunction
    U: Optional[ScalarField] = None
    m0: float = 1.0
    alpha0: float = 1.0
    delta0: float = 1.0
    c_sigma: float = 1.0
    K3: float = 1.0
    K4: float = 1.0
    K5: float = 1.0

    def __post_init__(self):
        for name in ("m0", "alpha0", "delta0", "c_sigma", "K3", "K4", "K5"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(f"StabilityHypotheses.{name} must be positive, got {value}")

    def u_field(self, l2: int) -> ScalarField:
        return self.U if self.U is not None else ScalarField.default_u(l2)

    def with_f1(self, f1: ScalarFunction) -> "StabilityHypotheses":
        return replace(self, f1=f1)

    def check_u_inequality(self, l2: int, samples: int = 1000, seed: int = 0) -> bool:
        """U(x) - U(x') <= m0 ln(|x'|/|x|) on random pairs with 0 < |x|, |x'| <= delta0."""
        x, xp = _pairs_in_ball(l2, samples, self.delta0, seed)
        u = self.u_field(l2)
        lhs = u.evaluate_many(x) - u.evaluate_many(xp)
        rhs = self.m0 * np.log(np.linalg.norm(xp, axis=1) / np.linalg.norm(x, axis=1))
        return bool(np.all(lhs <= rhs + 1e-12 * (1.0 + np.abs(rhs))))

    def check_u_blowup(self, l2: int) -> bool:
        """U at radius 10^-k grows with k = 1..8."""
        e = np.zeros(l2)
        e[0] = 1.0
        u = self.u_field(l2)
        values = np.array([u(e * 10.0**-k) for k in range(1, 9)])
        return bool(np.all(np.diff(values) > 0))

    def check_f_bound(self, points: np.ndarray) -> bool:
        """|f1| + f2 < K5 V1 at the given x1 points."""
        lhs = np.abs(evaluate_field(self.f1, points)) + evaluate_field(self.f2, points)
        return bool(np.all(lhs < self.K5 * evaluate_field(self.V1, points)))


def _pairs_in_ball(
    dim: int, samples: int, radius: float, seed: int, decades: float = 8.0
) -> Tuple[np.ndarray, np.ndarray]:
    """Nonzero point pairs with log-uniform norms in [10^-decades radius, radius]."""
    rng = sampling_generator(seed)

    def draw():
        direction = rng.standard_normal((samples, dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        return direction * (radius * 10.0 ** rng.uniform(-decades, 0.0, size=(samples, 1)))

    return draw(), draw()


@dataclass(frozen=True, eq=False)
class OccupationMeasure:
    """Weighted cloud of post-burn-in samples approximating an invariant measure."""

    samples: np.ndarray  # (M, dim)
    weights: np.ndarray  # (M,)
    burn_in: float = 0.0

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if samples.shape[0] < 1 or samples.shape[0] != weights.size:
            raise ValidationError(f"OccupationMeasure needs one weight per sample, got {samples.shape[0]} / {weights.size}")
        if np.any(weights < 0) or abs(math.fsum(weights) - 1.0) > 1e-12:
            raise ValidationError("OccupationMeasure weights must be nonnegative and sum to 1")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_samples(cls, samples: np.ndarray, burn_in: float = 0.0) -> "OccupationMeasure":
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        if samples.shape[0] == 0:
            raise ValidationError("OccupationMeasure needs at least one sample")
        return cls(samples, np.full(samples.shape[0], 1.0 / samples.shape[0]), burn_in)

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def __len__(self) -> int:
        return self.samples.shape[0]

    def mean(self) -> np.ndarray:
        return self.weights @ self.samples

    def expect(self, fn: ScalarFunction) -> float:
        return estimate_lambda(self, fn).value


@dataclass(frozen=True)
class ExponentEstimate(Estimate):
    """Ensemble mean of fitted ln|X2| slopes."""

    slopes: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n_absorbed: int = 0
    n_diverged: int = 0
    floor: float = float("-inf")
    final_x2: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))

    def fraction_below(self, threshold: float) -> float:
        if self.slopes.size == 0:
            return 0.0
        return float(np.mean(self.slopes <= threshold))


class Verdict(str, Enum):
    STABLE = "stable"
    INCONCLUSIVE = "inconclusive"
    UNSTABLE_INDICATED = "unstable-indicated"


REPORT_COLUMNS = [
    "lambda1_hat",
    "lambda1_stderr",
    "lambda2_hat",
    "lambda2_stderr",
    "gamma0",
    "exponent_hat",
    "exponent_stderr",
    "verdict",
    "agreement",
    "fraction_decaying",
    "u_growth",
    "occupation_samples",
]


@dataclass(frozen=True)
class LyapunovReport:
    lambda1: Estimate
    lambda2: Estimate
    gamma0: float
    exponent: Estimate
    verdict: Verdict
    agreement: bool = False
    fraction_decaying: float = float("nan")
    u_growth: float = float("nan")
    occupation_samples: int = 0

    @property
    def lambda1_hat(self) -> float:
        return self.lambda1.value

    @property
    def lambda2_hat(self) -> float:
        return self.lambda2.value

    @property
    def exponent_hat(self) -> float:
        return self.exponent.value

    def to_row(self) -> Dict[str, object]:
        """Flat CSV row in REPORT_COLUMNS order."""
        return {
            "lambda1_hat": self.lambda1.value,
            "lambda1_stderr": self.lambda1.stderr,
            "lambda2_hat": self.lambda2.value,
            "lambda2_stderr": self.lambda2.stderr,
            "gamma0": self.gamma0,
            "exponent_hat": self.exponent.value,
            "exponent_stderr": self.exponent.stderr,
            "verdict": self.verdict.value,
            "agreement": self.agreement,
            "fraction_decaying": self.fraction_decaying,
            "u_growth": self.u_growth,
            "occupation_samples": self.occupation_samples,
        }


def estimate_invariant_measure(
    system: CoupledJumpDiffusion,
    x1_0: Sequence[float],
    cfg: IntegratorConfig,
    ensemble: int,
    threads: int = 1,
    time_scale: float = 1.0,
) -> OccupationMeasure:
    """
    Occupation measure of the boundary process (x2 pinned at 0).

    Post-burn-in recorded states of ``ensemble`` paths are concatenated in
    path order; burn-in is BURN_IN_FRACTION of the horizon.

    Raises:
        NoInvariantMeasureError: a boundary path diverged
    """
    z0 = (np.atleast_1d(np.asarray(x1_0, dtype=float)), np.zeros(system.dims.l2))
    result = simulate_ensemble(
        system, z0, cfg, n_paths=ensemble, boundary=True, time_scale=time_scale, threads=threads
    )
    if result.n_diverged:
        first = int(np.nanargmin(result.trajectory.diverged_at))
        raise NoInvariantMeasureError(
            f"{system.name}: boundary system diverged in {result.n_diverged} of {ensemble} path(s)",
            time=float(result.trajectory.diverged_at[first]),
            path_index=result.trajectory.path_indices[first],
        )
    burn_in = engine_config.BURN_IN_FRACTION * cfg.horizon
    keep = result.times >= burn_in
    samples = result.x1[:, keep, :].reshape(-1, system.dims.l1)
    logger.info(f"{system.name}: occupation measure from {ensemble} path(s), {samples.shape[0]} samples")
    return OccupationMeasure.from_samples(samples, burn_in)


def estimate_lambda(occ: OccupationMeasure, f: ScalarFunction) -> Estimate:
    """Weighted mean of f over the occupation samples with a batch-means stderr."""
    values = evaluate_field(f, occ.samples)
    return Estimate(*EnsembleStatistics.batch_means(values, occ.weights))


def scalar_exponent(a: float, s: float, atoms: Sequence[Tuple[float, float]] = ()) -> float:
    """a - s²/2 + sum w (ln|1 + g| - g) for dX = X(a dt + s dW + ∫g dÑ)."""
    return math.fsum([a, -0.5 * s * s] + [w * (math.log(abs(1.0 + g)) - g) for g, w in atoms])


def estimate_log_lyapunov_exponent(
    system: CoupledJumpDiffusion,
    z0: StateLike,
    cfg: IntegratorConfig,
    ensemble: int,
    threads: int = 1,
    time_scale: float = 1.0,
) -> ExponentEstimate:
    """
    Mean fitted slope of ln|X2(t)| over the second half of the horizon.

    Paths absorbed at zero (|X2| < ABSORPTION_LEVEL) contribute the floor
    slope of a path reaching that level at the horizon; diverged paths are
    excluded with a warning.

    Raises:
        DivergenceError: every path diverged
    """
    z = initial_state(system, z0)
    x2_norm = float(np.linalg.norm(z[system.dims.l1 :]))
    if x2_norm == 0.0:
        raise ValidationError("exponent of |X2| needs x2(0) != 0")
    result = simulate_ensemble(system, z, cfg, n_paths=ensemble, time_scale=time_scale, threads=threads)
    alive = result.alive
    if not alive.any():
        raise DivergenceError(
            f"{system.name}: all {ensemble} path(s) diverged",
            time=float(np.nanmin(result.trajectory.diverged_at)),
        )
    norms = np.linalg.norm(result.x2[alive], axis=2)
    floor = LogSlopeFitter.absorption_floor(x2_norm, float(result.times[-1]))
    slopes, absorbed = LogSlopeFitter.fit(result.times, norms, floor)
    if absorbed.any():
        logger.warning(f"{system.name}: {int(absorbed.sum())} path(s) absorbed at 0, slope capped at {floor:.4g}")
    mean, stderr = EnsembleStatistics.mean_stderr(slopes)
    logger.info(f"{system.name}: exponent of |X2| = {mean:.4f} ± {stderr:.4f} over {int(alive.sum())} path(s)")
    return ExponentEstimate(
        value=mean,
        stderr=stderr,
        slopes=slopes,
        n_absorbed=int(absorbed.sum()),
        n_diverged=int((~alive).sum()),
        floor=floor,
        final_x2=result.x2[alive, -1, :],
    )


def stability_verdict(
    system: CoupledJumpDiffusion,
    hyp: StabilityHypotheses,
    occ: OccupationMeasure,
    cfg: IntegratorConfig,
    ensemble: int = 32,
    x2_start: float = 1e-3,
    tolerance: Optional[float] = None,
    threads: int = 1,
) -> LyapunovReport:
    """
    Verdict on the stability of X2 = 0.

    ``stable`` requires Lambda1 - 2 stderr > 0 and reports the decay rate
    gamma0 = Lambda1 / (2 m0). The exponent of |X2| from |x2(0)| = x2_start,
    x1(0) at the occupation mean, is always measured; it alone can return
    ``unstable-indicated`` (exponent - 2 stderr > 0).
    """
    if occ.dim != system.dims.l1:
        raise DimensionMismatchError(f"occupation measure has dim {occ.dim}, system l1 = {system.dims.l1}")
    tolerance = engine_config.EXPONENT_TOLERANCE if tolerance is None else tolerance
    lambda1 = estimate_lambda(occ, hyp.f1)
    lambda2 = estimate_lambda(occ, hyp.f2)
    gamma0 = lambda1.value / (2.0 * hyp.m0) if lambda1.value > 0 else float("nan")

    x2_0 = np.zeros(system.dims.l2)
    x2_0[0] = x2_start
    try:
        exponent = estimate_log_lyapunov_exponent(system, (occ.mean(), x2_0), cfg, ensemble, threads=threads)
    except DivergenceError:
        exponent = ExponentEstimate(value=float("inf"), stderr=0.0, n_diverged=ensemble)

    stable = lambda1.lower(engine_config.VERDICT_SIGMAS) > 0
    if stable:
        verdict = Verdict.STABLE
    elif exponent.lower(engine_config.VERDICT_SIGMAS) > 0:
        verdict = Verdict.UNSTABLE_INDICATED
    else:
        verdict = Verdict.INCONCLUSIVE

    u = hyp.u_field(system.dims.l2)
    u_growth = float("nan")
    if exponent.final_x2.shape[0]:
        u_growth = float(np.mean(u.evaluate_many(exponent.final_x2))) / cfg.horizon

    report = LyapunovReport(
        lambda1=lambda1,
        lambda2=lambda2,
        gamma0=gamma0,
        exponent=exponent,
        verdict=verdict,
        agreement=bool(math.isfinite(gamma0) and exponent.value <= -gamma0 + tolerance),
        fraction_decaying=exponent.fraction_below(-0.5 * gamma0) if math.isfinite(gamma0) else float("nan"),
        u_growth=u_growth,
        occupation_samples=len(occ),
    )
    logger.info(
        f"{system.name}: Lambda1 = {lambda1.value:.4f} ± {lambda1.stderr:.4f}, "
        f"exponent = {exponent.value:.4f}, verdict = {verdict.value}"
    )
    return report


@dataclass
class HypothesisReport:
    """Outcome of the sampled hypothesis checks; None when a check was not applicable."""

    checks: Dict[str, Optional[bool]]
    worst: Dict[str, float]

    @property
    def passed(self) -> bool:
        return all(v for v in self.checks.values() if v is not None)


def check_hypotheses(
    system: CoupledJumpDiffusion,
    hyp: StabilityHypotheses,
    samples: int = 128,
    radius: float = 2.0,
    seed: int = 0,
) -> HypothesisReport:
    """
    Spot-check the Lyapunov hypotheses at sampled points.

    The generator inequalities are checked on {x2 = 0} for V0 and on
    0 < |x2| <= delta0 for U; sigma1's right inverse is checked against
    c_sigma on {x2 = 0}.
    """
    d = system.dims
    rng = sampling_generator(seed)
    x1 = rng.uniform(-radius, radius, size=(samples, d.l1))
    x2, _ = _pairs_in_ball(d.l2, samples, hyp.delta0, seed + 1, decades=3.0)
    zero = np.zeros(d.l2)
    checks: Dict[str, Optional[bool]] = {}
    worst: Dict[str, float] = {}

    checks["u_inequality"] = hyp.check_u_inequality(d.l2, seed=seed)
    checks["u_blowup"] = hyp.check_u_blowup(d.l2)
    checks["f_bound"] = hyp.check_f_bound(x1)

    v0 = hyp.V0.lifted(d.l1, d.l2, component=1)
    drift_gap = np.array(
        [apply_generator(system, v0, np.concatenate([p, zero])) for p in x1]
    ) - (hyp.K3 - hyp.K4 * evaluate_field(hyp.V1, x1))
    worst["lyapunov_drift"] = float(drift_gap.max())
    checks["lyapunov_drift"] = bool(worst["lyapunov_drift"] <= 1e-9)

    u = hyp.u_field(d.l2)
    u_lift = u.lifted(d.l1, d.l2, component=2)
    f1 = evaluate_field(hyp.f1, x1)
    f2 = evaluate_field(hyp.f2, x1)
    generator_gap, f2_gap = [], []
    for p, q, lower, upper in zip(x1, x2, f1, f2):
        z = np.concatenate([p, q])
        generator_gap.append(lower - apply_generator(system, u_lift, z))
        diffusion = u.grad(q) @ system.diff2(p, q)
        jumps = math.fsum(
            w * math.exp(-hyp.alpha0 * max(u(q + system.jump2.vector(p, q, mark)) - u(q), 0.0))
            for mark, w in system.levy2
        )
        f2_gap.append(float(diffusion @ diffusion) + jumps - upper)
    worst["generator_bound"] = float(max(generator_gap))
    worst["f2_bound"] = float(max(f2_gap))
    checks["generator_bound"] = bool(worst["generator_bound"] <= 1e-9)
    checks["f2_bound"] = bool(worst["f2_bound"] <= 1e-9)

    if d.d1 >= d.l1 and d.l1 > 0:
        sigma = system.diff1(x1, np.zeros((samples, d.l2)))
        smallest = np.linalg.svd(sigma, compute_uv=False)[:, d.l1 - 1]
        inverse_norm = np.where(smallest > 0, 1.0 / np.where(smallest > 0, smallest, 1.0), np.inf)
        worst["right_inverse"] = float(inverse_norm.max())
        checks["right_inverse"] = bool(worst["right_inverse"] <= hyp.c_sigma)
    else:
        checks["right_inverse"] = False

    failed = [name for name, ok in checks.items() if ok is False]
    if failed:
        logger.warning(f"{system.name}: hypothesis checks failed: {failed}")
    return HypothesisReport(checks, worst)
