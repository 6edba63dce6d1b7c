"""
Weak stabilization by linear feedback u(t) = A X1(t) on the interacting
component.

f1 is read as an upper bound on the log-growth of the controlled system:
a negative occupation average of f1 means the feedback stabilized it.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple
import logging
import math

import numpy as np
from scipy.optimize import linprog

from .config import IntegratorConfig, engine_config
from .exceptions import NoInvariantMeasureError, SingularMatrixError, ValidationError
from .generator import apply_generator
from .rng import sampling_generator
from .stability import StabilityHypotheses, estimate_invariant_measure, estimate_lambda, estimate_log_lyapunov_exponent
from .systems import CoefficientField, CoupledJumpDiffusion, ScalarField
from .utils import Estimate, MatrixUtils

logger = logging.getLogger(__name__)

# Smallest gain accepted by synthesize_gain
KAPPA_FLOOR = 1e-6
# Gain = KAPPA_FACTOR * threshold
KAPPA_FACTOR = 1.5


def _check_weight_matrix(Q) -> np.ndarray:
    Q = MatrixUtils.as_square(Q, "Q")
    if not MatrixUtils.is_symmetric(Q):
        raise ValidationError("Q must be symmetric")
    smallest = float(np.linalg.eigvalsh(Q)[0])
    if abs(smallest) <= 1e-14 * max(1.0, float(np.abs(Q).max())):
        raise SingularMatrixError("Q is singular")
    if smallest < 0:
        raise ValidationError(f"Q must be positive definite, smallest eigenvalue {smallest:.3g}")
    return Q


def compute_lambda_A(Q, A) -> float:
    """lambda_A = -max_{|x| = 1} xᵀQAx, the negated top eigenvalue of sym(QA)."""
    Q = MatrixUtils.as_square(Q, "Q")
    if not MatrixUtils.is_symmetric(Q):
        raise ValidationError("Q must be symmetric")
    A = MatrixUtils.as_square(A, "A", Q.shape[0])
    return -float(np.linalg.eigvalsh(MatrixUtils.symmetric_part(Q @ A))[-1])


@dataclass(frozen=True, eq=False)
class FeedbackGainDesign:
    """
    Gain A with its rate lambda_A and the design threshold
    (K2 c1 + K1 c2) / K1 it has to exceed. The bound constants are optional
    when the threshold was given directly.
    """

    Q: np.ndarray
    A: np.ndarray
    lambda_A: float
    threshold: float
    c1: Optional[float] = None
    c2: Optional[float] = None
    K1: Optional[float] = None
    K2: Optional[float] = None

    def __post_init__(self):
        Q = _check_weight_matrix(self.Q)
        A = MatrixUtils.as_square(self.A, "A", Q.shape[0])
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "A", A)
        exact = compute_lambda_A(Q, A)
        if not math.isclose(self.lambda_A, exact, rel_tol=1e-9, abs_tol=1e-12):
            raise ValidationError(f"lambda_A={self.lambda_A} does not match the eigenvalue value {exact}")

    @classmethod
    def from_bounds(cls, Q, K1: float, K2: float, c1: float, c2: float) -> "FeedbackGainDesign":
        """Synthesize A for f1 <= -K1 + K2|x1|² and L(x1ᵀQx1) <= c1 + c2|x1|²."""
        if not (K1 > 0 and K2 >= 0 and c1 >= 0 and c2 >= 0):
            raise ValidationError(f"need K1 > 0 and K2, c1, c2 >= 0, got K1={K1}, K2={K2}, c1={c1}, c2={c2}")
        design = synthesize_gain(Q, (K2 * c1 + K1 * c2) / K1)
        return cls(design.Q, design.A, design.lambda_A, design.threshold, c1=c1, c2=c2, K1=K1, K2=K2)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def satisfies_design(self) -> bool:
        return self.lambda_A > self.threshold

    @property
    def margin(self) -> float:
        return self.lambda_A - self.threshold

    @property
    def analytic_bound(self) -> Optional[float]:
        """-K1 + K2 c1 / (lambda_A - c2), the guaranteed upper bound on ∫f1 dPi1."""
        if None in (self.K1, self.K2, self.c1, self.c2):
            return None
        if self.lambda_A <= self.c2:
            return float("inf")
        return -self.K1 + self.K2 * self.c1 / (self.lambda_A - self.c2)

    def control(self, x1: np.ndarray) -> np.ndarray:
        """u = A x1 for a batch (P, l1)."""
        return np.atleast_2d(x1) @ self.A.T


def synthesize_gain(Q, threshold: float) -> FeedbackGainDesign:
    """
    A = -kappa Q^-1 with kappa = max(1.5 threshold, 1e-6), so QA = -kappa I
    and lambda_A = kappa.

    Raises:
        SingularMatrixError: Q is singular
    """
    Q = _check_weight_matrix(Q)
    if not (math.isfinite(threshold) and threshold >= 0):
        raise ValidationError(f"threshold must be finite and nonnegative, got {threshold}")
    kappa = max(KAPPA_FACTOR * threshold, KAPPA_FLOOR)
    try:
        A = -kappa * np.linalg.inv(Q)
    except np.linalg.LinAlgError as e:
        raise SingularMatrixError(f"Q is singular: {e}")
    design = FeedbackGainDesign(Q, A, compute_lambda_A(Q, A), float(threshold))
    logger.info(f"synthesized gain kappa={kappa:.4g}, lambda_A={design.lambda_A:.4g}, margin={design.margin:.4g}")
    return design


def controlled_system(system: CoupledJumpDiffusion, A) -> CoupledJumpDiffusion:
    """Closed loop: drift1(x1, x2) + A x1."""
    A = MatrixUtils.as_square(A, "A", system.dims.l1)
    open_loop = system.drift1

    def evaluator(x1, x2):
        return open_loop(x1, x2) + (x1 @ A.T)[:, :, None]

    hint = None
    if open_loop.lipschitz_hint is not None:
        hint = open_loop.lipschitz_hint + float(np.linalg.norm(A, ord=2))
    field = CoefficientField(evaluator, (system.dims.l1, 1), lipschitz_hint=hint, name="drift1+Ax1")
    return system.with_drift1(field, name=f"{system.name}-controlled")


def estimate_generator_bound(
    system: CoupledJumpDiffusion,
    Q,
    samples: int = 256,
    radius: float = 3.0,
    seed: int = 0,
) -> Tuple[float, float]:
    """
    Smallest envelope c1 + c2|x1|² (c1, c2 >= 0, least mean excess) over
    sampled values of L(x1ᵀQx1) on {x2 = 0}.
    """
    d = system.dims
    Q = _check_weight_matrix(MatrixUtils.as_square(Q, "Q", d.l1))
    v = ScalarField.quadratic(Q).lifted(d.l1, d.l2, component=1)
    x1 = sampling_generator(seed).uniform(-radius, radius, size=(samples, d.l1))
    zero = np.zeros(d.l2)
    values = np.array([apply_generator(system, v, np.concatenate([p, zero])) for p in x1])
    squares = np.sum(x1**2, axis=1)

    # minimize c1 + mean(s) c2  s.t.  c1 + s_i c2 >= v_i
    result = linprog(
        c=[1.0, float(squares.mean())],
        A_ub=-np.column_stack([np.ones(samples), squares]),
        b_ub=-values,
        bounds=[(0, None), (0, None)],
        method="highs",
    )
    if not result.success:
        raise ValidationError(f"{system.name}: no quadratic envelope of the generator found ({result.message})")
    c1, c2 = (float(c) for c in result.x)
    logger.info(f"{system.name}: generator bound c1={c1:.4g}, c2={c2:.4g}")
    return c1, c2


STABILIZATION_COLUMNS = [
    "lambda_A",
    "threshold",
    "margin",
    "design_ok",
    "f1_average",
    "f1_stderr",
    "analytic_bound",
    "bound_consistent",
    "status",
    "exponent_hat",
    "fraction_decaying",
    "message",
]


@dataclass(frozen=True)
class StabilizationReport:
    """Outcome of a closed-loop verification; status is stabilized, not-stabilized or diverged."""

    design: FeedbackGainDesign
    f1_average: Estimate
    status: str
    bound_consistent: Optional[bool] = None
    exponent: Optional[Estimate] = None
    fraction_decaying: float = float("nan")
    message: str = ""

    @property
    def stabilized(self) -> bool:
        return self.status == "stabilized"

    def to_row(self) -> Dict[str, object]:
        return {
            "lambda_A": self.design.lambda_A,
            "threshold": self.design.threshold,
            "margin": self.design.margin,
            "design_ok": self.design.satisfies_design,
            "f1_average": self.f1_average.value,
            "f1_stderr": self.f1_average.stderr,
            "analytic_bound": self.design.analytic_bound,
            "bound_consistent": self.bound_consistent,
            "status": self.status,
            "exponent_hat": self.exponent.value if self.exponent is not None else float("nan"),
            "fraction_decaying": self.fraction_decaying,
            "message": self.message,
        }


def verify_weak_stabilization(
    system: CoupledJumpDiffusion,
    design: FeedbackGainDesign,
    hyp: StabilityHypotheses,
    cfg: IntegratorConfig,
    ensemble: int,
    x1_0: Optional[Sequence[float]] = None,
    x2_start: Optional[float] = None,
    threads: int = 1,
) -> StabilizationReport:
    """
    Simulate the controlled boundary system, estimate ∫f1 dPi1 and compare it
    with the analytic bound.

    With ``x2_start`` the full controlled system is also run from
    |x2(0)| = x2_start and the exponent of |X2| is reported.
    """
    if not design.satisfies_design:
        logger.warning(
            f"{system.name}: lambda_A={design.lambda_A:.4g} does not exceed the design threshold {design.threshold:.4g}"
        )
    closed = controlled_system(system, design.A)
    start = np.zeros(system.dims.l1) if x1_0 is None else np.atleast_1d(np.asarray(x1_0, dtype=float))
    nan = Estimate(float("nan"), float("nan"))
    try:
        occ = estimate_invariant_measure(closed, start, cfg, ensemble, threads=threads)
    except NoInvariantMeasureError as e:
        logger.warning(f"{closed.name}: {e}")
        return StabilizationReport(design=design, f1_average=nan, status="diverged", message=str(e))

    average = estimate_lambda(occ, hyp.f1)
    sigmas = engine_config.VERDICT_SIGMAS
    status = "stabilized" if average.upper(sigmas) < 0 else "not-stabilized"
    bound = design.analytic_bound
    consistent = None if bound is None else bool(average.value <= bound + sigmas * average.stderr)

    exponent, fraction = None, float("nan")
    if x2_start is not None:
        x2_0 = np.zeros(system.dims.l2)
        x2_0[0] = x2_start
        exponent = estimate_log_lyapunov_exponent(closed, (occ.mean(), x2_0), cfg, ensemble, threads=threads)
        fraction = exponent.fraction_below(0.0)

    logger.info(f"{closed.name}: ∫f1 dPi1 = {average.value:.4f} ± {average.stderr:.4f}, status = {status}")
    return StabilizationReport(
        design=design,
        f1_average=average,
        status=status,
        bound_consistent=consistent,
        exponent=exponent,
        fraction_decaying=fraction,
    )
