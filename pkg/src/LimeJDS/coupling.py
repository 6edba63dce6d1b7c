"""
Synchronous coupling of the boundary process with the full system.

The triple (X1, X~1, X~2) runs X1 on {x2 = 0}, and (X~1, X~2) on the full
dynamics with the extra relaxation drift lam (X1 - X~1) on X~1. X1 and X~1
consume the same Brownian and Poisson draws of component 1.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence
import logging
import math

import numpy as np
import pandas as pd

from .config import IntegratorConfig, engine_config
from .exceptions import CouplingConfigError, DimensionMismatchError, RankDeficiencyError
from .integrator import BatchStepper, BatchTrajectory, GaussianChannel, PoissonChannel, euler_increment, run_chunked
from .systems import CoupledJumpDiffusion, PathSample
from .utils import EnsembleStatistics, frame_from_rows

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CouplingConfig:
    """Constants of the coupling argument."""

    lam: float  # relaxation gain, > 20 (1 + K2)
    lambda0: float  # exponential weight, in (0, gamma0 / 4)
    gamma0: float
    varsigma0: float
    alpha: float
    C_alpha0: float
    delta: float
    K2: float = 0.0
    alpha0: float = 1.0

    def __post_init__(self):
        bound = engine_config.COUPLING_GAIN_BOUND * (1.0 + self.K2)
        if not self.lam > bound:
            raise CouplingConfigError(f"coupling gain {self.lam} must exceed {bound} = 20 (1 + K2)")
        if not 0.0 < self.lambda0 < self.gamma0 / 4.0:
            raise CouplingConfigError(f"lambda0 = {self.lambda0} must lie in (0, gamma0 / 4 = {self.gamma0 / 4.0})")
        if not (self.varsigma0 > 0 and self.alpha > 0 and self.delta > 0 and self.alpha0 > 0):
            raise CouplingConfigError("varsigma0, alpha, alpha0 and delta must be positive")
        if not (self.C_alpha0 > 1.0 and self.C_alpha0 >= self.c_alpha0_sup(self.alpha0)):
            raise CouplingConfigError(
                f"C_alpha0 = {self.C_alpha0} must exceed 1 and sup_t t^2 exp(-alpha0 t / 2) = {self.c_alpha0_sup(self.alpha0):.6g}"
            )

    @staticmethod
    def c_alpha0_sup(alpha0: float, points: int = 4001) -> float:
        """sup over t >= 0 of t² exp(-alpha0 t / 2), on a grid covering the maximiser 4 / alpha0."""
        t = np.linspace(0.0, 40.0 / alpha0, points)
        return float(np.max(t**2 * np.exp(-0.5 * alpha0 * t)))

    @classmethod
    def from_estimates(
        cls,
        lambda1: float,
        lambda2: float,
        m0: float,
        alpha0: float,
        K2: float,
        delta: float,
        gamma0: Optional[float] = None,
        lambda0: Optional[float] = None,
        lam: Optional[float] = None,
    ) -> "CouplingConfig":
        """
        Apply the constant recipe: gamma0 = Lambda1 / (2 m0),
        varsigma0 = (Lambda1 - m0 gamma0) / 3, C_alpha0 = max(1, 16 e^-2 / alpha0²)
        with a small margin, alpha = varsigma0 / (2 C_alpha0 Lambda2),
        lambda0 = gamma0 / 8 and lam = 25 (1 + K2).
        """
        if not (lambda1 > 0 and lambda2 > 0):
            raise CouplingConfigError(f"coupling constants need Lambda1 > 0 and Lambda2 > 0, got {lambda1}, {lambda2}")
        gamma0 = lambda1 / (2.0 * m0) if gamma0 is None else gamma0
        varsigma0 = (lambda1 - m0 * gamma0) / 3.0
        C_alpha0 = max(1.0, 16.0 * math.exp(-2.0) / alpha0**2) * (1.0 + 1e-6)
        return cls(
            lam=engine_config.COUPLING_GAIN_FACTOR * (1.0 + K2) if lam is None else lam,
            lambda0=gamma0 / 8.0 if lambda0 is None else lambda0,
            gamma0=gamma0,
            varsigma0=varsigma0,
            alpha=varsigma0 / (2.0 * C_alpha0 * lambda2),
            C_alpha0=C_alpha0,
            delta=delta,
            K2=K2,
            alpha0=alpha0,
        )


@dataclass(frozen=True, eq=False)
class CoupledTriple:
    """Boundary path X1 (x2 column identically zero) and the coupled path (X~1, X~2)."""

    boundary: PathSample
    tilde: PathSample

    @property
    def times(self) -> np.ndarray:
        return self.boundary.times

    @property
    def x1(self) -> np.ndarray:
        return self.boundary.x1

    @property
    def x1_tilde(self) -> np.ndarray:
        return self.tilde.x1

    @property
    def x2_tilde(self) -> np.ndarray:
        return self.tilde.x2


class TripleStepper(BatchStepper):
    """State layout per path: [X1 (l1), X~1 (l1), X~2 (l2)]."""

    def __init__(
        self,
        system: CoupledJumpDiffusion,
        start: np.ndarray,
        lam: float,
        cfg: IntegratorConfig,
        path_indices: Sequence[int],
    ):
        super().__init__(cfg, path_indices)
        self.system = system
        self.start = start
        self.lam = lam
        self.w1 = GaussianChannel([s.brownian1 for s in self.streams], system.dims.d1)
        self.n1 = PoissonChannel([s.jumps1 for s in self.streams], system.levy1.weights * cfg.dt)
        self.w2 = GaussianChannel([s.brownian2 for s in self.streams], system.dims.d2)
        self.n2 = PoissonChannel([s.jumps2 for s in self.streams], system.levy2.weights * cfg.dt)

    def initial_state(self) -> np.ndarray:
        return np.broadcast_to(self.start, (self.n_paths, self.start.size)).copy()

    def advance(self, step: int, t: float, state: np.ndarray) -> np.ndarray:
        sys = self.system
        l1 = sys.dims.l1
        x1, xt1, xt2 = state[:, :l1], state[:, l1 : 2 * l1], state[:, 2 * l1 :]
        zero = np.zeros_like(xt2)

        dW1 = self.sqrt_dt * self.w1.draw(step)
        counts1 = self.n1.draw(step)
        marks1, rates1 = sys.levy1.marks, sys.levy1.weights
        inc_boundary = euler_increment(sys.drift1, sys.diff1, sys.jump1, marks1, rates1, x1, zero, dW1, counts1, self.dt)
        inc_tilde = euler_increment(sys.drift1, sys.diff1, sys.jump1, marks1, rates1, xt1, xt2, dW1, counts1, self.dt)
        # relaxation last, so a zero gap reproduces the boundary step exactly
        inc_tilde = inc_tilde + self.lam * (x1 - xt1) * self.dt

        counts2 = self.n2.draw(step)
        inc2 = euler_increment(
            sys.drift2, sys.diff2, sys.jump2, sys.levy2.marks, sys.levy2.weights,
            xt1, xt2, self.sqrt_dt * self.w2.draw(step), counts2, self.dt,
        )
        self.log_jumps(counts1, t + self.dt, 1)
        self.log_jumps(counts2, t + self.dt, 2)
        return np.concatenate([x1 + inc_boundary, xt1 + inc_tilde, xt2 + inc2], axis=1)


def _start_vector(system: CoupledJumpDiffusion, x1_0, z_tilde_0) -> np.ndarray:
    x1 = np.atleast_1d(np.asarray(x1_0, dtype=float))
    xt1 = np.atleast_1d(np.asarray(z_tilde_0[0], dtype=float))
    xt2 = np.atleast_1d(np.asarray(z_tilde_0[1], dtype=float))
    d = system.dims
    if x1.size != d.l1 or xt1.size != d.l1 or xt2.size != d.l2:
        raise DimensionMismatchError(f"triple start dims ({x1.size}, {xt1.size}, {xt2.size}) != ({d.l1}, {d.l1}, {d.l2})")
    return np.concatenate([x1, xt1, xt2])


def simulate_triples(
    system: CoupledJumpDiffusion,
    x1_0,
    z_tilde_0,
    ccfg: CouplingConfig,
    cfg: IntegratorConfig,
    path_indices: Sequence[int],
    threads: int = 1,
) -> BatchTrajectory:
    """Batch of coupled triples; states are [X1, X~1, X~2] stacked per path."""
    start = _start_vector(system, x1_0, z_tilde_0)
    return run_chunked(lambda chunk: TripleStepper(system, start, ccfg.lam, cfg, chunk), path_indices, threads)


def simulate_coupled_triple(
    system: CoupledJumpDiffusion,
    x1_0,
    z_tilde_0,
    ccfg: CouplingConfig,
    cfg: IntegratorConfig,
    path_index: int = 0,
) -> CoupledTriple:
    """
    One coupled triple started at X1(0) = x1_0, (X~1, X~2)(0) = z_tilde_0.

    Raises:
        DivergenceError: as simulate_path
    """
    traj = simulate_triples(system, x1_0, z_tilde_0, ccfg, cfg, [path_index])
    traj.raise_if_diverged(0)
    l1 = system.dims.l1
    states = traj.states[0]
    events = tuple(traj.jump_logs[0])
    boundary = PathSample(
        traj.times,
        states[:, :l1],
        np.zeros((traj.times.size, system.dims.l2)),
        tuple(e for e in events if e.component == 1),
        path_index,
    )
    tilde = PathSample(traj.times, states[:, l1 : 2 * l1], states[:, 2 * l1 :], events, path_index)
    return CoupledTriple(boundary, tilde)


def _first_breach(times: np.ndarray, x2_norms: np.ndarray, delta: float, gamma0: float) -> np.ndarray:
    """Per path first grid time with |X~2| >= delta exp(-gamma0 t); inf when never."""
    breached = np.atleast_2d(x2_norms) >= delta * np.exp(-gamma0 * times)
    first = np.argmax(breached, axis=1)
    return np.where(breached.any(axis=1), times[first], np.inf)


def stopping_time_tau_delta(triple: CoupledTriple, ccfg: CouplingConfig) -> Optional[float]:
    """First grid time at which |X~2(t)| >= delta exp(-gamma0 t); None when never within the horizon."""
    tau = _first_breach(triple.times, np.linalg.norm(triple.x2_tilde, axis=1), ccfg.delta, ccfg.gamma0)[0]
    return None if math.isinf(tau) else float(tau)


def _right_inverses(sigma: np.ndarray) -> np.ndarray:
    """Stacked least-squares right inverses of sigma (N, l1, d1)."""
    singular = np.linalg.svd(sigma, compute_uv=False)
    top = singular[:, :1] if singular.shape[1] else np.zeros((sigma.shape[0], 1))
    rank = np.sum(singular > engine_config.PINV_RCOND * top, axis=1)
    if np.any(top[:, 0] == 0.0) or np.any(rank < sigma.shape[1]):
        raise RankDeficiencyError(
            "sigma1(x1, 0) has no right inverse (rank below l1): the diffusion of component 1 is degenerate"
        )
    return np.linalg.pinv(sigma, rcond=engine_config.PINV_RCOND)


def girsanov_drift(x1, x1_tilde, system: CoupledJumpDiffusion, ccfg: CouplingConfig) -> np.ndarray:
    """
    v = lam sigma1^+(X1, 0) (X1 - X~1), a vector of length d1, with lam = ccfg.lam.

    The system is autonomous, so v(t) is this value at the state (X1(t), X~1(t)).
    The budget ∫|v|² up to min(t, tau) is summed over recorded paths by
    estimate_coupling_decay.

    Raises:
        RankDeficiencyError: sigma1(X1, 0) is numerically rank deficient
    """
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    gap = x1 - np.atleast_1d(np.asarray(x1_tilde, dtype=float))
    sigma = system.diff1(x1[None, :], np.zeros((1, system.dims.l2)))
    if system.dims.d1 < system.dims.l1:
        raise RankDeficiencyError(f"sigma1 is {system.dims.l1}x{system.dims.d1}; a right inverse needs d1 >= l1")
    return ccfg.lam * (_right_inverses(sigma)[0] @ gap)


def _drift_energy(system: CoupledJumpDiffusion, times: np.ndarray, x1: np.ndarray, gap: np.ndarray, lam: float, tau: np.ndarray) -> np.ndarray:
    """Left Riemann sums of |v|² over [0, min(tau, T)] on the record grid, per path."""
    paths, steps, l1 = x1.shape
    sigma = system.diff1(x1.reshape(-1, l1), np.zeros((paths * steps, system.dims.l2)))
    v = lam * np.einsum("nij,nj->ni", _right_inverses(sigma), gap.reshape(-1, l1)).reshape(paths, steps, -1)
    energy = np.sum(v[:, :-1] ** 2, axis=2) * np.diff(times)[None, :]
    active = times[None, :-1] < tau[:, None]
    return np.sum(energy * active, axis=1)


@dataclass(frozen=True)
class CouplingGridPoint:
    x1_0: np.ndarray
    x1_tilde_0: np.ndarray
    delta: float
    x2_tilde_0: Optional[np.ndarray] = None  # default delta / 2 along the first axis

    def tilde_start(self, l2: int) -> np.ndarray:
        if self.x2_tilde_0 is not None:
            return np.atleast_1d(np.asarray(self.x2_tilde_0, dtype=float))
        start = np.zeros(l2)
        start[0] = 0.5 * self.delta
        return start


DECAY_COLUMNS = [
    "x1_0",
    "x1_tilde_0",
    "delta",
    "gap0",
    "ratio",
    "stderr",
    "budget_frequency",
    "budget_bound",
    "paths",
]


@dataclass
class CouplingDecayReport:
    rows: List[Dict[str, object]] = field(default_factory=list)

    @property
    def c_tilde_hat(self) -> float:
        """Largest ratio over grid points with surviving paths; NaN when none survived."""
        ratios = [float(row["ratio"]) for row in self.rows if row["paths"]]
        return max(ratios) if ratios else float("nan")

    @property
    def ratios(self) -> np.ndarray:
        return np.array([row["ratio"] for row in self.rows], dtype=float)

    def to_frame(self) -> pd.DataFrame:
        return frame_from_rows(self.rows, DECAY_COLUMNS)


def estimate_coupling_decay(
    system: CoupledJumpDiffusion,
    grid: Sequence[CouplingGridPoint],
    ccfg: CouplingConfig,
    cfg: IntegratorConfig,
    ensemble: int,
    epsilon: float = 0.1,
    c_sigma: Optional[float] = None,
    threads: int = 1,
) -> CouplingDecayReport:
    """
    Monte Carlo E sup_{t <= tau} exp(lambda0 t) |X1 - X~1|² per grid point,
    its ratio to (|x1 - x~1| + delta)², and the frequency of the drift budget
    event ∫|v|² >= (|gap0| + delta)² / epsilon with its bound
    C~ lam c_sigma epsilon / lambda0 (C~ = largest ratio on the grid).
    """
    if not grid:
        raise CouplingConfigError("coupling decay grid is empty")
    l1 = system.dims.l1
    rows, budgets = [], []
    for point in grid:
        point_cfg = replace(ccfg, delta=point.delta)
        z_tilde = (point.x1_tilde_0, point.tilde_start(system.dims.l2))
        traj = simulate_triples(system, point.x1_0, z_tilde, point_cfg, cfg, range(ensemble), threads)
        alive = traj.alive
        gap0 = float(np.linalg.norm(np.asarray(point.x1_0, dtype=float) - np.asarray(point.x1_tilde_0, dtype=float)))
        row = {
            "x1_0": " ".join(f"{v:.17g}" for v in np.atleast_1d(point.x1_0)),
            "x1_tilde_0": " ".join(f"{v:.17g}" for v in np.atleast_1d(point.x1_tilde_0)),
            "delta": point.delta,
            "gap0": gap0,
            "paths": int(alive.sum()),
        }
        if not alive.all():
            logger.warning(f"{system.name}: {int((~alive).sum())} coupled path(s) diverged at delta={point.delta}")
        if not alive.any():
            rows.append(dict(row, ratio=float("nan"), stderr=float("nan")))
            budgets.append((float("nan"), float("nan") if c_sigma is None else c_sigma))
            continue
        states = traj.states[alive]
        x1, xt1, xt2 = states[..., :l1], states[..., l1 : 2 * l1], states[..., 2 * l1 :]
        gap = x1 - xt1
        tau = _first_breach(traj.times, np.linalg.norm(xt2, axis=2), point.delta, point_cfg.gamma0)

        weighted = np.exp(point_cfg.lambda0 * traj.times)[None, :] * np.sum(gap**2, axis=2)
        weighted = np.where(traj.times[None, :] <= tau[:, None], weighted, -np.inf)
        scale = (gap0 + point.delta) ** 2
        ratio, stderr = EnsembleStatistics.mean_stderr(weighted.max(axis=1) / scale)

        energy = _drift_energy(system, traj.times, x1, gap, point_cfg.lam, tau)
        if c_sigma is None:
            sigma = system.diff1(x1.reshape(-1, l1), np.zeros((x1.shape[0] * x1.shape[1], system.dims.l2)))
            c_sigma_point = float(np.max(np.linalg.norm(_right_inverses(sigma), ord=2, axis=(1, 2))))
        else:
            c_sigma_point = c_sigma
        budgets.append((float(np.mean(energy >= scale / epsilon)), c_sigma_point))
        rows.append(dict(row, ratio=ratio, stderr=stderr))

    report = CouplingDecayReport(rows)
    c_tilde = report.c_tilde_hat
    c_budget = max(c_tilde, 1.0) if math.isfinite(c_tilde) else float("nan")
    for row, (frequency, c_sigma_point) in zip(rows, budgets):
        row["budget_frequency"] = frequency
        row["budget_bound"] = c_budget * ccfg.lam * c_sigma_point * epsilon / ccfg.lambda0
    logger.info(f"{system.name}: coupling decay ratios {report.ratios}, C~ = {c_tilde:.4g}")
    return report
