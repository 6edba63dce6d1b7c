"""
Euler–Maruyama integration with compensated finite-activity jumps.

One step of size dt advances every component as

    x += b dt + sigma dW + sum_atoms (count_atom - weight_atom dt) * gamma(x-, mark_atom)

where counts are Poisson(weight dt) per atom and all coefficients are read at
the pre-step state. Paths are simulated in vectorised batches; every path
owns its random streams (see ``rng.make_streams``) and draws them in fixed
blocks, so a path is reproduced bit for bit whatever batch it runs in.
"""

from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np
import pandas as pd

from .config import IntegratorConfig, engine_config
from .exceptions import DimensionMismatchError, DivergenceError
from .rng import PathStreams, make_streams
from .systems import CoefficientField, CoupledJumpDiffusion, JumpEvent, PathSample

logger = logging.getLogger(__name__)

StateLike = Union[np.ndarray, Sequence[float], Tuple[Sequence[float], Sequence[float]]]


class GaussianChannel:
    """Standard normal draws of one Brownian channel for a batch of paths."""

    def __init__(self, generators: Sequence[np.random.Generator], dim: int, chunk: Optional[int] = None):
        self.generators = list(generators)
        self.dim = dim
        self.chunk = chunk or engine_config.NOISE_CHUNK
        self._block = np.zeros((len(self.generators), 0, dim))

    def draw(self, step: int) -> np.ndarray:
        offset = step % self.chunk
        if offset == 0 or self._block.shape[1] == 0:
            self._block = np.stack([g.standard_normal((self.chunk, self.dim)) for g in self.generators])
        return self._block[:, offset, :]


class PoissonChannel:
    """Per-atom arrival counts of one jump channel for a batch of paths."""

    def __init__(self, generators: Sequence[np.random.Generator], means: np.ndarray, chunk: Optional[int] = None):
        self.generators = list(generators)
        self.means = np.asarray(means, dtype=float)
        self.chunk = chunk or engine_config.NOISE_CHUNK
        self._block = np.zeros((len(self.generators), 0, self.means.size))

    def draw(self, step: int) -> np.ndarray:
        if self.means.size == 0:
            return np.zeros((len(self.generators), 0))
        offset = step % self.chunk
        if offset == 0 or self._block.shape[1] == 0:
            self._block = np.stack(
                [g.poisson(self.means, size=(self.chunk, self.means.size)) for g in self.generators]
            ).astype(float)
        return self._block[:, offset, :]


def euler_increment(
    drift: CoefficientField,
    diff: CoefficientField,
    jump: CoefficientField,
    marks: np.ndarray,
    rates: np.ndarray,
    x1: np.ndarray,
    x2: np.ndarray,
    dW: np.ndarray,
    counts: np.ndarray,
    dt: float,
    drift_scale: float = 1.0,
    diff_scale: float = 1.0,
) -> np.ndarray:
    """Euler increment of one component for a batch, coefficients at (x1, x2)."""
    inc = drift.vector(x1, x2) * drift_scale * dt
    inc = inc + np.einsum("pij,pj->pi", diff(x1, x2), dW) * diff_scale
    for atom, mark in enumerate(marks):
        amount = counts[:, atom] - rates[atom] * dt
        inc = inc + amount[:, None] * jump.vector(x1, x2, mark)
    return inc


@dataclass
class BatchTrajectory:
    """Recorded states of a batch; diverged paths are frozen at their last finite state."""

    times: np.ndarray  # (R,)
    states: np.ndarray  # (P, R, D)
    path_indices: List[int]
    diverged_at: np.ndarray  # (P,), nan when the path survived
    jump_logs: List[List[JumpEvent]]

    @property
    def alive(self) -> np.ndarray:
        return np.isnan(self.diverged_at)

    @classmethod
    def concatenate(cls, parts: Sequence["BatchTrajectory"]) -> "BatchTrajectory":
        return cls(
            times=parts[0].times,
            states=np.concatenate([p.states for p in parts], axis=0),
            path_indices=[i for p in parts for i in p.path_indices],
            diverged_at=np.concatenate([p.diverged_at for p in parts]),
            jump_logs=[log for p in parts for log in p.jump_logs],
        )

    def raise_if_diverged(self, position: int = 0) -> None:
        if not self.alive[position]:
            raise DivergenceError(
                f"path {self.path_indices[position]} diverged at t={self.diverged_at[position]:.6g}",
                time=float(self.diverged_at[position]),
                path_index=self.path_indices[position],
            )


class BatchStepper(ABC):
    """Time loop shared by every simulator: recording, divergence guard, jump log."""

    def __init__(self, cfg: IntegratorConfig, path_indices: Sequence[int]):
        self.cfg = cfg
        self.dt = cfg.dt
        self.sqrt_dt = math.sqrt(cfg.dt)
        self.path_indices = [int(i) for i in path_indices]
        self.streams: List[PathStreams] = [make_streams(cfg.master_seed, i) for i in self.path_indices]
        self.jump_logs: List[List[JumpEvent]] = [[] for _ in self.path_indices]

    @property
    def n_paths(self) -> int:
        return len(self.path_indices)

    @abstractmethod
    def initial_state(self) -> np.ndarray:
        """Batch initial state (P, D)."""
        pass

    @abstractmethod
    def advance(self, step: int, t: float, state: np.ndarray) -> np.ndarray:
        """Return the state after one step; must not modify ``state``."""
        pass

    def log_jumps(self, counts: np.ndarray, t: float, component: int) -> None:
        if counts.size == 0 or not counts.any():
            return
        for position, atom in zip(*np.nonzero(counts)):
            event = JumpEvent(t, component, int(atom))
            self.jump_logs[position].extend([event] * int(counts[position, atom]))

    @staticmethod
    def _bad(state: np.ndarray) -> np.ndarray:
        flat = state.reshape(state.shape[0], -1)
        return ~np.all(np.isfinite(flat), axis=1) | (np.abs(flat).max(axis=1, initial=0.0) > engine_config.DIVERGENCE_BOUND)

    def run(self) -> BatchTrajectory:
        cfg = self.cfg
        state = np.array(self.initial_state(), dtype=float)
        records = np.empty((state.shape[0], cfg.record_steps) + state.shape[1:])
        records[:, 0] = state
        times = np.arange(cfg.record_steps) * (cfg.record_stride * cfg.dt)
        diverged_at = np.full(state.shape[0], np.nan)
        alive = ~self._bad(state)
        diverged_at[~alive] = 0.0

        with np.errstate(all="ignore"):
            for step in range(cfg.n_steps):
                new = self.advance(step, step * self.dt, state)
                bad = alive & self._bad(new)
                if bad.any():
                    diverged_at[bad] = (step + 1) * self.dt
                    alive &= ~bad
                    logger.debug(f"{int(bad.sum())} path(s) diverged at step {step + 1}")
                if not alive.all():
                    new[~alive] = state[~alive]
                state = new
                if (step + 1) % cfg.record_stride == 0:
                    records[:, (step + 1) // cfg.record_stride] = state

        return BatchTrajectory(times, records, self.path_indices, diverged_at, self.jump_logs)


def run_chunked(
    factory: Callable[[List[int]], BatchStepper],
    path_indices: Sequence[int],
    threads: int = 1,
) -> BatchTrajectory:
    """
    Simulate an ensemble in fixed-size path chunks, optionally on a thread pool.

    Chunk boundaries do not depend on ``threads`` and results are reassembled
    in path order.
    """
    indices = [int(i) for i in path_indices]
    size = engine_config.ENSEMBLE_CHUNK
    chunks = [indices[i : i + size] for i in range(0, len(indices), size)]
    logger.debug(f"Simulating {len(indices)} paths in {len(chunks)} chunk(s) on {threads} thread(s)")

    def work(chunk: List[int]) -> BatchTrajectory:
        return factory(chunk).run()

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(chunk) for chunk in chunks]
    return BatchTrajectory.concatenate(parts)


def initial_state(system: CoupledJumpDiffusion, z0: StateLike) -> np.ndarray:
    """Flat initial state from (x1, x2) or an already stacked vector."""
    if isinstance(z0, tuple) and len(z0) == 2:
        x1 = np.atleast_1d(np.asarray(z0[0], dtype=float))
        x2 = np.atleast_1d(np.asarray(z0[1], dtype=float))
        if x1.size != system.dims.l1 or x2.size != system.dims.l2:
            raise DimensionMismatchError(
                f"initial point has dims ({x1.size}, {x2.size}), system expects ({system.dims.l1}, {system.dims.l2})"
            )
        return np.concatenate([x1, x2])
    z = np.atleast_1d(np.asarray(z0, dtype=float)).reshape(-1)
    if z.size != system.dims.state_dim:
        raise DimensionMismatchError(f"initial point has {z.size} entries, system expects {system.dims.state_dim}")
    return z


class CoupledStepper(BatchStepper):
    """
    Batch stepper for a CoupledJumpDiffusion.

    ``boundary`` pins x2 at zero. ``time_scale`` = eps runs component 1 on the
    fast clock: drift / eps, diffusion / sqrt(eps), jump intensities / eps.
    """

    def __init__(
        self,
        system: CoupledJumpDiffusion,
        z0: np.ndarray,
        cfg: IntegratorConfig,
        path_indices: Sequence[int],
        boundary: bool = False,
        time_scale: float = 1.0,
    ):
        super().__init__(cfg, path_indices)
        self.system = system
        self.z0 = np.asarray(z0, dtype=float)
        self.boundary = boundary
        self.drift_scale = 1.0 / time_scale
        self.diff_scale = 1.0 / math.sqrt(time_scale)
        self.rates1 = system.levy1.weights / time_scale
        self.rates2 = system.levy2.weights
        self.w1 = GaussianChannel([s.brownian1 for s in self.streams], system.dims.d1)
        self.n1 = PoissonChannel([s.jumps1 for s in self.streams], self.rates1 * cfg.dt)
        self.w2 = GaussianChannel([s.brownian2 for s in self.streams], system.dims.d2)
        self.n2 = PoissonChannel([s.jumps2 for s in self.streams], self.rates2 * cfg.dt)

    def initial_state(self) -> np.ndarray:
        state = np.broadcast_to(self.z0, (self.n_paths, self.system.dims.state_dim)).copy()
        if self.boundary:
            state[:, self.system.dims.l1 :] = 0.0
        return state

    def advance(self, step: int, t: float, state: np.ndarray) -> np.ndarray:
        sys = self.system
        l1 = sys.dims.l1
        x1, x2 = state[:, :l1], state[:, l1:]
        counts1 = self.n1.draw(step)
        inc1 = euler_increment(
            sys.drift1, sys.diff1, sys.jump1, sys.levy1.marks, self.rates1,
            x1, x2, self.sqrt_dt * self.w1.draw(step), counts1, self.dt,
            self.drift_scale, self.diff_scale,
        )
        self.log_jumps(counts1, t + self.dt, 1)
        if self.boundary:
            return np.concatenate([x1 + inc1, x2], axis=1)
        counts2 = self.n2.draw(step)
        inc2 = euler_increment(
            sys.drift2, sys.diff2, sys.jump2, sys.levy2.marks, self.rates2,
            x1, x2, self.sqrt_dt * self.w2.draw(step), counts2, self.dt,
        )
        self.log_jumps(counts2, t + self.dt, 2)
        return np.concatenate([x1 + inc1, x2 + inc2], axis=1)


@dataclass
class EnsembleResult:
    """Ensemble of recorded paths of a CoupledJumpDiffusion."""

    system: CoupledJumpDiffusion
    trajectory: BatchTrajectory

    @property
    def times(self) -> np.ndarray:
        return self.trajectory.times

    @property
    def x1(self) -> np.ndarray:
        return self.trajectory.states[:, :, : self.system.dims.l1]

    @property
    def x2(self) -> np.ndarray:
        return self.trajectory.states[:, :, self.system.dims.l1 :]

    @property
    def alive(self) -> np.ndarray:
        return self.trajectory.alive

    @property
    def n_diverged(self) -> int:
        return int((~self.alive).sum())

    def path(self, position: int) -> PathSample:
        """PathSample of one ensemble member; raises DivergenceError if it diverged."""
        self.trajectory.raise_if_diverged(position)
        return PathSample(
            times=self.times,
            x1=self.x1[position],
            x2=self.x2[position],
            jump_log=tuple(self.trajectory.jump_logs[position]),
            path_index=self.trajectory.path_indices[position],
        )

    def paths(self) -> List[PathSample]:
        return [self.path(i) for i in np.flatnonzero(self.alive)]

    def to_frame(self) -> pd.DataFrame:
        """All paths in path order; a diverged path stops at its last recorded finite time."""
        frames = []
        for position, index in enumerate(self.trajectory.path_indices):
            cut = self.trajectory.diverged_at[position]
            keep = self.times < cut if np.isfinite(cut) else np.ones(self.times.size, dtype=bool)
            if keep.any():
                sample = PathSample(self.times[keep], self.x1[position][keep], self.x2[position][keep], path_index=index)
                frames.append(sample.to_frame())
        return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()


def simulate_ensemble(
    system: CoupledJumpDiffusion,
    z0: StateLike,
    cfg: IntegratorConfig,
    path_indices: Optional[Sequence[int]] = None,
    n_paths: Optional[int] = None,
    boundary: bool = False,
    time_scale: float = 1.0,
    threads: int = 1,
) -> EnsembleResult:
    """
    Simulate many paths of ``system`` from the same initial point.

    Args:
        system: the coupled jump diffusion
        z0: initial point, (x1, x2) or stacked
        cfg: time grid and master seed
        path_indices: explicit path indices (defaults to range(n_paths))
        n_paths: ensemble size when ``path_indices`` is omitted
        boundary: pin x2 at zero
        time_scale: eps of a fast component 1 (1.0 = ordinary system)
        threads: worker threads

    Returns:
        EnsembleResult: recorded states and per-path divergence times
    """
    if path_indices is None:
        path_indices = range(n_paths if n_paths is not None else 1)
    z = initial_state(system, z0)

    def factory(chunk: List[int]) -> CoupledStepper:
        return CoupledStepper(system, z, cfg, chunk, boundary=boundary, time_scale=time_scale)

    result = EnsembleResult(system, run_chunked(factory, path_indices, threads))
    if result.n_diverged:
        logger.warning(f"{system.name}: {result.n_diverged} of {len(result.alive)} path(s) diverged")
    return result


def simulate_path(system: CoupledJumpDiffusion, z0: StateLike, cfg: IntegratorConfig, path_index: int = 0) -> PathSample:
    """One path of the full system; the stream is a function of (master_seed, path_index)."""
    return simulate_ensemble(system, z0, cfg, path_indices=[path_index]).path(0)


def simulate_boundary_x1(
    system: CoupledJumpDiffusion, x1_0: Sequence[float], cfg: IntegratorConfig, path_index: int = 0
) -> PathSample:
    """One path of component 1 with x2 pinned at zero."""
    z0 = (x1_0, np.zeros(system.dims.l2))
    return simulate_ensemble(system, z0, cfg, path_indices=[path_index], boundary=True).path(0)
