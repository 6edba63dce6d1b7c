"""
Leader-following consensus over a noisy measurement network.

Agent 0 is the leader, agents 1..N are followers; all share the plant noise W:

    dx0 = f(x0) dt + dW
    dxi = f(xi) dt + B K sum_j a_ij (xj - xi) dt + dW
          + sum_j a_ij B K (xj - xi) (sigma_ji dw_ji + ∫gamma_ji dÑ_ji)

Each ordered edge (j -> i) owns an independent Brownian motion w_ji and
jump process Ñ_ji. The errors X_i = x_i - x0 follow the Kronecker system

    dX = (F(x0, X) - (H ⊗ BK) X) dt + sum_e M_e X (sigma_e dw_e + ∫gamma_e dÑ_e)

with M_e = S_ij ⊗ BK for follower edges and -Sbar_i ⊗ BK for leader edges.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple
import logging
import math

import networkx as nx
import numpy as np
import pandas as pd

from .config import IntegratorConfig, engine_config
from .exceptions import DimensionMismatchError, GraphError, NoSpanningTreeError, ValidationError
from .integrator import BatchStepper, BatchTrajectory, GaussianChannel, PoissonChannel, run_chunked
from .rng import make_streams, sampling_generator
from .systems import LevyMeasure
from .utils import EnsembleStatistics, Estimate, LogSlopeFitter, MatrixUtils, frame_from_rows

logger = logging.getLogger(__name__)

AgentField = Callable[[np.ndarray], np.ndarray]
Edge = Tuple[int, int]


@dataclass(frozen=True, eq=False)
class LeaderFollowerGraph:
    """
    Communication graph on nodes 0..N; a_ij = 1 means follower i receives
    from node j. Row 0 is zero (the leader receives nothing) and the
    follower block is symmetric.
    """

    adjacency: np.ndarray

    def __post_init__(self):
        adjacency = np.asarray(self.adjacency)
        if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1] or adjacency.shape[0] < 2:
            raise GraphError(f"adjacency must be square with at least one follower, got shape {adjacency.shape}")
        if not np.isin(adjacency, (0, 1)).all():
            raise GraphError("adjacency entries must be 0 or 1")
        adjacency = adjacency.astype(int)
        if adjacency[0].any():
            raise GraphError("the leader row must be zero")
        if np.diag(adjacency).any():
            raise GraphError("self loops are not allowed")
        block = adjacency[1:, 1:]
        if not np.array_equal(block, block.T):
            raise GraphError("communication between followers must be undirected")
        adjacency.setflags(write=False)
        object.__setattr__(self, "adjacency", adjacency)
        self._check_spanning_tree()

    def _check_spanning_tree(self) -> None:
        digraph = nx.DiGraph()
        digraph.add_nodes_from(range(self.N + 1))
        receivers, senders = np.nonzero(self.adjacency)
        digraph.add_edges_from(zip(senders.tolist(), receivers.tolist()))
        reached = nx.descendants(digraph, 0)
        missing = sorted(set(range(1, self.N + 1)) - reached)
        if missing:
            raise NoSpanningTreeError(f"followers {missing} cannot be reached from the leader")

    @property
    def N(self) -> int:
        return self.adjacency.shape[0] - 1

    @property
    def a0(self) -> np.ndarray:
        """Leader edges (a_10, ..., a_N0)."""
        return self.adjacency[1:, 0].copy()

    @property
    def H_tilde(self) -> np.ndarray:
        """Follower Laplacian with leader edges on the diagonal."""
        block = self.adjacency[1:, 1:]
        degrees = self.adjacency[1:, :].sum(axis=1)
        return (np.diag(degrees) - block).astype(float)

    @property
    def laplacian(self) -> np.ndarray:
        """Full Laplacian of the graph, [[0, 0], [-a0, H_tilde]]."""
        out = np.zeros((self.N + 1, self.N + 1))
        out[1:, 0] = -self.a0
        out[1:, 1:] = self.H_tilde
        return out

    @property
    def edges(self) -> List[Edge]:
        """Ordered (receiver i, sender j) pairs with a_ij = 1, i >= 1."""
        receivers, senders = np.nonzero(self.adjacency)
        return [(int(i), int(j)) for i, j in zip(receivers, senders)]


def laplacian_from_adjacency(adjacency) -> LeaderFollowerGraph:
    """
    Raises:
        GraphError: malformed adjacency
        NoSpanningTreeError: some follower is not reachable from the leader
    """
    return LeaderFollowerGraph(np.asarray(adjacency))


def read_adjacency_list(text: str, n_followers: Optional[int] = None) -> LeaderFollowerGraph:
    """
    Parse "i j" lines (node 0 = leader). An edge touching 0 is a leader
    edge towards the other node; any other pair is an undirected follower
    edge. Blank lines and '#' comments are ignored.
    """
    pairs = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphError(f"line {number}: expected 'i j', got {raw!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphError(f"line {number}: node labels must be integers, got {raw!r}")
        if i < 0 or j < 0 or i == j:
            raise GraphError(f"line {number}: invalid edge {i} {j}")
        pairs.append((i, j))
    if not pairs:
        raise GraphError("adjacency list has no edges")

    N = max(max(p) for p in pairs) if n_followers is None else n_followers
    adjacency = np.zeros((N + 1, N + 1), dtype=int)
    for i, j in pairs:
        if max(i, j) > N:
            raise GraphError(f"edge {i} {j} exceeds {N} followers")
        if i == 0 or j == 0:
            adjacency[max(i, j), 0] = 1
        else:
            adjacency[i, j] = adjacency[j, i] = 1
    return LeaderFollowerGraph(adjacency)


def permute_followers(graph: LeaderFollowerGraph, perm: Sequence[int]) -> LeaderFollowerGraph:
    """Relabel followers: new follower k is old follower perm[k] (0-based), so H_tilde -> P H_tilde Pᵀ."""
    perm = np.asarray(perm, dtype=int)
    if sorted(perm.tolist()) != list(range(graph.N)):
        raise GraphError(f"not a permutation of {graph.N} followers: {perm.tolist()}")
    order = np.concatenate([[0], perm + 1])
    return LeaderFollowerGraph(graph.adjacency[np.ix_(order, order)])


def selector_matrices(graph: LeaderFollowerGraph) -> Tuple[Dict[Edge, np.ndarray], Dict[int, np.ndarray]]:
    """
    S_ij (s_ii = -a_ij, s_ij = a_ij) for follower edges and Sbar_i
    (sbar_ii = a_i0), keyed by 1-based labels. Checks
    H_tilde = sum Sbar_i - sum S_ij exactly.
    """
    N = graph.N
    S: Dict[Edge, np.ndarray] = {}
    S_bar: Dict[int, np.ndarray] = {}
    for i, j in graph.edges:
        if j == 0:
            m = np.zeros((N, N), dtype=int)
            m[i - 1, i - 1] = graph.adjacency[i, 0]
            S_bar[i] = m
        else:
            m = np.zeros((N, N), dtype=int)
            m[i - 1, i - 1] = -graph.adjacency[i, j]
            m[i - 1, j - 1] = graph.adjacency[i, j]
            S[(i, j)] = m
    zero = np.zeros((N, N), dtype=int)
    rebuilt = sum(S_bar.values(), zero) - sum(S.values(), zero)
    if not np.array_equal(rebuilt, graph.H_tilde.astype(int)):
        raise GraphError("selector matrices do not reproduce the Laplacian")
    return S, S_bar


@dataclass(frozen=True, eq=False)
class ConsensusProtocol:
    """u_i = K sum_j a_ij z_ji with symmetric gain K and input matrix B."""

    K: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        K = MatrixUtils.as_square(self.K, "K")
        B = MatrixUtils.as_square(self.B, "B", K.shape[0])
        if not MatrixUtils.is_symmetric(K):
            raise ValidationError("the protocol gain K must be symmetric")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.K.shape[0]

    @property
    def BK(self) -> np.ndarray:
        return self.B @ self.K


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """
    Measurement noise intensities sigma[j, i - 1] of edge j -> i and scalar
    jump multipliers: ``jumps`` applies to every edge unless ``edge_jumps``
    overrides it for an edge (i, j).
    """

    sigma: np.ndarray
    jumps: LevyMeasure = field(default_factory=LevyMeasure.empty)
    edge_jumps: Mapping[Edge, LevyMeasure] = field(default_factory=dict)

    def __post_init__(self):
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1] + 1:
            raise ValidationError(f"sigma must be (N + 1) x N, got {sigma.shape}")
        if not np.all(np.isfinite(sigma)):
            raise ValidationError("sigma has non-finite entries")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "edge_jumps", dict(self.edge_jumps))
        for measure in [self.jumps, *self.edge_jumps.values()]:
            if measure.dim != 1:
                raise ValidationError("edge jump marks are scalar multipliers")
            if np.any(1.0 + measure.marks[:, 0] == 0.0):
                raise ValidationError("edge jump multipliers must satisfy 1 + gamma != 0")

    @classmethod
    def zero(cls, N: int) -> "NoiseModel":
        return cls(np.zeros((N + 1, N)))

    @classmethod
    def uniform(cls, N: int, sigma: float, jumps: Optional[LevyMeasure] = None) -> "NoiseModel":
        return cls(np.full((N + 1, N), float(sigma)), jumps if jumps is not None else LevyMeasure.empty())

    @property
    def N(self) -> int:
        return self.sigma.shape[1]

    def scaled(self, factor: float) -> "NoiseModel":
        """Brownian intensities multiplied by ``factor``."""
        return NoiseModel(self.sigma * factor, self.jumps, self.edge_jumps)

    def edge_sigma(self, graph: LeaderFollowerGraph) -> np.ndarray:
        return np.array([self.sigma[j, i - 1] for i, j in graph.edges])

    def edge_atoms(self, graph: LeaderFollowerGraph) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(edge position, multiplier, rate) of every jump atom, flattened over edges."""
        positions, gammas, rates = [], [], []
        for position, edge in enumerate(graph.edges):
            for mark, weight in self.edge_jumps.get(edge, self.jumps):
                positions.append(position)
                gammas.append(float(mark[0]))
                rates.append(weight)
        return np.array(positions, dtype=int), np.array(gammas), np.array(rates)


def _check_inputs(graph: LeaderFollowerGraph, protocol: ConsensusProtocol, noise: NoiseModel) -> None:
    if noise.N != graph.N:
        raise DimensionMismatchError(f"noise model has {noise.N} followers, graph has {graph.N}")


def _agent_field(f: AgentField, x: np.ndarray) -> np.ndarray:
    """f on (P, M, n) stacks of agent states, evaluated row-wise."""
    flat = x.reshape(-1, x.shape[-1])
    out = np.asarray(f(flat), dtype=float)
    if out.shape != flat.shape:
        out = np.broadcast_to(out, flat.shape)
    return out.reshape(x.shape)


class _ConsensusStepper(BatchStepper):
    """Shared noise channels: plant W on brownian1, edge Brownians on brownian2, edge jumps on jumps2."""

    def __init__(self, graph, protocol, noise, f, start, cfg, path_indices):
        super().__init__(cfg, path_indices)
        _check_inputs(graph, protocol, noise)
        self.graph = graph
        self.protocol = protocol
        self.f = f
        self.start = np.asarray(start, dtype=float)
        self.edges = graph.edges
        self.edge_sigma = noise.edge_sigma(graph)
        self.atom_edge, self.atom_gamma, self.atom_rate = noise.edge_atoms(graph)
        self.w = GaussianChannel([s.brownian1 for s in self.streams], protocol.n)
        self.w_edges = GaussianChannel([s.brownian2 for s in self.streams], len(self.edges))
        self.n_edges = PoissonChannel([s.jumps2 for s in self.streams], self.atom_rate * cfg.dt)

    def initial_state(self) -> np.ndarray:
        if self.start.ndim == 3:
            return self.start.copy()
        return np.broadcast_to(self.start, (self.n_paths,) + self.start.shape).copy()

    def edge_amounts(self, step: int, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """(plant increment dW (P, n), per-edge scalar noise increments (P, E))."""
        dW = self.sqrt_dt * self.w.draw(step)
        amounts = self.edge_sigma * (self.sqrt_dt * self.w_edges.draw(step))
        counts = self.n_edges.draw(step)
        for atom, edge in enumerate(self.atom_edge):
            amounts[:, edge] += (counts[:, atom] - self.atom_rate[atom] * self.dt) * self.atom_gamma[atom]
        self.log_jumps(counts, t + self.dt, 2)
        return dW, amounts


class NetworkStepper(_ConsensusStepper):
    """State (P, N + 1, n): leader then followers."""

    def __init__(self, graph, protocol, noise, f, start, cfg, path_indices):
        super().__init__(graph, protocol, noise, f, start, cfg, path_indices)
        self.receivers = np.array([i for i, _ in self.edges], dtype=int)
        self.senders = np.array([j for _, j in self.edges], dtype=int)

    def advance(self, step: int, t: float, state: np.ndarray) -> np.ndarray:
        BK = self.protocol.BK
        dW, amounts = self.edge_amounts(step, t)
        inc = _agent_field(self.f, state) * self.dt + dW[:, None, :]
        if self.edges:
            diffs = state[:, self.senders, :] - state[:, self.receivers, :]  # (P, E, n)
            weights = self.dt + amounts  # ideal measurement plus noise
            contrib = np.einsum("ab,peb->pea", BK, diffs * weights[:, :, None])
            np.add.at(inc, (slice(None), self.receivers), contrib)
        return state + inc


class ErrorStepper(_ConsensusStepper):
    """State (P, N + 1, n): leader x0 then the errors X_i = x_i - x0."""

    def __init__(self, graph, protocol, noise, f, start, cfg, path_indices):
        super().__init__(graph, protocol, noise, f, start, cfg, path_indices)
        N, n = graph.N, protocol.n
        BK = protocol.BK
        S, S_bar = selector_matrices(graph)
        self.coupling = np.kron(graph.H_tilde, BK)
        blocks = []
        for i, j in self.edges:
            blocks.append(-np.kron(S_bar[i], BK) if j == 0 else np.kron(S[(i, j)], BK))
        self.edge_maps = np.array(blocks) if blocks else np.zeros((0, N * n, N * n))

    def advance(self, step: int, t: float, state: np.ndarray) -> np.ndarray:
        P, rows, n = state.shape
        x0 = state[:, :1, :]
        X = state[:, 1:, :]
        dW, amounts = self.edge_amounts(step, t)
        f0 = _agent_field(self.f, x0)
        vec = X.reshape(P, -1)
        drift = (_agent_field(self.f, x0 + X) - f0).reshape(P, -1) - vec @ self.coupling.T
        noise = np.einsum("enm,pm,pe->pn", self.edge_maps, vec, amounts)
        X_new = (vec + drift * self.dt + noise).reshape(P, rows - 1, n)
        x0_new = x0 + f0 * self.dt + dW[:, None, :]
        return np.concatenate([x0_new, X_new], axis=1)


@dataclass(frozen=True, eq=False)
class NetworkPath:
    times: np.ndarray
    states: np.ndarray  # (T, N + 1, n)
    path_index: int = 0

    @property
    def leader(self) -> np.ndarray:
        return self.states[:, 0, :]

    def errors(self) -> np.ndarray:
        """x_i - x0, (T, N, n)."""
        return self.states[:, 1:, :] - self.states[:, :1, :]


@dataclass(frozen=True, eq=False)
class ErrorPath:
    times: np.ndarray
    x0: np.ndarray  # (T, n)
    X: np.ndarray  # (T, N, n)
    path_index: int = 0


def _agent_block(values, rows: int, n: int, name: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.size == n and rows == 1:
        return values.reshape(1, n)
    if values.shape == (rows, n):
        return values
    if values.size == rows * n:
        return values.reshape(rows, n)
    raise DimensionMismatchError(f"{name} must be ({rows}, {n}), got shape {values.shape}")


def simulate_network_ensemble(
    graph, protocol, noise, f: AgentField, x0_init, followers_init, cfg: IntegratorConfig,
    path_indices: Sequence[int], threads: int = 1,
) -> BatchTrajectory:
    n = protocol.n
    start = np.concatenate(
        [_agent_block(x0_init, 1, n, "x0_init"), _agent_block(followers_init, graph.N, n, "followers_init")]
    )
    return run_chunked(lambda chunk: NetworkStepper(graph, protocol, noise, f, start, cfg, chunk), path_indices, threads)


def simulate_network(
    graph: LeaderFollowerGraph,
    protocol: ConsensusProtocol,
    noise: NoiseModel,
    f: AgentField,
    x0_init,
    followers_init,
    cfg: IntegratorConfig,
    path_index: int = 0,
) -> NetworkPath:
    """Leader and followers under the noisy protocol; f maps agent rows (M, n) to (M, n)."""
    traj = simulate_network_ensemble(graph, protocol, noise, f, x0_init, followers_init, cfg, [path_index])
    traj.raise_if_diverged(0)
    return NetworkPath(traj.times, traj.states[0], path_index)


def simulate_error_ensemble(
    graph, protocol, noise, f: AgentField, x0_init, error_init, cfg: IntegratorConfig,
    path_indices: Sequence[int], threads: int = 1,
) -> BatchTrajectory:
    n = protocol.n
    x0 = _agent_block(x0_init, 1, n, "x0_init")
    if error_init is None:
        error_init = np.zeros((graph.N, n))
    if np.ndim(error_init) < 3:
        start = np.concatenate([x0, _agent_block(error_init, graph.N, n, "error_init")])
    else:
        # per-path initial errors (P, N, n)
        error_init = np.asarray(error_init, dtype=float)
        start = np.concatenate([np.broadcast_to(x0, (error_init.shape[0], 1, n)), error_init], axis=1)

    lookup = {int(index): position for position, index in enumerate(path_indices)}

    def factory(chunk: List[int]) -> ErrorStepper:
        if start.ndim == 3:
            positions = [lookup[i] for i in chunk]
            return ErrorStepper(graph, protocol, noise, f, start[positions], cfg, chunk)
        return ErrorStepper(graph, protocol, noise, f, start, cfg, chunk)

    return run_chunked(factory, path_indices, threads)


def simulate_error_system(
    graph: LeaderFollowerGraph,
    protocol: ConsensusProtocol,
    noise: NoiseModel,
    f: AgentField,
    x0_init,
    error_init,
    cfg: IntegratorConfig,
    path_index: int = 0,
) -> ErrorPath:
    """
    Kronecker error system. Uses the same streams as simulate_network for
    the same (master_seed, path_index), so both agree path by path.
    """
    traj = simulate_error_ensemble(graph, protocol, noise, f, x0_init, error_init, cfg, [path_index])
    traj.raise_if_diverged(0)
    states = traj.states[0]
    return ErrorPath(traj.times, states[:, 0, :], states[:, 1:, :], path_index)


def _random_errors(graph: LeaderFollowerGraph, n: int, norm: float, cfg: IntegratorConfig, paths: int) -> np.ndarray:
    """Initial errors with random directions and total norm ``norm``, one per path, from its auxiliary stream."""
    directions = np.stack([make_streams(cfg.master_seed, k).auxiliary.standard_normal((graph.N, n)) for k in range(paths)])
    directions /= np.linalg.norm(directions.reshape(paths, -1), axis=1)[:, None, None]
    return norm * directions


CONSENSUS_COLUMNS = [
    "n_followers",
    "exponent_hat",
    "exponent_stderr",
    "fraction_decaying",
    "margin",
    "n_diverged",
    "verdict",
]


@dataclass(frozen=True)
class ConsensusReport:
    """Fitted exponents of max_i |x_i - x0| per path and the resulting verdict."""

    slopes: np.ndarray
    exponent: Estimate
    fraction_decaying: float
    margin: float
    n_diverged: int
    verdict: str
    n_followers: int = 0

    @property
    def consentable(self) -> bool:
        return self.verdict == "consentable-indicated"

    def to_row(self) -> Dict[str, object]:
        return {
            "n_followers": self.n_followers,
            "exponent_hat": self.exponent.value,
            "exponent_stderr": self.exponent.stderr,
            "fraction_decaying": self.fraction_decaying,
            "margin": self.margin,
            "n_diverged": self.n_diverged,
            "verdict": self.verdict,
        }

    def distribution(self) -> pd.DataFrame:
        """Quantiles of the per-path exponents."""
        finite = self.slopes[np.isfinite(self.slopes)]
        levels = [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0]
        values = np.quantile(finite, levels) if finite.size else np.full(len(levels), np.nan)
        return frame_from_rows([{"quantile": q, "exponent": v} for q, v in zip(levels, values)], ["quantile", "exponent"])


def consentability_verdict(
    graph: LeaderFollowerGraph,
    protocol: ConsensusProtocol,
    noise: NoiseModel,
    f: AgentField,
    cfg: IntegratorConfig,
    ensemble: int,
    x0_init=None,
    initial_error: float = 1e-2,
    margin: Optional[float] = None,
    threads: int = 1,
) -> ConsensusReport:
    """
    "consentable-indicated" when at least 90% of paths started at
    |X(0)| = initial_error have a fitted slope of ln max_i |x_i - x0| at or
    below -margin; diverged paths count as not decaying.
    """
    margin = engine_config.CONSENSUS_MARGIN if margin is None else margin
    n = protocol.n
    x0 = np.zeros(n) if x0_init is None else x0_init
    errors = _random_errors(graph, n, initial_error, cfg, ensemble)
    traj = simulate_error_ensemble(graph, protocol, noise, f, x0, errors, cfg, range(ensemble), threads=threads)

    alive = traj.alive
    slopes = np.full(ensemble, np.inf)
    if alive.any():
        norms = np.linalg.norm(traj.states[alive][:, :, 1:, :], axis=3).max(axis=2)
        floor = LogSlopeFitter.absorption_floor(float(norms[:, 0].max()), float(traj.times[-1]))
        slopes[alive], _ = LogSlopeFitter.fit(traj.times, norms, floor)
    n_diverged = int((~alive).sum())
    if n_diverged:
        logger.warning(f"{n_diverged} of {ensemble} consensus path(s) diverged")

    fraction = float(np.mean(slopes <= -margin))
    exponent = Estimate(*EnsembleStatistics.mean_stderr(slopes)) if alive.all() else Estimate(float("inf"), 0.0)
    verdict = "consentable-indicated" if fraction >= engine_config.CONSENSUS_FRACTION else "not-consentable"
    logger.info(f"consensus: exponent {exponent.value:.4f}, {fraction:.0%} of paths decaying, verdict = {verdict}")
    return ConsensusReport(
        slopes=slopes,
        exponent=exponent,
        fraction_decaying=fraction,
        margin=margin,
        n_diverged=n_diverged,
        verdict=verdict,
        n_followers=graph.N,
    )


def check_dissipativity(f: AgentField, n: int, samples: int = 1000, radius: float = 3.0, seed: int = 0) -> float:
    """
    max yᵀf(y) / |y|² over sampled y; f is dissipative (yᵀf(y) <= -c|y|²,
    c > 0) when the result is negative, and -result estimates c.
    """
    y = sampling_generator(seed).uniform(-radius, radius, size=(samples, n))
    y = y[np.linalg.norm(y, axis=1) > 0]
    values = np.asarray(f(y), dtype=float).reshape(y.shape)
    return float(np.max(np.einsum("pi,pi->p", y, values) / np.sum(y**2, axis=1)))


def linear_error_matrix(A, graph: LeaderFollowerGraph, protocol: ConsensusProtocol) -> np.ndarray:
    """I_N ⊗ A - H_tilde ⊗ BK, the drift of the error system for f(x) = Ax."""
    A = MatrixUtils.as_square(A, "A", protocol.n)
    return np.kron(np.eye(graph.N), A) - np.kron(graph.H_tilde, protocol.BK)


def linear_error_exponent(A, graph: LeaderFollowerGraph, protocol: ConsensusProtocol) -> float:
    """Largest real part of the noiseless linear error drift."""
    return float(np.max(np.linalg.eigvals(linear_error_matrix(A, graph, protocol)).real))


def linear_log_drift(
    A,
    graph: LeaderFollowerGraph,
    protocol: ConsensusProtocol,
    X,
    noise: Optional[NoiseModel] = None,
) -> float:
    """
    Generator of -ln|X| for f(x) = Ax at the stacked error X (N n,):
    -Xᵀ M X / |X|² without noise, plus the Brownian and jump terms of every
    edge when ``noise`` is given.
    """
    M = linear_error_matrix(A, graph, protocol)
    X = np.asarray(X, dtype=float).reshape(-1)
    if X.size != M.shape[0]:
        raise DimensionMismatchError(f"X must have {M.shape[0]} entries, got {X.size}")
    r2 = float(X @ X)
    if r2 == 0.0:
        raise ValidationError("ln|X| is undefined at X = 0")
    terms = [-float(X @ M @ X) / r2]
    if noise is not None:
        _check_inputs(graph, protocol, noise)
        S, S_bar = selector_matrices(graph)
        BK = protocol.BK
        position = {edge: k for k, edge in enumerate(graph.edges)}
        sigma = noise.edge_sigma(graph)
        atom_edge, atom_gamma, atom_rate = noise.edge_atoms(graph)
        for (i, j), k in position.items():
            v = (-np.kron(S_bar[i], BK) if j == 0 else np.kron(S[(i, j)], BK)) @ X
            s = sigma[k]
            terms.append(-0.5 * s * s * (float(v @ v) / r2 - 2.0 * float(X @ v) ** 2 / r2**2))
            for gamma, rate in zip(atom_gamma[atom_edge == k], atom_rate[atom_edge == k]):
                jumped = X + gamma * v
                terms.append(rate * (-0.5 * math.log(float(jumped @ jumped) / r2) + gamma * float(X @ v) / r2))
    return math.fsum(terms)
