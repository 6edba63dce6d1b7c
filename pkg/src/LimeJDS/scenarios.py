"""
Built-in scenarios run from scenario files.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, ClassVar, Dict, List, Mapping, Optional, Tuple, Type
import importlib
import logging
import math

import numpy as np
import pandas as pd

from .config import ScenarioConfig
from .consensus import (
    CONSENSUS_COLUMNS,
    ConsensusProtocol,
    NoiseModel,
    check_dissipativity,
    consentability_verdict,
    linear_error_exponent,
    read_adjacency_list,
    simulate_error_ensemble,
)
from .control import (
    STABILIZATION_COLUMNS,
    FeedbackGainDesign,
    compute_lambda_A,
    controlled_system,
    estimate_generator_bound,
    verify_weak_stabilization,
)
from .exceptions import GraphError, ScenarioValidationError
from .fastslow import (
    SWEEP_COLUMNS,
    FastSlowSystem,
    averaged_exponent,
    lambda_star,
    lambda_sweep,
    simulate_fastslow_ensemble,
)
from .generator import validate_lipschitz
from .integrator import simulate_ensemble
from .polar import LinearizedCoefficients, sphere_occupation, stability_integral, system_from_linearization
from .stability import (
    REPORT_COLUMNS,
    OccupationMeasure,
    StabilityHypotheses,
    estimate_invariant_measure,
    estimate_log_lyapunov_exponent,
    scalar_exponent,
    stability_verdict,
)
from .systems import CoupledJumpDiffusion, LevyMeasure, ScalarField, make_system
from .utils import frame_from_rows

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Parameter:
    """Declared scenario parameter; kind is float, int, vector, matrix or string."""

    default: Any = None
    description: str = ""
    kind: str = "float"
    required: bool = False

    def parse(self, key: str, raw: str) -> Any:
        raw = raw.strip()
        try:
            if self.kind == "string":
                return raw
            if self.kind == "int":
                return int(raw)
            if self.kind == "float":
                return float(raw)
            if self.kind == "vector":
                parts = raw.strip("[]").replace(",", " ").split()
                return np.array([float(p) for p in parts])
            if self.kind == "matrix":
                rows = [r.replace(",", " ").split() for r in raw.strip("[]").split(";") if r.strip()]
                return np.array([[float(v) for v in row] for row in rows])
        except ValueError:
            raise ScenarioValidationError(f"[parameters] {key} = {raw!r} is not a valid {self.kind}")
        raise ScenarioValidationError(f"[parameters] {key}: unknown parameter kind {self.kind}")


@dataclass
class ScenarioResult:
    """Frames produced by a scenario; None for outputs the scenario does not produce."""

    report: pd.DataFrame
    trajectories: Optional[pd.DataFrame] = None
    occupation: Optional[pd.DataFrame] = None
    summary: Dict[str, Any] = field(default_factory=dict)

    def frame(self, kind: str) -> Optional[pd.DataFrame]:
        return {"paths": self.trajectories, "occupation": self.occupation, "report": self.report}[kind]


class BaseScenario(ABC):
    """Base class for all scenarios."""

    name: ClassVar[str] = ""
    model: ClassVar[str] = ""
    PARAMETERS: ClassVar[Dict[str, Parameter]] = {}
    OUTPUTS: ClassVar[Tuple[str, ...]] = ("paths", "occupation", "report")

    def __init__(self, config: ScenarioConfig, threads: int = 1):
        unsupported = [kind for kind in config.outputs if kind not in self.OUTPUTS]
        if unsupported:
            raise ScenarioValidationError(f"scenario '{self.name}' does not produce {unsupported}")
        self.config = config
        self.cfg = config.integrator
        self.ensemble = config.ensemble
        self.threads = threads
        self.params = self.resolve_parameters(config.parameters)

    @classmethod
    def resolve_parameters(cls, raw: Mapping[str, str]) -> Dict[str, Any]:
        unknown = sorted(set(raw) - set(cls.PARAMETERS))
        if unknown:
            raise ScenarioValidationError(f"unknown parameter(s) for '{cls.name}': {unknown}")
        values = {}
        for key, spec in cls.PARAMETERS.items():
            if key in raw:
                values[key] = spec.parse(key, raw[key])
            elif spec.required:
                raise ScenarioValidationError(f"parameter '{key}' is required by '{cls.name}'")
            else:
                values[key] = spec.default
        return values

    @classmethod
    def required_parameters(cls) -> List[str]:
        return [key for key, spec in cls.PARAMETERS.items() if spec.required]

    def wants(self, kind: str) -> bool:
        return kind in self.config.outputs

    def record_frame(self, system: CoupledJumpDiffusion, z0, time_scale: float = 1.0, cfg=None) -> Optional[pd.DataFrame]:
        if not self.wants("paths") or self.config.record_paths == 0:
            return None
        result = simulate_ensemble(
            system, z0, cfg or self.cfg, n_paths=self.config.record_paths, time_scale=time_scale, threads=self.threads
        )
        return result.to_frame()

    @staticmethod
    def occupation_frame(occ: OccupationMeasure, columns: List[str]) -> pd.DataFrame:
        frame = pd.DataFrame(occ.samples, columns=columns)
        frame.insert(0, "weight", occ.weights)
        return frame

    @abstractmethod
    def run(self) -> ScenarioResult:
        pass


def _levy(sizes, rates, name: str) -> LevyMeasure:
    sizes = np.atleast_1d(np.asarray(sizes if sizes is not None else [], dtype=float))
    rates = np.atleast_1d(np.asarray(rates if rates is not None else [], dtype=float))
    if sizes.size != rates.size:
        raise ScenarioValidationError(f"{name}: {sizes.size} jump sizes but {rates.size} rates")
    return LevyMeasure.from_atoms(list(zip(sizes.tolist(), rates.tolist())), dim=1)


def _vector(value, size: int, name: str) -> np.ndarray:
    value = np.atleast_1d(np.asarray(value, dtype=float))
    if value.size != size:
        raise ScenarioValidationError(f"{name} must have {size} entries, got {value.size}")
    return value


class SIRScenario(BaseScenario):
    name = "sir"
    model = "stochastic SIR epidemic with Beddington-DeAngelis incidence; stability of the infection-free state"
    PARAMETERS = {
        "c0": Parameter(1.0, "recruitment"),
        "c1": Parameter(1.0, "susceptible death rate"),
        "c2": Parameter(0.5, "infected removal rate"),
        "c3": Parameter(0.5, "incidence rate"),
        "c4": Parameter(1.0, "incidence saturation constant"),
        "c5": Parameter(1.0, "incidence saturation in S"),
        "c6": Parameter(0.0, "incidence saturation in I"),
        "c7": Parameter(0.3, "noise intensity of I"),
        "sigma_s": Parameter(0.1, "noise intensity of S"),
        "i_jump_sizes": Parameter(np.zeros(0), "relative jump sizes of I", "vector"),
        "i_jump_rates": Parameter(np.zeros(0), "rates of the I jumps", "vector"),
        "s0": Parameter(None, "initial S (default c0 / c1)"),
        "i0": Parameter(1e-3, "initial I of the exponent paths"),
        "f2": Parameter(10.0, "constant f2"),
        "jump_term": Parameter("generator", "f1 jump term: generator or square", "string"),
    }

    def build(self) -> Tuple[CoupledJumpDiffusion, StabilityHypotheses]:
        p = self.params
        c0, c1, c2, c3, c4, c5, c6, c7 = (p[f"c{k}"] for k in range(8))
        levy2 = _levy(p["i_jump_sizes"], p["i_jump_rates"], "i_jump")
        if np.any(levy2.marks[:, 0] <= -1.0):
            raise ScenarioValidationError("relative jump sizes of I must exceed -1")

        def incidence(s, i):
            # positive parts keep the denominator away from zero
            s, i = np.maximum(s, 0.0), np.maximum(i, 0.0)
            return c3 * s * i / (c4 + c5 * s + c6 * i)

        system = make_system(
            1, 1,
            drift1=lambda x1, x2: c0 - c1 * x1 - incidence(x1, x2),
            diff1=p["sigma_s"],
            drift2=lambda x1, x2: -c2 * x2 + incidence(x1, x2),
            diff2=lambda x1, x2: c7 * x2,
            jump2=lambda x1, x2, mark: mark[0] * x2,
            levy2=levy2,
            name="sir",
        )

        if p["jump_term"] == "generator":
            jump = math.fsum(w * (g[0] - math.log1p(g[0])) for g, w in levy2)
        elif p["jump_term"] == "square":
            jump = math.fsum(w * g[0] ** 2 for g, w in levy2)
        else:
            raise ScenarioValidationError(f"jump_term must be generator or square, got {p['jump_term']!r}")
        constant = c2 + 0.5 * c7 * c7 + jump

        def f1(x):
            s = x[:, 0]
            return constant - c3 * s / (c4 + c5 * s)

        hyp = StabilityHypotheses(
            V0=ScalarField(lambda z: np.asarray(z)[..., 0], lambda z: np.ones(1), lambda z: np.zeros((1, 1)), name="s"),
            V1=lambda x: x[:, 0],
            f1=f1,
            f2=lambda x: np.full(x.shape[0], p["f2"]),
            K3=c0,
            K4=c1,
        )
        return system, hyp

    def run(self) -> ScenarioResult:
        p = self.params
        system, hyp = self.build()
        s0 = p["c0"] / p["c1"] if p["s0"] is None else p["s0"]
        occ = estimate_invariant_measure(system, [s0], self.cfg, self.ensemble, threads=self.threads)
        report = stability_verdict(system, hyp, occ, self.cfg, self.ensemble, x2_start=p["i0"], threads=self.threads)
        row = report.to_row()
        row["lambda1_plugin"] = float(hyp.f1(np.array([[s0]]))[0])
        return ScenarioResult(
            report=frame_from_rows([row], REPORT_COLUMNS + ["lambda1_plugin"]),
            trajectories=self.record_frame(system, ([s0], [p["i0"]])),
            occupation=self.occupation_frame(occ, ["x1_0"]) if self.wants("occupation") else None,
            summary={"verdict": report.verdict.value},
        )


class LinearScenario(BaseScenario):
    name = "linear"
    model = "scalar linear jump diffusion X2 driven beside an Ornstein-Uhlenbeck X1; exponent oracle"
    PARAMETERS = {
        "a": Parameter(-1.0, "drift rate of X2"),
        "s": Parameter(0.0, "noise intensity of X2"),
        "jump_sizes": Parameter(np.zeros(0), "relative jump sizes of X2", "vector"),
        "jump_rates": Parameter(np.zeros(0), "rates of the X2 jumps", "vector"),
        "theta": Parameter(1.0, "mean reversion of X1"),
        "sigma": Parameter(1.0, "noise intensity of X1"),
        "x2_0": Parameter(1.0, "initial X2"),
    }
    COLUMNS = [
        "exponent_hat",
        "exponent_stderr",
        "exponent_oracle",
        "n_absorbed",
        "n_diverged",
        "x1_second_moment",
        "x1_second_moment_oracle",
    ]

    def run(self) -> ScenarioResult:
        p = self.params
        levy2 = _levy(p["jump_sizes"], p["jump_rates"], "jump")
        a, s, theta = p["a"], p["s"], p["theta"]
        system = make_system(
            1, 1,
            drift1=lambda x1, x2: -theta * x1,
            diff1=p["sigma"],
            drift2=lambda x1, x2: a * x2,
            diff2=lambda x1, x2: s * x2,
            jump2=lambda x1, x2, mark: mark[0] * x2,
            levy2=levy2,
            name="linear",
        )
        exponent = estimate_log_lyapunov_exponent(system, ([0.0], [p["x2_0"]]), self.cfg, self.ensemble, threads=self.threads)
        occ = estimate_invariant_measure(system, [0.0], self.cfg, self.ensemble, threads=self.threads)
        row = {
            "exponent_hat": exponent.value,
            "exponent_stderr": exponent.stderr,
            "exponent_oracle": scalar_exponent(a, s, [(float(g[0]), w) for g, w in levy2]),
            "n_absorbed": exponent.n_absorbed,
            "n_diverged": exponent.n_diverged,
            "x1_second_moment": occ.expect(lambda x: x[:, 0] ** 2),
            "x1_second_moment_oracle": p["sigma"] ** 2 / (2.0 * theta) if theta > 0 else float("nan"),
        }
        return ScenarioResult(
            report=frame_from_rows([row], self.COLUMNS),
            trajectories=self.record_frame(system, ([0.0], [p["x2_0"]])),
            occupation=self.occupation_frame(occ, ["x1_0"]) if self.wants("occupation") else None,
        )


def _rotation_drift(b: float, c: float, omega: float):
    def B2(y1):
        diagonal = b + c * np.tanh(y1[:, 0])
        out = np.zeros((y1.shape[0], 2, 2))
        out[:, 0, 0] = out[:, 1, 1] = diagonal
        out[:, 0, 1] = -omega
        out[:, 1, 0] = omega
        return out

    return B2


def _scalar_jump_map(l2: int):
    def Gamma2(y1, mark):
        return mark[0] * np.eye(l2)

    return Gamma2


class PolarScenario(BaseScenario):
    name = "polar"
    model = "planar linearizable system (rotation plus tanh-modulated damping); sphere stability integral vs direct exponent"
    PARAMETERS = {
        "b": Parameter(-0.5, "damping of Y2"),
        "c": Parameter(0.0, "tanh(Y1) modulation of the damping"),
        "omega": Parameter(1.0, "rotation speed"),
        "s": Parameter(0.3, "noise intensity along diag(1, -1)"),
        "jump_sizes": Parameter(np.zeros(0), "relative jump sizes of Y2", "vector"),
        "jump_rates": Parameter(np.zeros(0), "rates of the Y2 jumps", "vector"),
        "theta": Parameter(1.0, "mean reversion of Y1"),
        "sigma": Parameter(1.0, "noise intensity of Y1"),
        "y2_0": Parameter(np.array([1.0, 0.0]), "initial Y2", "vector"),
    }
    COLUMNS = ["variant", "value", "stderr", "normalization", "implied_exponent"]

    def run(self) -> ScenarioResult:
        p = self.params
        levy2 = _levy(p["jump_sizes"], p["jump_rates"], "jump")
        lin = LinearizedCoefficients(
            1, 2,
            B2=_rotation_drift(p["b"], p["c"], p["omega"]),
            Sigma2=[p["s"] * np.diag([1.0, -1.0])],
            Gamma2=_scalar_jump_map(2),
        )
        theta = p["theta"]
        system = system_from_linearization(
            lin, levy2, drift1=lambda x1, x2: -theta * x1, diff1=p["sigma"], name="polar"
        )
        y2_0 = _vector(p["y2_0"], 2, "y2_0")
        occ = sphere_occupation(lin, system, self.cfg, self.ensemble, theta0=y2_0, threads=self.threads)
        integral = stability_integral(lin, occ, levy2)
        exponent = estimate_log_lyapunov_exponent(system, ([0.0], y2_0), self.cfg, self.ensemble, threads=self.threads)

        rows = [dict(row, implied_exponent=0.5 * row["value"]) for row in integral.to_rows()]
        rows.append(
            {
                "variant": "direct",
                "value": 2.0 * exponent.value,
                "stderr": 2.0 * exponent.stderr,
                "normalization": "drift of ln|y2|^2",
                "implied_exponent": exponent.value,
            }
        )
        return ScenarioResult(
            report=frame_from_rows(rows, self.COLUMNS),
            trajectories=self.record_frame(system, ([0.0], y2_0)),
            occupation=self.occupation_frame(occ, ["y1_0", "theta_0", "theta_1"]) if self.wants("occupation") else None,
            summary={"exponent_from_integral": integral.exponent, "exponent_direct": exponent.value},
        )


class FastSlowScenario(BaseScenario):
    name = "fastslow"
    model = "two-time-scale system with fast Ornstein-Uhlenbeck Y1 and tanh-modulated Y2; lambda_eps sweep towards lambda_star"
    OUTPUTS = ("paths", "report")
    PARAMETERS = {
        "b0": Parameter(-0.5, "constant part of B2"),
        "b": Parameter(1.0, "tanh(Y1) part of B2"),
        "mean": Parameter(0.5, "long-run mean of Y1"),
        "theta": Parameter(1.0, "mean reversion of Y1"),
        "sigma": Parameter(1.0, "noise intensity of Y1"),
        "s2": Parameter(0.2, "noise intensity of Y2"),
        "jump_sizes": Parameter(np.zeros(0), "relative jump sizes of Y2", "vector"),
        "jump_rates": Parameter(np.zeros(0), "rates of the Y2 jumps", "vector"),
        "epsilons": Parameter(np.array([1.0, 0.3, 0.1]), "time-scale ratios of the sweep", "vector"),
        "epsilon": Parameter(0.1, "time-scale ratio of the recorded paths"),
        "y2_0": Parameter(1.0, "initial Y2 of the recorded and averaged paths"),
    }

    def run(self) -> ScenarioResult:
        p = self.params
        b0, b, mean, theta = p["b0"], p["b"], p["mean"], p["theta"]
        levy2 = _levy(p["jump_sizes"], p["jump_rates"], "jump")
        lin = LinearizedCoefficients(
            1, 1,
            B2=lambda y1: (b0 + b * np.tanh(y1[:, 0]))[:, None, None],
            Sigma2=[np.array([[p["s2"]]])],
            Gamma2=_scalar_jump_map(1),
            noise_depends_on_y1=False,
        )
        base = system_from_linearization(
            lin, levy2, drift1=lambda x1, x2: -theta * (x1 - mean), diff1=p["sigma"], name="fastslow"
        )
        fs = FastSlowSystem(base, p["epsilon"], lin)

        sweep = lambda_sweep(fs, p["epsilons"], self.cfg, self.ensemble, include_star=False, threads=self.threads)
        star = lambda_star(fs, self.cfg, self.ensemble, y1_0=[mean], threads=self.threads)
        direct = averaged_exponent(fs, star.B2_bar, self.cfg, self.ensemble, y2_0=[p["y2_0"]], threads=self.threads)
        extra = [
            {"epsilon": 0.0, "variant": row["variant"], "lambda": row["value"], "stderr": row["stderr"]}
            for row in star.integral.to_rows()
        ]
        extra.append({"epsilon": 0.0, "variant": "averaged-simulation", "lambda": 2.0 * direct.value, "stderr": 2.0 * direct.stderr})
        report = pd.concat([sweep, frame_from_rows(extra, SWEEP_COLUMNS)], ignore_index=True)

        trajectories = None
        if self.wants("paths") and self.config.record_paths:
            run_cfg = fs.resolved(self.cfg)
            result = simulate_fastslow_ensemble(
                fs, ([mean], [p["y2_0"]]), run_cfg, range(self.config.record_paths), threads=self.threads
            )
            trajectories = result.to_frame()
        return ScenarioResult(
            report=report,
            trajectories=trajectories,
            summary={"lambda_star": star.value, "B2_bar": star.B2_bar},
        )


class ControlScenario(BaseScenario):
    name = "control"
    model = "weak stabilization of an Ornstein-Uhlenbeck type X1 by linear feedback; X2 grows at rate f1(X1)"
    OUTPUTS = ("paths", "report")
    PARAMETERS = {
        "mu": Parameter(0.0, "open-loop drift rate of X1"),
        "sigma": Parameter(1.0, "noise intensity of X1"),
        "K1": Parameter(1.0, "f1 = -K1 + K2 x1^2"),
        "K2": Parameter(1.0, "f1 = -K1 + K2 x1^2"),
        "s2": Parameter(0.0, "noise intensity of X2"),
        "kappa": Parameter(None, "fixed gain A = -kappa Q^-1 (default: synthesized)"),
        "x2_0": Parameter(1e-3, "initial X2 of the end-to-end check"),
        "bound_samples": Parameter(256, "sample points of the generator envelope", "int"),
    }
    COLUMNS = STABILIZATION_COLUMNS + ["c1", "c2"]

    def run(self) -> ScenarioResult:
        p = self.params
        mu, K1, K2, s2 = p["mu"], p["K1"], p["K2"], p["s2"]

        def f1(x):
            return -K1 + K2 * np.sum(x**2, axis=1)

        system = make_system(
            1, 1,
            drift1=lambda x1, x2: mu * x1,
            diff1=p["sigma"],
            drift2=lambda x1, x2: x2 * f1(x1)[:, None],
            diff2=lambda x1, x2: s2 * x2,
            name="control",
        )
        Q = np.eye(1)
        c1, c2 = estimate_generator_bound(system, Q, samples=p["bound_samples"], seed=self.cfg.master_seed)
        design = FeedbackGainDesign.from_bounds(Q, K1, K2, c1, c2)
        if p["kappa"] is not None:
            A = -p["kappa"] * np.linalg.inv(Q)
            design = FeedbackGainDesign(Q, A, compute_lambda_A(Q, A), design.threshold, c1=c1, c2=c2, K1=K1, K2=K2)

        hyp = StabilityHypotheses(
            V0=ScalarField.quadratic(Q),
            V1=lambda x: 1.0 + np.sum(x**2, axis=1),
            f1=f1,
            f2=lambda x: np.ones(x.shape[0]),
        )
        report = verify_weak_stabilization(
            system, design, hyp, self.cfg, self.ensemble, x2_start=p["x2_0"], threads=self.threads
        )
        row = dict(report.to_row(), c1=c1, c2=c2)
        trajectories = None
        if report.status != "diverged":
            trajectories = self.record_frame(controlled_system(system, design.A), ([0.0], [p["x2_0"]]))
        return ScenarioResult(
            report=frame_from_rows([row], self.COLUMNS),
            trajectories=trajectories,
            summary={"status": report.status},
        )


class ConsensusScenario(BaseScenario):
    name = "consensus"
    model = "leader-following consensus with noisy relative measurements and f(x) = a x"
    OUTPUTS = ("paths", "report")
    PARAMETERS = {
        "edges": Parameter("0 1; 1 2", "edge list 'i j; ...' with node 0 the leader", "string"),
        "n": Parameter(1, "agent state dimension", "int"),
        "a": Parameter(-1.0, "f(x) = a x"),
        "k": Parameter(1.0, "protocol gain K = k I"),
        "b": Parameter(1.0, "input matrix B = b I"),
        "sigma": Parameter(0.1, "measurement noise intensity of every edge"),
        "jump_sizes": Parameter(np.zeros(0), "measurement jump multipliers", "vector"),
        "jump_rates": Parameter(np.zeros(0), "rates of the measurement jumps", "vector"),
        "initial_error": Parameter(1e-2, "norm of the initial error"),
        "margin": Parameter(0.05, "decay margin of the verdict"),
    }
    COLUMNS = CONSENSUS_COLUMNS + ["linear_exponent", "dissipativity"]

    def run(self) -> ScenarioResult:
        p = self.params
        n, a = p["n"], p["a"]
        if n < 1:
            raise ScenarioValidationError(f"n must be >= 1, got {n}")
        try:
            graph = read_adjacency_list(p["edges"].replace(";", "\n"))
        except GraphError as e:
            raise ScenarioValidationError(f"edges: {e}")
        protocol = ConsensusProtocol(p["k"] * np.eye(n), p["b"] * np.eye(n))
        noise = NoiseModel.uniform(graph.N, p["sigma"], _levy(p["jump_sizes"], p["jump_rates"], "jump"))

        def f(x):
            return a * x

        report = consentability_verdict(
            graph, protocol, noise, f, self.cfg, self.ensemble,
            initial_error=p["initial_error"], margin=p["margin"], threads=self.threads,
        )
        row = dict(
            report.to_row(),
            linear_exponent=linear_error_exponent(a * np.eye(n), graph, protocol),
            dissipativity=check_dissipativity(f, n, seed=self.cfg.master_seed),
        )

        trajectories = None
        if self.wants("paths") and self.config.record_paths:
            error_init = np.full((graph.N, n), p["initial_error"] / math.sqrt(graph.N * n))
            traj = simulate_error_ensemble(
                graph, protocol, noise, f, np.zeros(n), error_init, self.cfg,
                range(self.config.record_paths), threads=self.threads,
            )
            frames = []
            for position, index in enumerate(traj.path_indices):
                frame = pd.DataFrame({"time": traj.times, "path": index})
                for k in range(n):
                    frame[f"x0_{k}"] = traj.states[position, :, 0, k]
                for i in range(1, graph.N + 1):
                    for k in range(n):
                        frame[f"X{i}_{k}"] = traj.states[position, :, i, k]
                frames.append(frame)
            trajectories = pd.concat(frames, ignore_index=True)
        return ScenarioResult(
            report=frame_from_rows([row], self.COLUMNS),
            trajectories=trajectories,
            summary={"verdict": report.verdict},
        )


class CustomScenario(BaseScenario):
    name = "custom"
    model = "user factory 'package.module:function' returning a CoupledJumpDiffusion; Lipschitz check and exponent"
    OUTPUTS = ("paths", "report")
    PARAMETERS = {
        "factory": Parameter(None, "import path 'package.module:function'", "string", required=True),
        "x1_0": Parameter(None, "initial X1", "vector", required=True),
        "x2_0": Parameter(None, "initial X2", "vector", required=True),
        "samples": Parameter(64, "points per box of the Lipschitz check", "int"),
        "box_radius": Parameter(3.0, "largest box radius of the Lipschitz check"),
        "K1": Parameter(None, "declared Lipschitz constant"),
        "K2": Parameter(None, "declared jump growth constant"),
    }
    COLUMNS = ["k1_hat", "k2_hat", "unbounded_trend", "declared_K1", "declared_K2", "passes",
               "exponent_hat", "exponent_stderr", "n_absorbed", "n_diverged"]

    def load_system(self) -> CoupledJumpDiffusion:
        target = self.params["factory"]
        module_name, _, attribute = target.partition(":")
        if not module_name or not attribute:
            raise ScenarioValidationError(f"factory must look like 'package.module:function', got {target!r}")
        try:
            factory = getattr(importlib.import_module(module_name), attribute)
        except (ImportError, AttributeError) as e:
            raise ScenarioValidationError(f"cannot import factory {target!r}: {e}")
        system = factory()
        if not isinstance(system, CoupledJumpDiffusion):
            raise ScenarioValidationError(f"factory {target!r} returned {type(system).__name__}, not CoupledJumpDiffusion")
        return system

    def run(self) -> ScenarioResult:
        p = self.params
        system = self.load_system()
        z0 = (_vector(p["x1_0"], system.dims.l1, "x1_0"), _vector(p["x2_0"], system.dims.l2, "x2_0"))
        lipschitz = validate_lipschitz(
            system, p["samples"], p["box_radius"], declared_K1=p["K1"], declared_K2=p["K2"], seed=self.cfg.master_seed
        )
        exponent = estimate_log_lyapunov_exponent(system, z0, self.cfg, self.ensemble, threads=self.threads)
        row = dict(
            lipschitz.to_row(),
            exponent_hat=exponent.value,
            exponent_stderr=exponent.stderr,
            n_absorbed=exponent.n_absorbed,
            n_diverged=exponent.n_diverged,
        )
        return ScenarioResult(
            report=frame_from_rows([row], self.COLUMNS),
            trajectories=self.record_frame(system, z0),
        )


class ScenarioRegistry:
    """Scenario classes by name, in listing order."""

    SCENARIOS: Dict[str, Type[BaseScenario]] = {
        cls.name: cls
        for cls in (SIRScenario, LinearScenario, PolarScenario, FastSlowScenario, ControlScenario, ConsensusScenario, CustomScenario)
    }
    BUILTIN = ("sir", "linear", "polar", "fastslow", "control", "consensus")

    @classmethod
    def get(cls, name: str) -> Type[BaseScenario]:
        try:
            return cls.SCENARIOS[name]
        except KeyError:
            raise ScenarioValidationError(f"unknown scenario {name!r}; choose one of {sorted(cls.SCENARIOS)}")
