"""
Configuration settings for simulation and estimation runs.
"""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Optional, Tuple
import configparser
import hashlib
import logging
import os

from .exceptions import ConfigurationError, ScenarioParseError, ScenarioValidationError


@dataclass(frozen=True)
class IntegratorConfig:
    """Time grid and seeding of an Euler–Maruyama run."""

    dt: float = 1e-3
    horizon: float = 1.0
    master_seed: int = 0
    record_stride: int = 1  # Keep every k-th grid point in PathSample

    def __post_init__(self):
        if not (self.dt > 0 and self.horizon > 0):
            raise ConfigurationError(f"dt and horizon must be positive, got dt={self.dt}, horizon={self.horizon}")
        if self.dt > self.horizon:
            raise ConfigurationError(f"dt={self.dt} exceeds horizon={self.horizon}")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ConfigurationError(f"record_stride must be a positive integer, got {self.record_stride}")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigurationError(f"master_seed must fit in 64 unsigned bits, got {self.master_seed}")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.horizon / self.dt)))

    @property
    def record_steps(self) -> int:
        """Number of recorded grid points, including t = 0."""
        return self.n_steps // self.record_stride + 1

    def with_overrides(self, **changes) -> "IntegratorConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class RuntimeConfig:
    """Process-level settings that do not change results."""

    threads: int = 1
    log_level: str = "INFO"
    output_dir: str = "result"

    def __post_init__(self):
        if self.threads < 1:
            raise ConfigurationError(f"threads must be >= 1, got {self.threads}")

    @classmethod
    def from_environment(cls) -> "RuntimeConfig":
        """Create runtime configuration from environment variables."""
        try:
            threads = int(os.getenv("LIMEJDS_THREADS", "1"))
        except ValueError as e:
            raise ConfigurationError(f"LIMEJDS_THREADS is not an integer: {e}")
        return cls(
            threads=threads,
            log_level=os.getenv("LIMEJDS_LOG_LEVEL", "INFO").upper(),
            output_dir=os.getenv("LIMEJDS_OUTPUT_DIR", "result"),
        )


class EngineConfig:
    """Global numeric policy of the engine."""

    # Path guards
    DIVERGENCE_BOUND = 1e12
    ABSORPTION_LEVEL = 1e-300

    # Occupation measures
    BURN_IN_FRACTION = 0.2

    # Random number blocks (steps drawn at once per path and channel)
    NOISE_CHUNK = 1024
    # Paths simulated together in one vectorised batch
    ENSEMBLE_CHUNK = 64

    # Derivative fallback: h = FD_STEP * (1 + |z|)
    FD_STEP = 1e-5

    # Right inverse cutoff relative to the largest singular value
    PINV_RCOND = 1e-10

    # Coupling gain default: COUPLING_GAIN_FACTOR * (1 + K2)
    COUPLING_GAIN_FACTOR = 25.0
    COUPLING_GAIN_BOUND = 20.0

    # Verdict thresholds
    VERDICT_SIGMAS = 2.0
    EXPONENT_TOLERANCE = 0.05
    CONSENSUS_MARGIN = 0.05
    CONSENSUS_FRACTION = 0.9

    # Logging configuration
    LOG_LEVEL = "INFO"
    LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    # CSV configuration
    FLOAT_FORMAT = "%.17g"


def configure_logging(level: Optional[str] = None) -> None:
    """Install the package log format on the root logger."""
    logging.basicConfig(
        level=getattr(logging, (level or engine_config.LOG_LEVEL).upper(), logging.INFO),
        format=engine_config.LOG_FORMAT,
    )


# Global configuration instance
engine_config = EngineConfig()


SCENARIO_SECTIONS = ("scenario", "integrator", "parameters")
SCENARIO_KEYS = ("name", "ensemble", "outputs", "output_dir", "record_paths")
INTEGRATOR_KEYS = ("dt", "horizon", "master_seed", "record_stride")
OUTPUT_KINDS = ("paths", "occupation", "report")


@dataclass(frozen=True)
class ScenarioConfig:
    """One parsed scenario file; parameter values stay raw strings until the scenario types them."""

    scenario: str
    parameters: Dict[str, str] = field(default_factory=dict)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    ensemble: int = 16
    outputs: Tuple[str, ...] = OUTPUT_KINDS
    output_dir: Optional[str] = None  # runtime default when unset
    record_paths: int = 4
    source_text: str = ""

    def __post_init__(self):
        if self.ensemble < 1:
            raise ScenarioValidationError(f"ensemble must be >= 1, got {self.ensemble}")
        if self.record_paths < 0:
            raise ScenarioValidationError(f"record_paths must be >= 0, got {self.record_paths}")
        unknown = [kind for kind in self.outputs if kind not in OUTPUT_KINDS]
        if unknown or not self.outputs:
            raise ScenarioValidationError(f"outputs must be a nonempty subset of {OUTPUT_KINDS}, got {self.outputs}")

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.source_text.encode("utf-8")).hexdigest()

    def with_overrides(self, seed: Optional[int] = None, output_dir: Optional[str] = None) -> "ScenarioConfig":
        changes = {}
        if seed is not None:
            changes["integrator"] = self.integrator.with_overrides(master_seed=int(seed))
        if output_dir is not None:
            changes["output_dir"] = str(output_dir)
        return replace(self, **changes)


def _typed(section: str, key: str, raw: str, kind: type):
    raw = raw.strip()
    try:
        if kind is int and not raw.lstrip("+-").isdigit():
            value = float(raw)
            if not value.is_integer():
                raise ValueError(raw)
            return int(value)
        return kind(raw)
    except ValueError:
        raise ScenarioValidationError(f"[{section}] {key} = {raw!r} is not a valid {kind.__name__}")


def parse_scenario_text(text: str) -> ScenarioConfig:
    """
    Parse an INI scenario with sections [scenario], [integrator] and
    [parameters]. Unknown sections or keys are rejected.

    Raises:
        ScenarioParseError: not valid INI text
        ScenarioValidationError: unknown or malformed entries
    """
    parser = configparser.ConfigParser(strict=True, interpolation=None, default_section="__defaults__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ScenarioParseError(f"malformed scenario file: {e}")

    unknown_sections = [s for s in parser.sections() if s not in SCENARIO_SECTIONS]
    if unknown_sections:
        raise ScenarioValidationError(f"unknown section(s): {unknown_sections}")
    if not parser.has_section("scenario"):
        raise ScenarioValidationError("missing [scenario] section")
    for section, allowed in (("scenario", SCENARIO_KEYS), ("integrator", INTEGRATOR_KEYS)):
        if parser.has_section(section):
            unknown = [k for k in parser[section] if k not in allowed]
            if unknown:
                raise ScenarioValidationError(f"unknown key(s) in [{section}]: {unknown}")

    head = parser["scenario"]
    if not head.get("name", "").strip():
        raise ScenarioValidationError("[scenario] name is required")

    integrator_args = {}
    if parser.has_section("integrator"):
        kinds = {"dt": float, "horizon": float, "master_seed": int, "record_stride": int}
        integrator_args = {k: _typed("integrator", k, v, kinds[k]) for k, v in parser["integrator"].items()}
    try:
        integrator = IntegratorConfig(**integrator_args)
    except ConfigurationError as e:
        raise ScenarioValidationError(f"[integrator] {e}")

    options = {}
    if "ensemble" in head:
        options["ensemble"] = _typed("scenario", "ensemble", head["ensemble"], int)
    if "record_paths" in head:
        options["record_paths"] = _typed("scenario", "record_paths", head["record_paths"], int)
    if "outputs" in head:
        options["outputs"] = tuple(part.strip() for part in head["outputs"].split(",") if part.strip())
    if "output_dir" in head:
        options["output_dir"] = head["output_dir"].strip()

    parameters = dict(parser["parameters"]) if parser.has_section("parameters") else {}
    return ScenarioConfig(
        scenario=head["name"].strip(),
        parameters=parameters,
        integrator=integrator,
        source_text=text,
        **options,
    )


def load_scenario(path: str) -> ScenarioConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ScenarioParseError(f"cannot read scenario file {path}: {e}")
    return parse_scenario_text(text)
