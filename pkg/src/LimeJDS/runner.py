"""
Scenario runner: parse a scenario file, run it and write the CSV outputs
plus manifest.json.
"""

from dataclasses import asdict, dataclass, field
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any, Dict, List, Optional
import hashlib
import logging
import time

from tabulate import tabulate

from .config import load_scenario
from .exceptions import LimeJDSError
from .scenarios import ScenarioRegistry
from .utils import CSVFileUtils, JSONFileUtils

logger = logging.getLogger(__name__)

OUTPUT_FILES = {"paths": "trajectories.csv", "occupation": "occupation.csv", "report": "report.csv"}
MANIFEST_FILE = "manifest.json"
VERSIONED_PACKAGES = ("LimeJDS", "numpy", "pandas", "scipy", "networkx")


def _package_versions() -> Dict[str, Optional[str]]:
    versions = {}
    for name in VERSIONED_PACKAGES:
        try:
            versions[name] = version(name)
        except PackageNotFoundError:
            versions[name] = None
    return versions


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class RunManifest:
    """Everything needed to reproduce a run and check its outputs."""

    scenario: str
    config_path: str
    config_hash: str
    seed: int
    threads: int
    wall_clock_seconds: float = 0.0
    versions: Dict[str, Optional[str]] = field(default_factory=_package_versions)
    files: List[Dict[str, Any]] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)

    def add_file(self, kind: str, path: Path, rows: int) -> None:
        self.files.append({"kind": kind, "path": path.name, "rows": rows, "sha256": _sha256(path)})

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def run_scenario(
    config_path: str,
    seed: Optional[int] = None,
    output_dir: Optional[str] = None,
    threads: int = 1,
    default_output_dir: str = "result",
) -> RunManifest:
    """
    Run one scenario file.

    Outputs are written only after the scenario finished, one CSV per
    requested output kind, then manifest.json.

    Args:
        config_path: INI scenario file
        seed: overrides [integrator] master_seed
        output_dir: overrides [scenario] output_dir
        threads: worker threads for the ensembles
        default_output_dir: used when the file sets no output_dir

    Returns:
        RunManifest: the manifest that was written

    Raises:
        ScenarioParseError: the file cannot be read or parsed
        ScenarioValidationError: unknown keys or bad parameter values
        DivergenceError: a simulation the scenario depends on diverged
    """
    config = load_scenario(config_path).with_overrides(seed=seed, output_dir=output_dir)
    scenario = ScenarioRegistry.get(config.scenario)(config, threads=threads)

    start_time = time.time()
    logger.info(f"running scenario '{config.scenario}' from {config_path} (seed {config.integrator.master_seed})")
    result = scenario.run()
    elapsed = time.time() - start_time

    manifest = RunManifest(
        scenario=config.scenario,
        config_path=str(config_path),
        config_hash=config.config_hash,
        seed=config.integrator.master_seed,
        threads=threads,
        wall_clock_seconds=round(elapsed, 3),
        summary=result.summary,
    )
    out = Path(config.output_dir or default_output_dir)
    for kind in config.outputs:
        frame = result.frame(kind)
        if frame is None:
            logger.info(f"scenario '{config.scenario}' produced no {kind} output")
            continue
        path = out / OUTPUT_FILES[kind]
        if not CSVFileUtils.write_frame(frame, str(path)):
            raise LimeJDSError(f"could not write {path}")
        manifest.add_file(kind, path, len(frame))

    if not JSONFileUtils.write_json_result(manifest.to_dict(), str(out / MANIFEST_FILE)):
        raise LimeJDSError(f"could not write {out / MANIFEST_FILE}")
    logger.info(f"scenario '{config.scenario}' finished in {elapsed:.2f}s, {len(manifest.files)} file(s) in {out}")
    return manifest


def list_scenarios(machine: bool = False) -> str:
    """
    Built-in scenarios with their required parameters and the model they
    encode. ``machine`` gives one tab-separated line per scenario.
    """
    rows = []
    for name in ScenarioRegistry.BUILTIN:
        cls = ScenarioRegistry.get(name)
        required = ",".join(cls.required_parameters()) or "-"
        rows.append([name, required, cls.model])
    if machine:
        return "\n".join("\t".join(row) for row in rows)
    custom = ScenarioRegistry.get("custom")
    table = tabulate([[f"{n} → {m}", r] for n, r, m in rows], headers=["scenario", "required"])
    return f"{table}\n\nalso: custom → {custom.model} (requires {', '.join(custom.required_parameters())})"
