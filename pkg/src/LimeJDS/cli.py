"""
Command line entry point.

    limejds run <config.ini> [--seed N] [--out DIR] [--threads N]
    limejds list [--machine]
"""

from typing import Any, Dict, Optional, Sequence
import argparse
import json
import logging
import sys

from .config import RuntimeConfig, configure_logging
from .exceptions import (
    ConfigurationError,
    DivergenceError,
    LimeJDSError,
    ScenarioParseError,
    ValidationError,
)
from .runner import list_scenarios, run_scenario

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_DIVERGENCE = 4


def create_response(
    status: str,
    message: str,
    code: int = EXIT_OK,
    error: Optional[str] = None,
    data: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    """Machine-readable result line printed on stdout."""
    response = {"status": status, "code": code, "message": message}
    if error is not None:
        response["error"] = error
    if data:
        response["data"] = data
    return response


def exit_code(error: BaseException) -> int:
    if isinstance(error, ScenarioParseError):
        return EXIT_PARSE
    if isinstance(error, (ValidationError, ConfigurationError)):
        return EXIT_VALIDATION
    if isinstance(error, DivergenceError):
        return EXIT_DIVERGENCE
    return EXIT_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="limejds", description="Coupled jump-diffusion stability engine")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run a scenario file")
    run.add_argument("config", help="INI scenario file")
    run.add_argument("--seed", type=int, default=None, help="override [integrator] master_seed")
    run.add_argument("--out", default=None, help="override [scenario] output_dir")
    run.add_argument("--threads", type=int, default=None, help="worker threads (default LIMEJDS_THREADS)")

    listing = commands.add_parser("list", help="list the built-in scenarios")
    listing.add_argument("--machine", action="store_true", help="one tab-separated line per scenario")
    return parser


def _emit(response: Dict[str, Any]) -> None:
    print(json.dumps(response, ensure_ascii=False))


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        runtime = RuntimeConfig.from_environment()
        configure_logging(runtime.log_level)

        if args.command == "list":
            print(list_scenarios(machine=args.machine))
            return EXIT_OK

        threads = runtime.threads if args.threads is None else args.threads
        if threads < 1:
            raise ConfigurationError(f"--threads must be >= 1, got {threads}")
        manifest = run_scenario(
            args.config, seed=args.seed, output_dir=args.out, threads=threads,
            default_output_dir=runtime.output_dir,
        )
        _emit(
            create_response(
                "SUCCESS",
                f"scenario '{manifest.scenario}' wrote {len(manifest.files)} file(s)",
                data={"files": [entry["path"] for entry in manifest.files], "seed": manifest.seed},
            )
        )
        return EXIT_OK
    except LimeJDSError as e:
        code = exit_code(e)
        logger.error(f"{type(e).__name__}: {e}")
        _emit(create_response("ERROR", str(e), code=code, error=type(e).__name__))
        return code
    except Exception as e:
        logger.exception("unexpected error")
        _emit(create_response("ERROR", f"Unexpected error: {e}", code=EXIT_ERROR, error=type(e).__name__))
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
