"""command line entry point

rsmpc synth|run|sweep|check --config FILE [--seed S] [--no-cache] [--jobs J]
    [--out DIR] [--log-level LEVEL] [--full]
"""

import json
import logging
import os
import sys
from argparse import ArgumentParser, Namespace
from typing import List

from rsmpc.constants import (
    EXIT_CONFIG_ERROR,
    EXIT_INFEASIBLE,
    EXIT_OK,
    EXIT_SOLVER_FAILURE,
    INFEASIBLE,
)
from rsmpc.experiment import io, pipeline
from rsmpc.experiment.config import load_config
from rsmpc.rprs.cache import ArtifactCache
from rsmpc.util._utils import get_log_level, to_jsonable
from rsmpc.util.custom_exceptions import (
    ConfigError,
    ProblemInfeasible,
    RSMPCException,
    SolverFailure,
)

logger = logging.getLogger("rsmpc_cli")

COMMANDS = ["synth", "run", "sweep", "check"]


def get_args(argv: List[str] | None = None) -> Namespace:
    """Get arguments from command line"""
    parser = ArgumentParser(prog="rsmpc")
    parser.add_argument("command", choices=COMMANDS, help="what to do with the experiment")
    parser.add_argument(
        "--config",
        help="experiment description (JSON or TOML), or the name of a shipped one",
        required=True,
    )
    parser.add_argument("--seed", help="run a single seed", type=int, default=None)
    parser.add_argument(
        "--no-cache",
        help="neither read nor write synthesis artifacts",
        action="store_true",
    )
    parser.add_argument("--jobs", help="worker processes", type=int, default=1)
    parser.add_argument("--out", help="output directory", default=None)
    parser.add_argument(
        "--log-level",
        help="logging level, RSMPC_LOG_LEVEL or WARNING by default",
        default=None,
    )
    parser.add_argument(
        "--full",
        help="check: also run the closed loop checks",
        action="store_true",
    )
    return parser.parse_args(argv)


def _report(data, out_dir: str | None, file_name: str) -> None:
    print(json.dumps(to_jsonable(data), indent=2))
    if out_dir is not None:
        io.write_summary({"results": data}, os.path.join(out_dir, file_name))


def main(argv: List[str] | None = None) -> int:
    """Runs a command and returns the process exit code

    0 on success, 2 when a closed loop run hits an infeasible step or a
    check fails, 3 on a solver failure, 4 on an invalid configuration.
    """
    args = get_args(argv)
    if args.log_level is None:
        level = get_log_level()
    else:
        level = logging.getLevelName(args.log_level.upper())
    logging.basicConfig(
        level=level if isinstance(level, int) else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        cfg = load_config(args.config)
        cache = ArtifactCache(cfg.cache_dir, cfg.cache_enabled and not args.no_cache)
        folder = pipeline.output_folder(cfg, args.out)
        if args.command == "synth":
            _report(pipeline.synth(cfg, cache, args.jobs), folder, "synthesis.json")
            return EXIT_OK
        if args.command == "run":
            result = pipeline.run(cfg, args.seed, cache, args.out, args.jobs)
            _report(result.to_dict(), None, "")
            if result.rsmpc["infeasible"] > 0:
                return EXIT_INFEASIBLE
            return EXIT_OK
        if args.command == "sweep":
            rows = pipeline.sweep(cfg, cache, args.jobs, args.out)
            _report(rows, None, "")
            return EXIT_OK
        results = pipeline.check(cfg, args.full, cache)
        _report([item._asdict() for item in results], folder, "check.json")
        return EXIT_OK if all(item.passed for item in results) else EXIT_INFEASIBLE
    except ConfigError as e:
        logger.error("invalid configuration: %s", str(e))
        print(json.dumps({"status": "config_error", "message": str(e)}))
        return EXIT_CONFIG_ERROR
    except ProblemInfeasible as e:
        logger.error("infeasible: %s", str(e))
        print(json.dumps({"status": INFEASIBLE, "message": str(e)}))
        return EXIT_INFEASIBLE
    except SolverFailure as e:
        logger.error("solver failure: %s", str(e))
        print(json.dumps({"status": "solver_failure", "message": str(e)}))
        return EXIT_SOLVER_FAILURE
    except RSMPCException as e:
        logger.error("synthesis failed: %s", str(e))
        print(json.dumps({"status": "failed", "message": str(e)}))
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
