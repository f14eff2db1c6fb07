"""experiment description files (JSON or TOML)

A file has the blocks system, noise, controller, rprs, experiment, output
and cache. The system block either lists the model matrices or names a
generator ("building"). Theta in the file is the unit uncertainty set,
scaled by every alpha of the sweep grid.
"""

import json
import logging
import os
import tomllib
from dataclasses import dataclass, field
from typing import Dict, List

from rsmpc.constants import (
    CONFIGS_PATH,
    VALID_COVARIANCE_KIND,
    VALID_GAIN_METHOD,
    VALID_MAXDET_OBJECTIVE,
    VALID_TERMINAL_WINDOW,
)
from rsmpc.util._utils import (
    content_hash,
    is_valid_estimator,
    is_valid_noise_family,
    is_valid_rprs_shape,
    is_valid_solver,
)
from rsmpc.util.custom_exceptions import ConfigError

logger = logging.getLogger("rsmpc_config")

_BLOCKS = ["system", "noise", "controller", "rprs", "experiment"]

# noise blocks may also describe an AR(1) sequence, expanded to a full covariance
_NOISE_KINDS = VALID_COVARIANCE_KIND + ["ar1"]


@dataclass
class ExperimentSettings:
    """sweep grids and Monte-Carlo settings"""

    alphas: List[float]
    p_levels: List[float]
    seeds: List[int]
    T: int
    p_u: float | None = None
    theta_true: List[float] | str = "center"
    baseline: bool = True
    check_candidates: bool = False


@dataclass
class ExperimentConfig:
    """a validated experiment description"""

    name: str
    system: Dict
    noise: Dict
    controller: Dict
    rprs: Dict
    experiment: ExperimentSettings
    output_dir: str = "results"
    cache_enabled: bool = True
    cache_dir: str | None = None
    source: str | None = None
    raw: Dict = field(default_factory=dict, repr=False)

    def content_hash(self) -> str:
        """hash of everything that determines the outputs"""
        return content_hash({key: self.raw.get(key) for key in _BLOCKS})

    def with_seeds(self, seeds: List[int]) -> "ExperimentConfig":
        """the same experiment on other seeds"""
        raw = json.loads(json.dumps(self.raw))
        raw["experiment"]["seeds"] = list(seeds)
        return config_from_dict(raw, self.source)


def _require(block: Dict, key: str, where: str):
    if key not in block:
        raise ConfigError(f"missing '{key}' in the {where} block")
    return block[key]


def _check_probability(value, where: str) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where} must be a number, got {value}") from e
    if not 0.0 < value < 1.0:
        raise ConfigError(f"{where} must be in (0,1), got {value}")
    return value


def _parse_seeds(value) -> List[int]:
    if isinstance(value, dict):
        start = int(value.get("start", 0))
        count = int(_require(value, "count", "experiment.seeds"))
        return list(range(start, start + count))
    if isinstance(value, list) and all(isinstance(seed, int) for seed in value):
        return list(value)
    raise ConfigError("experiment.seeds must be a list of integers or {start, count}")


def _validate_system(system: Dict, base_dir: str) -> None:
    if "file" in system:
        path = os.path.join(base_dir, system["file"])
        if not os.path.isfile(path):
            raise ConfigError(f"system file {path} does not exist")
        return
    if system.get("generator") == "building":
        return
    if "generator" in system:
        raise ConfigError(f"unknown system generator {system['generator']}")
    for key in ("A", "B", "Theta", "X", "U"):
        _require(system, key, "system")
    if len(system["A"]) != len(system["B"]):
        raise ConfigError("system.A and system.B must list the same number of matrices")


def _validate_noise(noise: Dict) -> None:
    _require(noise, "covariance", "noise")
    kind = noise.get("covariance_kind", "iid")
    if kind not in _NOISE_KINDS:
        raise ConfigError(f"noise.covariance_kind must be one of {_NOISE_KINDS}")
    if kind == "ar1":
        rho = float(_require(noise, "rho", "noise"))
        if not -1.0 < rho < 1.0:
            raise ConfigError(f"noise.rho must be in (-1,1), got {rho}")
    if not is_valid_noise_family(noise.get("family", "gaussian")):
        raise ConfigError(f"invalid noise family {noise.get('family')}")


def _validate_controller(controller: Dict) -> None:
    N = int(_require(controller, "N", "controller"))
    if N < 1:
        raise ConfigError(f"controller.N must be at least 1, got {N}")
    _require(controller, "Q", "controller")
    _require(controller, "R", "controller")
    gain = controller.get("gain", {"method": "lqr"})
    if gain.get("method") not in VALID_GAIN_METHOD:
        raise ConfigError(f"controller.gain.method must be one of {VALID_GAIN_METHOD}")
    if gain["method"] == "given":
        _require(gain, "K", "controller.gain")
    if not is_valid_estimator(controller.get("estimator", "constant")):
        raise ConfigError(f"invalid estimator {controller.get('estimator')}")
    if controller.get("terminal_window", "table") not in VALID_TERMINAL_WINDOW:
        raise ConfigError(f"controller.terminal_window must be one of {VALID_TERMINAL_WINDOW}")
    solver = controller.get("solver")
    if solver is not None and not is_valid_solver(solver):
        raise ConfigError(f"invalid solver {solver}")


def _validate_rprs(rprs: Dict) -> None:
    if not is_valid_rprs_shape(rprs.get("shape", "halfspaces")):
        raise ConfigError(f"invalid RPRS shape {rprs.get('shape')}")
    if rprs.get("objective", "logdet") not in VALID_MAXDET_OBJECTIVE:
        raise ConfigError(f"rprs.objective must be one of {VALID_MAXDET_OBJECTIVE}")
    T = int(_require(rprs, "T", "rprs"))
    if T < 1:
        raise ConfigError(f"rprs.T must be positive, got {T}")


def _parse_experiment(block: Dict) -> ExperimentSettings:
    alphas = [float(a) for a in _require(block, "alphas", "experiment")]
    p_levels = [
        _check_probability(p, "experiment.p_levels")
        for p in _require(block, "p_levels", "experiment")
    ]
    seeds = _parse_seeds(_require(block, "seeds", "experiment"))
    if len(alphas) == 0 or len(p_levels) == 0 or len(seeds) == 0:
        raise ConfigError("experiment grids and seeds must be nonempty")
    if any(a < 0 for a in alphas):
        raise ConfigError("experiment.alphas must be nonnegative")
    T = int(_require(block, "T", "experiment"))
    if T < 1:
        raise ConfigError(f"experiment.T must be positive, got {T}")
    p_u = block.get("p_u")
    if p_u is not None:
        p_u = _check_probability(p_u, "experiment.p_u")
    theta_true = block.get("theta_true", "center")
    if isinstance(theta_true, str) and theta_true not in ("center", "sample", "vertices"):
        raise ConfigError("experiment.theta_true must be a point, 'center', 'sample' or 'vertices'")
    return ExperimentSettings(
        alphas=alphas,
        p_levels=p_levels,
        seeds=seeds,
        T=T,
        p_u=p_u,
        theta_true=theta_true,
        baseline=bool(block.get("baseline", True)),
        check_candidates=bool(block.get("check_candidates", False)),
    )


def config_from_dict(data: Dict, source: str | None = None) -> ExperimentConfig:
    """Validates a parsed experiment description

    Raises:
        ConfigError: on any schema violation
    """
    if not isinstance(data, dict):
        raise ConfigError("an experiment description must be a mapping")
    for key in _BLOCKS:
        if not isinstance(data.get(key), dict):
            raise ConfigError(f"missing '{key}' block")
    base_dir = os.path.dirname(source) if source is not None else os.getcwd()
    try:
        _validate_system(data["system"], base_dir)
        _validate_noise(data["noise"])
        _validate_controller(data["controller"])
        _validate_rprs(data["rprs"])
        experiment = _parse_experiment(data["experiment"])
    except (TypeError, ValueError) as e:
        raise ConfigError(f"malformed experiment description: {e}") from e
    if experiment.T > int(data["rprs"]["T"]):
        logger.info("closed loop longer than the RPRS table, tightening clamped beyond T")
    output = data.get("output", {})
    cache = data.get("cache", {})
    return ExperimentConfig(
        name=str(data.get("name", "experiment")),
        system=data["system"],
        noise=data["noise"],
        controller=data["controller"],
        rprs=data["rprs"],
        experiment=experiment,
        output_dir=str(output.get("directory", "results")),
        cache_enabled=bool(cache.get("enabled", True)),
        cache_dir=cache.get("directory"),
        source=source,
        raw=data,
    )


def load_config(path: str) -> ExperimentConfig:
    """Loads a JSON or TOML experiment file. A bare name refers to a shipped config.

    Raises:
        ConfigError: if the file is missing, unreadable or invalid
    """
    if not os.path.isfile(path):
        for extension in ("", ".json", ".toml"):
            shipped = os.path.join(CONFIGS_PATH, path + extension)
            if os.path.isfile(shipped):
                path = shipped
                break
        else:
            raise ConfigError(f"config file {path} does not exist")
    try:
        if path.endswith(".toml"):
            with open(path, "rb") as in_file:
                data = tomllib.load(in_file)
        else:
            with open(path, "r", encoding="utf8") as in_file:
                data = json.load(in_file)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    return config_from_dict(data, os.path.abspath(path))
