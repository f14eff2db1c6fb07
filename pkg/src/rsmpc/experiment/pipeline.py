"""offline synthesis, closed loop runs, sweeps and consistency checks of an
experiment description"""

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, NamedTuple, Tuple

import numpy as np
from tqdm import tqdm

from rsmpc.constants import INFEASIBLE, LOEWNER_TOL, RESIDUAL_TOL
from rsmpc.experiment import io
from rsmpc.experiment.building import building_system, sinusoidal_mean
from rsmpc.experiment.config import ExperimentConfig
from rsmpc.model import (
    UncertainLTISystem,
    lqr_gain,
    synthesize_gain,
    system_from_dict,
    terminal_weight,
    terminal_weight_residual,
    verify_gain,
)
from rsmpc.mpc.config import MPCConfig, StageCost
from rsmpc.mpc.controller import RobustStochasticMPC
from rsmpc.polytope import Polytope, polytope_from_dict
from rsmpc.rprs.cache import ArtifactCache
from rsmpc.rprs.noise import NoiseModel, ar1_covariance
from rsmpc.rprs.sets import (
    RPRSSequence,
    TighteningTable,
    build_rprs,
    rprs_load_from_folder,
    tighten,
    tightening_load_from_folder,
)
from rsmpc.rprs.variance import loewner_residuals, variance_bounds
from rsmpc.sim.closed_loop import ClosedLoopTrace, run_closed_loop
from rsmpc.sim.estimators import ConstantEstimator, EstimatorHook, ProjectedRLSEstimator
from rsmpc.sim.metrics import CostIncrease, cost_increase_stats, empirical_satisfaction
from rsmpc.sim.noise_sampling import sample_noise
from rsmpc.tube.homothetic import containment_check, dual_containment_feasible
from rsmpc.tube.terminal import (
    InvarianceReport,
    TerminalSet,
    terminal_invariance_check,
    terminal_set,
    terminal_set_load_from_folder,
)
from rsmpc.util._utils import load_json, save_json
from rsmpc.util.custom_exceptions import ConfigError, RSMPCException

logger = logging.getLogger("rsmpc_pipeline")

_CONTROLLER_FILE = "controller.json"
COVERAGE_LEVELS = [0.8, 0.9, 0.95]
COVERAGE_SAMPLES = 10000
COVERAGE_STEPS = 20
RSMPC = "rsmpc"
BASELINE = "baseline"


def _system_description(cfg: ExperimentConfig) -> Dict:
    system = cfg.system
    if "file" in system:
        base_dir = os.path.dirname(cfg.source) if cfg.source is not None else os.getcwd()
        return load_json(os.path.join(base_dir, system["file"]))
    if system.get("generator") == "building":
        return building_system(system)
    return system


def build_system(
    cfg: ExperimentConfig, alpha: float, p_x: float, p_u: float | None = None
) -> UncertainLTISystem:
    """The system of the description with Theta = alpha * Theta_unit

    Args:
        cfg (ExperimentConfig): the experiment
        alpha (float): uncertainty scale
        p_x (float): state probability level
        p_u (float) [None]: input probability level, experiment.p_u or p_x when None
    """
    description = dict(_system_description(cfg))
    unit = polytope_from_dict(description["Theta"])
    description["Theta"] = unit.homothet(np.zeros(unit.dim), alpha).to_dict()
    if p_u is None:
        p_u = cfg.experiment.p_u if cfg.experiment.p_u is not None else p_x
    description["p_x"] = p_x
    description["p_u"] = p_u
    return system_from_dict(description)


def theta_bar_for(cfg: ExperimentConfig, sys: UncertainLTISystem, alpha: float) -> np.ndarray:
    """controller.theta_bar scaled by alpha, or the Chebyshev center of Theta"""
    if "theta_bar" in cfg.controller:
        return alpha * np.asarray(cfg.controller["theta_bar"], dtype=float).reshape(-1)
    center, _ = sys.Theta.chebyshev_center()
    return np.asarray(center)


def theta_true_for(cfg: ExperimentConfig, sys: UncertainLTISystem, seed: int) -> np.ndarray:
    """true parameter of the run with the given seed"""
    setting = cfg.experiment.theta_true
    if not isinstance(setting, str):
        return np.asarray(setting, dtype=float).reshape(-1)
    if setting == "center":
        center, _ = sys.Theta.chebyshev_center()
        return np.asarray(center)
    vertices = sys.theta_vertices()
    if setting == "vertices":
        return vertices[seed % len(vertices)]
    weights = np.random.default_rng([seed, 1]).dirichlet(np.ones(len(vertices)))
    return weights @ vertices


def base_set(cfg: ExperimentConfig, n: int) -> Polytope:
    """base set of the tube: controller.base, a box of half widths
    controller.base_box, or the unit box"""
    if "base" in cfg.controller:
        return polytope_from_dict(cfg.controller["base"])
    widths = np.asarray(cfg.controller.get("base_box", np.ones(n)), dtype=float).reshape(-1)
    if widths.shape[0] != n or np.any(widths <= 0):
        raise ConfigError(f"controller.base_box must list {n} positive half widths")
    H = np.vstack([np.diag(1.0 / widths), -np.diag(1.0 / widths)])
    return Polytope(H, np.ones(2 * n))


def _mean_profile(block: Dict, dim: int, T: int) -> np.ndarray:
    if "mean_profile" in block:
        profile = block["mean_profile"]
        sequence = sinusoidal_mean(
            T,
            float(profile.get("offset", 0.0)),
            float(profile.get("amplitude", 0.0)),
            float(profile.get("period", 24.0)),
            float(profile.get("phase", 0.0)),
        )
        return np.tile(sequence.reshape(-1, 1), (1, dim))
    mean = np.asarray(block.get("mean", np.zeros(dim)), dtype=float).reshape(-1)
    if mean.shape[0] == dim:
        return np.tile(mean, (T, 1))
    if mean.shape[0] >= T * dim:
        return mean[: T * dim].reshape(T, dim)
    raise ConfigError(f"noise.mean must have {dim} or at least {T * dim} entries")


def build_noise(cfg: ExperimentConfig, T: int) -> NoiseModel:
    """The disturbance model of the description over T steps, in noise space"""
    block = cfg.noise
    sigma = np.array(block["covariance"], dtype=float, ndmin=2)
    kind = block.get("covariance_kind", "iid")
    if kind == "ar1":
        dim = sigma.shape[0]
        covariance = ar1_covariance(sigma, float(block["rho"]), T)
        kind = "full"
    elif kind == "full":
        if "dim" not in block:
            raise ConfigError("a full noise covariance needs noise.dim")
        dim = int(block["dim"])
        if sigma.shape[0] < T * dim:
            raise ConfigError(
                f"noise.covariance covers {sigma.shape[0]} entries, {T * dim} needed"
            )
        covariance = sigma[: T * dim, : T * dim]
    else:
        dim = sigma.shape[0]
        covariance = sigma
    mean = _mean_profile(block, dim, T)
    return NoiseModel(T, dim, mean.reshape(-1), covariance, kind, block.get("family", "gaussian"))


def build_state_noise(cfg: ExperimentConfig, sys: UncertainLTISystem, T: int) -> NoiseModel:
    """The disturbance B_w w (plus the optional process noise) over T steps"""
    return build_noise(cfg, T).in_state_space(
        sys.B_w, float(cfg.noise.get("process_noise", 0.0))
    )


def mean_disturbance(cfg: ExperimentConfig, sys: UncertainLTISystem, T: int) -> np.ndarray:
    """known mean of B_w w_k for k = 0..T-1 (T x n)"""
    sigma = np.array(cfg.noise["covariance"], dtype=float, ndmin=2)
    dim = int(cfg.noise["dim"]) if cfg.noise.get("covariance_kind") == "full" else sigma.shape[0]
    return _mean_profile(cfg.noise, dim, T) @ sys.B_w.T


@dataclass
class SynthesisArtifacts:
    """everything computed offline for one controller"""

    sys: UncertainLTISystem
    theta_bar: np.ndarray
    K: np.ndarray
    P_lyap: np.ndarray
    P_terminal: np.ndarray
    base: Polytope
    rprs: RPRSSequence
    tightening: TighteningTable
    terminal: TerminalSet
    invariance: InvarianceReport
    key: str
    report: Dict = field(default_factory=dict)
    from_cache: bool = False

    def summary(self) -> Dict:
        f_inf, g_inf = self.tightening.worst()
        return {
            "key": self.key,
            "from_cache": self.from_cache,
            "theta_bar": self.theta_bar,
            "K": self.K,
            "P_terminal": self.P_terminal,
            "rprs_level": self.rprs.level,
            "log_det_bounds": self.rprs.bounds.log_dets(),
            "f_inf": f_inf,
            "g_inf": g_inf,
            "any_empty": self.tightening.any_empty(),
            "terminal_rows": len(self.terminal.polytope),
            "terminal_converged": self.terminal.converged,
            "terminal_invariance": asdict(self.invariance),
            "report": self.report,
        }


def _weights(cfg: ExperimentConfig) -> Tuple[np.ndarray, np.ndarray]:
    Q = np.array(cfg.controller["Q"], dtype=float, ndmin=2)
    R = np.array(cfg.controller["R"], dtype=float, ndmin=2)
    return Q, R


def _feedback_gain(
    cfg: ExperimentConfig, design: UncertainLTISystem, theta_bar: np.ndarray, solver
):
    gain = cfg.controller.get("gain", {"method": "lqr"})
    method = gain.get("method", "lqr")
    if method == "lmi":
        return synthesize_gain(design, solver)
    if method == "given":
        K = np.array(gain["K"], dtype=float, ndmin=2)
    else:
        Q, R = _weights(cfg)
        K = lqr_gain(design, gain.get("Q", Q), gain.get("R", R), theta_bar)
    return verify_gain(design, K, solver)


def _synthesis_inputs(
    cfg: ExperimentConfig, design: UncertainLTISystem, noise: NoiseModel, base: Polytope
) -> Dict:
    return {
        "system": design.to_dict(),
        "noise": noise.to_dict(),
        "gain": cfg.controller.get("gain", {"method": "lqr"}),
        "Q": cfg.controller["Q"],
        "R": cfg.controller["R"],
        "theta_bar": cfg.controller.get("theta_bar"),
        "base": base.to_dict(),
        "N": int(cfg.controller["N"]),
        "terminal_window": cfg.controller.get("terminal_window", "table"),
        "rprs": cfg.rprs,
    }


def _save_artifacts(artifacts: SynthesisArtifacts, folder: str) -> None:
    artifacts.rprs.save_to_folder(folder)
    artifacts.tightening.save_to_folder(folder)
    artifacts.terminal.save_to_folder(folder)
    save_json(
        {
            "K": artifacts.K,
            "P_lyap": artifacts.P_lyap,
            "P_terminal": artifacts.P_terminal,
            "invariance": asdict(artifacts.invariance),
            "report": artifacts.report,
        },
        os.path.join(folder, _CONTROLLER_FILE),
    )


def _load_artifacts(
    folder: str,
    design: UncertainLTISystem,
    theta_bar: np.ndarray,
    base: Polytope,
    key: str,
) -> SynthesisArtifacts:
    data = load_json(os.path.join(folder, _CONTROLLER_FILE))
    return SynthesisArtifacts(
        sys=design,
        theta_bar=theta_bar,
        K=np.array(data["K"], dtype=float, ndmin=2),
        P_lyap=np.array(data["P_lyap"], dtype=float, ndmin=2),
        P_terminal=np.array(data["P_terminal"], dtype=float, ndmin=2),
        base=base,
        rprs=rprs_load_from_folder(folder),
        tightening=tightening_load_from_folder(folder),
        terminal=terminal_set_load_from_folder(folder),
        invariance=InvarianceReport(**data["invariance"]),
        key=key,
        report=data["report"],
        from_cache=True,
    )


def synthesize(
    cfg: ExperimentConfig,
    alpha: float,
    p_x: float,
    p_u: float | None = None,
    baseline: bool = False,
    cache: ArtifactCache | None = None,
    jobs: int = 1,
) -> SynthesisArtifacts:
    """Offline synthesis of one controller: feedback gain, terminal weight,
    variance bounds, RPRS, tightening and terminal set

    The baseline ignores the mismatch, i.e. it is synthesized for
    Theta = {theta_bar}. Artifacts are read from and written to the cache
    when it is enabled.

    Args:
        cfg (ExperimentConfig): the experiment
        alpha (float): uncertainty scale
        p_x (float): state probability level
        p_u (float) [None]: input probability level
        baseline (bool) [False]: synthesize the mismatch-agnostic baseline
        cache (ArtifactCache) [None]: the cache, built from cfg when None
        jobs (int) [1]: worker processes for correlated variance bounds
    """
    sys = build_system(cfg, alpha, p_x, p_u)
    theta_bar = theta_bar_for(cfg, sys, alpha)
    design = sys.with_singleton_theta(theta_bar) if baseline else sys
    base = base_set(cfg, sys.n)
    _, noise = build_state_noise(cfg, design, int(cfg.rprs["T"])).split_mean()
    if cache is None:
        cache = ArtifactCache(cfg.cache_dir, cfg.cache_enabled)
    inputs = _synthesis_inputs(cfg, design, noise, base)
    key = cache.key_for(inputs)
    if cache.has(key):
        try:
            return _load_artifacts(cache.folder(key), design, theta_bar, base, key)
        except (OSError, KeyError, ValueError, RSMPCException) as e:
            logger.warning("cache entry %s unreadable (%s), recomputing", key[:12], str(e))

    start_time = time.time()
    logger.info(
        "synthesizing %s controller for alpha=%s p_x=%s",
        BASELINE if baseline else RSMPC,
        str(alpha),
        str(p_x),
    )
    report = {}
    solver = cfg.controller.get("solver")
    Q, R = _weights(cfg)
    gain = _feedback_gain(cfg, design, theta_bar, solver)
    P_terminal = terminal_weight(design, gain.K, Q, R, solver)
    bounds = variance_bounds(
        design,
        gain.K,
        noise,
        allow_fallback=bool(cfg.rprs.get("allow_fallback", True)),
        objective=cfg.rprs.get("objective", "logdet"),
        solver=solver,
        jobs=jobs,
        computation_logger=report,
    )
    rprs = build_rprs(
        bounds,
        cfg.rprs.get("shape", "halfspaces"),
        design.p_x,
        noise.family,
        F=design.X.H,
        G=design.U.H,
        p_u=design.p_u,
    )
    tightening = tighten(design.X, design.U, rprs, gain.K)
    if tightening.any_empty():
        logger.warning(
            "some tightened sets are empty for alpha=%s p_x=%s", str(alpha), str(p_x)
        )
    k_max = int(cfg.controller["N"]) if cfg.controller.get("terminal_window") == "horizon" else None
    f_inf, g_inf = tightening.worst(k_max)
    terminal = terminal_set(design, gain.K, base, f_inf, g_inf, computation_logger=report)
    invariance = terminal_invariance_check(terminal, design, gain.K, base)
    report["synthesis time"] = time.time() - start_time
    artifacts = SynthesisArtifacts(
        sys=design,
        theta_bar=theta_bar,
        K=gain.K,
        P_lyap=gain.P_lyap,
        P_terminal=P_terminal,
        base=base,
        rprs=rprs,
        tightening=tightening,
        terminal=terminal,
        invariance=invariance,
        key=key,
        report=report,
    )
    if cache.enabled:
        _save_artifacts(artifacts, cache.prepare(key))
        cache.commit(key, inputs)
    return artifacts


def build_controller(
    cfg: ExperimentConfig, artifacts: SynthesisArtifacts, w_bar: np.ndarray | None = None
) -> RobustStochasticMPC:
    """The receding horizon controller on top of synthesized artifacts"""
    Q, R = _weights(cfg)
    cost = StageCost(
        Q,
        R,
        artifacts.P_terminal,
        cfg.controller.get("x_ref"),
        cfg.controller.get("u_ref"),
        float(cfg.controller.get("l1_weight", 0.0)),
    )
    mpc_cfg = MPCConfig(
        N=int(cfg.controller["N"]),
        cost=cost,
        K=artifacts.K,
        base=artifacts.base,
        tightening=artifacts.tightening,
        terminal=artifacts.terminal,
        w_bar=w_bar,
        project_estimate=bool(cfg.controller.get("project_estimate", True)),
        solver=cfg.controller.get("solver"),
        residual_tol=float(cfg.controller.get("residual_tol", 1e-6)),
    )
    return RobustStochasticMPC(artifacts.sys, mpc_cfg)


def build_estimator(
    cfg: ExperimentConfig, artifacts: SynthesisArtifacts, w_bar: np.ndarray | None = None
) -> EstimatorHook:
    """the parameter estimator named by controller.estimator"""
    solver = cfg.controller.get("solver")
    if cfg.controller.get("estimator", "constant") == "rls":
        return ProjectedRLSEstimator(artifacts.sys, artifacts.theta_bar, w_bar, solver=solver)
    return ConstantEstimator(artifacts.sys, artifacts.theta_bar, solver)


def run_trace(
    cfg: ExperimentConfig,
    plant: UncertainLTISystem,
    controller: RobustStochasticMPC,
    estimator: EstimatorHook,
    seed: int,
    diagnostics: bool = False,
) -> ClosedLoopTrace:
    """One closed loop run of the plant with the noise and true parameter of seed"""
    T = cfg.experiment.T
    W = sample_noise(build_state_noise(cfg, plant, T), seed)
    return run_closed_loop(
        plant,
        theta_true_for(cfg, plant, seed),
        controller,
        estimator,
        W,
        T=T,
        x0=cfg.controller.get("x0"),
        seed=seed,
        diagnostics=diagnostics,
        check_candidates=cfg.experiment.check_candidates,
    )


def _complete(traces: List[ClosedLoopTrace]) -> Dict[int, ClosedLoopTrace]:
    return {trace.seed: trace for trace in traces if not trace.halted}


def variant_summary(traces: List[ClosedLoopTrace], plant: UncertainLTISystem) -> Dict:
    """satisfaction per face of X, its minimum N_c and halt counts"""
    per_face = [empirical_satisfaction(traces, row, h) for row, h in zip(plant.X.H, plant.X.h)]
    minima = [s.minimum for s in per_face]
    complete = _complete(traces)
    return {
        "N_c": float(np.min(minima)) if not any(math.isnan(v) for v in minima) else float("nan"),
        "N_c_per_face": minima,
        "N_c_per_step": np.min([s.per_step for s in per_face], axis=0)
        if len(complete) > 0
        else [],
        "runs": len(traces),
        "excluded": len(traces) - len(complete),
        "infeasible": sum(1 for trace in traces if trace.halted and trace.status[-1] == INFEASIBLE),
        "mean_cost": float(np.mean([t.total_cost for t in complete.values()]))
        if len(complete) > 0
        else float("nan"),
        "candidate_feasible": all(all(t.candidate_feasible) for t in traces),
    }


@dataclass
class CellResult:
    """outcome of one (alpha, p) cell of the sweep"""

    alpha: float
    p_x: float
    p_u: float
    status: str = "ok"
    rsmpc: Dict | None = None
    baseline: Dict | None = None
    cost_increase: CostIncrease | None = None

    def row(self) -> Dict:
        """the line of the sweep table"""
        return {
            "alpha": self.alpha,
            "p_x": self.p_x,
            "p_u": self.p_u,
            "status": self.status,
            "rsmpc_N_c": None if self.rsmpc is None else self.rsmpc["N_c"],
            "rsmpc_excluded": None if self.rsmpc is None else self.rsmpc["excluded"],
            "baseline_N_c": None if self.baseline is None else self.baseline["N_c"],
            "baseline_excluded": None if self.baseline is None else self.baseline["excluded"],
            "cost_increase_mean": None if self.cost_increase is None else self.cost_increase.mean,
            "cost_increase_std": None if self.cost_increase is None else self.cost_increase.std,
        }

    def to_dict(self) -> Dict:
        data = self.row()
        data["rsmpc"] = self.rsmpc
        data["baseline"] = self.baseline
        data["cost_increase_per_seed"] = (
            None if self.cost_increase is None else self.cost_increase.per_seed
        )
        return data


def _paired_cost_increase(
    traces: List[ClosedLoopTrace], baseline: List[ClosedLoopTrace]
) -> CostIncrease | None:
    ours = _complete(traces)
    theirs = _complete(baseline)
    seeds = sorted(set(ours) & set(theirs))
    if len(seeds) == 0:
        return None
    return cost_increase_stats([ours[s] for s in seeds], [theirs[s] for s in seeds])


def run_cell(
    cfg: ExperimentConfig,
    alpha: float,
    p_x: float,
    seeds: List[int] | None = None,
    cache: ArtifactCache | None = None,
    jobs: int = 1,
    progress: bool = False,
    diagnostics: bool = False,
) -> Tuple[CellResult, Dict[str, List[ClosedLoopTrace]]]:
    """Runs the controller (and the baseline when enabled) on every seed of
    one cell. Both variants see the same plant, noise and true parameter
    for a given seed.

    Returns:
        Tuple[CellResult, Dict[str, List[ClosedLoopTrace]]]: the cell
            summary and the traces per variant
    """
    seeds = cfg.experiment.seeds if seeds is None else seeds
    plant = build_system(cfg, alpha, p_x)
    w_bar = mean_disturbance(cfg, plant, cfg.experiment.T + int(cfg.controller["N"]))
    variants = [RSMPC] + ([BASELINE] if cfg.experiment.baseline else [])
    traces = {}
    for variant in variants:
        artifacts = synthesize(cfg, alpha, p_x, plant.p_u, variant == BASELINE, cache, jobs)
        controller = build_controller(cfg, artifacts, w_bar)
        estimator = build_estimator(cfg, artifacts, w_bar)
        traces[variant] = [
            run_trace(cfg, plant, controller, estimator, seed, diagnostics)
            for seed in tqdm(
                seeds, desc=f"{variant} alpha={alpha:g} p={p_x:g}", disable=not progress
            )
        ]
    result = CellResult(alpha, p_x, plant.p_u, rsmpc=variant_summary(traces[RSMPC], plant))
    if BASELINE in traces:
        result.baseline = variant_summary(traces[BASELINE], plant)
        result.cost_increase = _paired_cost_increase(traces[RSMPC], traces[BASELINE])
    logger.info(
        "cell alpha=%s p=%s: N_c %s (baseline %s)",
        str(alpha),
        str(p_x),
        str(result.rsmpc["N_c"]),
        str(None if result.baseline is None else result.baseline["N_c"]),
    )
    return result, traces


def write_cell(
    cfg: ExperimentConfig,
    result: CellResult,
    traces: Dict[str, List[ClosedLoopTrace]],
    folder: str,
) -> None:
    """Writes the cell summary and one CSV per trace into folder"""
    config_hash = cfg.content_hash()
    for variant, variant_traces in traces.items():
        for trace in variant_traces:
            io.write_trace_csv(
                trace,
                os.path.join(folder, "traces", io.trace_filename(config_hash, variant, trace.seed)),
            )
    io.write_summary(result.to_dict(), os.path.join(folder, "summary.json"))


def output_folder(cfg: ExperimentConfig, out_dir: str | None = None) -> str:
    """results folder of the description"""
    return io.run_folder(out_dir or cfg.output_dir, cfg.name, cfg.content_hash())


def cells(cfg: ExperimentConfig) -> List[Tuple[float, float]]:
    """the (alpha, p) grid"""
    return [(alpha, p) for alpha in cfg.experiment.alphas for p in cfg.experiment.p_levels]


def synth(
    cfg: ExperimentConfig, cache: ArtifactCache | None = None, jobs: int = 1
) -> List[Dict]:
    """Synthesizes every controller of the grid and returns their summaries"""
    summaries = []
    for alpha, p in cells(cfg):
        for baseline in [False] + ([True] if cfg.experiment.baseline else []):
            artifacts = synthesize(cfg, alpha, p, None, baseline, cache, jobs)
            summary = artifacts.summary()
            summary.update(
                {"alpha": alpha, "p_x": p, "variant": BASELINE if baseline else RSMPC}
            )
            summaries.append(summary)
    return summaries


def run(
    cfg: ExperimentConfig,
    seed: int | None = None,
    cache: ArtifactCache | None = None,
    out_dir: str | None = None,
    jobs: int = 1,
) -> CellResult:
    """Runs the first cell of the grid, on one seed or on every configured
    seed, and writes its traces and summary"""
    alpha, p = cells(cfg)[0]
    seeds = None if seed is None else [seed]
    result, traces = run_cell(cfg, alpha, p, seeds, cache, jobs, progress=True)
    write_cell(cfg, result, traces, io.cell_folder(output_folder(cfg, out_dir), alpha, p))
    return result


def _sweep_cell_task(args) -> Dict:
    cfg, alpha, p, cache_root, cache_enabled, folder = args
    cache = ArtifactCache(cache_root, cache_enabled)
    try:
        result, traces = run_cell(cfg, alpha, p, cache=cache)
    except RSMPCException as e:
        logger.error("cell alpha=%s p=%s failed: %s", str(alpha), str(p), str(e))
        return CellResult(alpha, p, float("nan"), status=f"error: {e}").to_dict()
    write_cell(cfg, result, traces, io.cell_folder(folder, alpha, p))
    return result.to_dict()


def sweep(
    cfg: ExperimentConfig,
    cache: ArtifactCache | None = None,
    jobs: int = 1,
    out_dir: str | None = None,
) -> List[Dict]:
    """Runs every cell of the grid, each in its own worker when jobs > 1,
    and writes the cell files and the sweep table

    Synthesis happens first in this process, so that workers only read the
    cache. A failing cell is recorded in the table and does not stop the others.
    """
    if cache is None:
        cache = ArtifactCache(cfg.cache_dir, cfg.cache_enabled)
    folder = output_folder(cfg, out_dir)
    if cache.enabled:
        synth(cfg, cache, jobs)
    tasks = [(cfg, alpha, p, cache.root, cache.enabled, folder) for alpha, p in cells(cfg)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(tqdm(pool.map(_sweep_cell_task, tasks), total=len(tasks), desc="cells"))
    else:
        rows = [_sweep_cell_task(task) for task in tqdm(tasks, desc="cells")]
    io.write_table(rows, folder)
    return rows


class CheckResult(NamedTuple):
    """outcome of one consistency check"""

    name: str
    passed: bool
    value: float
    threshold: float


def _coverage_fraction(rprs: RPRSSequence, k: int, samples: np.ndarray) -> float:
    if rprs.shape == "halfspaces":
        offsets = rprs.state_sets.offsets(rprs.bounds.bound(k))
        inside = samples @ rprs.state_sets.directions.T <= offsets
        return float(np.min(np.mean(inside, axis=0)))
    return float(np.mean(rprs.contains_many(k, samples)))


def rprs_at_level(rprs: RPRSSequence, p_x: float) -> RPRSSequence:
    """the same variance bounds and normals with the state sets at level p_x"""
    return build_rprs(
        rprs.bounds,
        rprs.shape,
        p_x,
        rprs.family,
        F=rprs.state_sets.directions,
        G=rprs.input_sets.directions,
        p_u=rprs.p_u,
    )


def rprs_coverage(
    artifacts: SynthesisArtifacts,
    noise: NoiseModel,
    samples: int,
    steps: int,
    seed: int = 0,
    p_x: float | None = None,
) -> float:
    """Smallest empirical probability of the state RPRS over the first steps
    and the vertices of Theta, from simulated zero-mean error trajectories

    Row-wise sets are measured row by row, since each row carries the level on its own.

    Args:
        p_x (float) [None]: measure the sets rebuilt at this level instead
            of the synthesized ones
    """
    rprs = artifacts.rprs if p_x is None else rprs_at_level(artifacts.rprs, p_x)
    W = sample_noise(noise, seed, samples)
    worst = 1.0
    for theta in artifacts.sys.theta_vertices():
        A_cl = artifacts.sys.A_cl(artifacts.K, theta)
        e = np.zeros((samples, artifacts.sys.n))
        for k in range(1, min(steps, noise.T) + 1):
            e = e @ A_cl.T + W[:, k - 1]
            worst = min(worst, _coverage_fraction(rprs, k, e))
    return worst


def coverage_threshold(p_x: float, samples: int) -> float:
    """p_x less 1.5 binomial standard deviations of the empirical fraction"""
    return p_x - 1.5 * math.sqrt(p_x * (1 - p_x) / samples)


def containment_agreement(
    artifacts: SynthesisArtifacts, tuples: int, seed: int = 0, solver=None
) -> int:
    """number of random (Z_i, v, Z_next) tuples on which the primal oracle and
    the dual encoding agree"""
    sys = artifacts.sys
    rng = np.random.default_rng(seed)
    theta_c, _ = sys.Theta.chebyshev_center()
    agree = 0
    for _ in range(tuples):
        s = rng.normal(size=sys.n)
        alpha = rng.uniform(0.0, 1.0)
        v = 0.1 * rng.normal(size=sys.m)
        s_next = sys.A_cl(artifacts.K, theta_c) @ s + sys.B(theta_c) @ v
        s_next = s_next + 0.1 * rng.normal(size=sys.n)
        alpha_next = rng.uniform(0.0, 2.0)
        primal = containment_check(
            (s, alpha), v, (s_next, alpha_next), sys, artifacts.K, artifacts.base
        )
        dual = dual_containment_feasible(
            (s, alpha), v, (s_next, alpha_next), sys, artifacts.K, artifacts.base, solver=solver
        )
        agree += int(primal == dual)
    return agree


def recursive_feasibility(traces: List[ClosedLoopTrace]) -> CheckResult:
    """counts the infeasible steps after step 0 and the shifted candidates
    that failed the feasibility-only test; both must be zero"""
    late_infeasible = sum(
        1
        for trace in traces
        if trace.halted and trace.status[-1] == INFEASIBLE and trace.steps > 0
    )
    failed_candidates = sum(
        sum(1 for feasible in trace.candidate_feasible if not feasible) for trace in traces
    )
    failures = late_infeasible + failed_candidates
    if failed_candidates > 0:
        logger.warning("%s shifted candidates were infeasible", str(failed_candidates))
    return CheckResult("recursive feasibility", failures == 0, failures, 0)


def check(
    cfg: ExperimentConfig, full: bool = False, cache: ArtifactCache | None = None
) -> List[CheckResult]:
    """Consistency checks on the first cell of the grid

    Quick mode checks the Loewner dominance of the variance bounds, the
    agreement of the primal and dual containment tests, the coverage of the
    RPRS at every level of COVERAGE_LEVELS, the terminal weight decrease and
    the invariance of the terminal set. Full mode adds the closed loop checks
    on the configured seeds, with every shifted candidate checked.
    """
    alpha, p = cells(cfg)[0]
    artifacts = synthesize(cfg, alpha, p, cache=cache)
    sys = artifacts.sys
    solver = cfg.controller.get("solver")
    _, noise = build_state_noise(cfg, sys, int(cfg.rprs["T"])).split_mean()
    results = []

    residual = float(np.min(loewner_residuals(artifacts.rprs.bounds, sys, noise, artifacts.K)))
    results.append(
        CheckResult("loewner dominance", residual >= -LOEWNER_TOL, residual, -LOEWNER_TOL)
    )

    tuples = 1000 if full else 100
    agree = containment_agreement(artifacts, tuples, solver=solver)
    results.append(CheckResult("dual containment agreement", agree == tuples, agree, tuples))

    for p_x in COVERAGE_LEVELS:
        coverage = rprs_coverage(artifacts, noise, COVERAGE_SAMPLES, COVERAGE_STEPS, p_x=p_x)
        threshold = coverage_threshold(p_x, COVERAGE_SAMPLES)
        results.append(
            CheckResult(f"rprs coverage p={p_x:g}", coverage >= threshold, coverage, threshold)
        )

    Q, R = _weights(cfg)
    decrease = terminal_weight_residual(sys, artifacts.K, Q, R, artifacts.P_terminal)
    results.append(
        CheckResult("terminal weight decrease", decrease <= RESIDUAL_TOL, decrease, RESIDUAL_TOL)
    )

    results.append(
        CheckResult(
            "terminal invariance",
            artifacts.invariance.passed,
            artifacts.invariance.worst_residual,
            RESIDUAL_TOL,
        )
    )

    if full:
        checked = replace(cfg, experiment=replace(cfg.experiment, check_candidates=True))
        result, traces = run_cell(checked, alpha, p, cache=cache, progress=True)
        results.append(recursive_feasibility(traces[RSMPC]))
        target = 100.0 * p - 3.0
        results.append(
            CheckResult(
                "closed loop satisfaction",
                result.rsmpc["N_c"] >= target,
                result.rsmpc["N_c"],
                target,
            )
        )

    for item in results:
        logger.info(
            "check %s: %s (%s vs %s)",
            item.name,
            "passed" if item.passed else "FAILED",
            str(item.value),
            str(item.threshold),
        )
    return results
