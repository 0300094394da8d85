"""
dqpe command-line entry point.

Subcommands: distribution, estimate, stats, grad, optimize, reproduce. Every run
writes its resolved config into the output directory; failures print the error JSON
on stderr, write error.json and exit 2 (input) or 3 (numerics).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np

from dqpe import __version__
from dqpe.artifacts import RunDirectory
from dqpe.chem.geometry import builtin_geometry, load_geometry
from dqpe.chem.system import DEFAULT_DETERMINANTS, FixedSystem, MolecularSystem
from dqpe.config import (
    BUILTIN_MOLECULES,
    ESTIMATORS,
    OPTIMIZERS,
    QPE_METHODS,
    SOURCES,
    RunConfig,
)
from dqpe.core.estimator import estimate as run_estimator
from dqpe.core.gradients import GradientReport, fd_gradient, fd_stencil, richardson_check
from dqpe.core.optimizer import PipelineObjective, excited_state_target
from dqpe.core.pipeline import PhasePipeline
from dqpe.core.qpe import (
    ParentDistribution,
    ReadoutGrid,
    circuit_distribution,
    circular_offset,
    spectral_distribution,
)
from dqpe.core.sampling import frequencies, sample
from dqpe.core.spectral import ParametrizedHamiltonian
from dqpe.core.statistics import analyze_moment, cost_report
from dqpe.errors import ConfigError, DqpeError, InputError, NumericalError
from dqpe.logging_config import get_default_log_file, get_logger, setup_logging
from dqpe.studies import STUDIES, run_optimizer, run_study

logger = get_logger("app")

# flag dest -> (section, key)
CONFIG_FLAGS = {
    "output_dir": ("run", "output_dir"),
    "seed": ("run", "seed"),
    "workers": ("run", "workers"),
    "t": ("qpe", "t"),
    "margin": ("qpe", "margin"),
    "qpe_method": ("qpe", "method"),
    "estimator": ("estimator", "name"),
    "temperature": ("estimator", "temperature"),
    "steepness": ("estimator", "steepness"),
    "window_strings": ("estimator", "window_strings"),
    "half_width": ("estimator", "half_width"),
    "shots": ("sampling", "shots"),
    "source": ("system", "source"),
    "molecule": ("system", "molecule"),
    "path": ("system", "path"),
    "charge": ("system", "charge"),
    "phases": ("system", "phases"),
    "weights": ("system", "weights"),
    "determinant": ("state", "determinant"),
    "fd_order": ("gradient", "fd_order"),
    "fd_step": ("gradient", "fd_step"),
    "derivative_step": ("gradient", "derivative_step"),
    "optimizer": ("optimizer", "method"),
    "step": ("optimizer", "step"),
    "tol": ("optimizer", "tol"),
    "max_iter": ("optimizer", "max_iter"),
    "epsilon": ("stats", "epsilon"),
    "gate_count": ("stats", "gate_count"),
    "n_params": ("stats", "n_params"),
    "overlap": ("stats", "overlap"),
    "delta_phi": ("stats", "delta_phi"),
}


def _common_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--config", type=str, default=None, help="JSON run configuration.")
    parser.add_argument("--output-dir", type=str, default=None, help="Run directory.")
    parser.add_argument("--seed", type=int, default=None, help="Root seed of every RNG stream.")
    parser.add_argument("--workers", type=int, default=None, help="Thread pool size for sweeps.")
    parser.add_argument("--t", type=int, default=None, help="Readout qubits.")
    parser.add_argument("--margin", type=float, default=None, help="Phase-map guard band.")
    parser.add_argument("--qpe-method", choices=QPE_METHODS, default=None)
    parser.add_argument("--estimator", choices=ESTIMATORS, default=None)
    parser.add_argument("--temperature", type=float, default=None, help="Softmax temperature.")
    parser.add_argument("--steepness", type=float, default=None, help="Boxcar steepness.")
    parser.add_argument("--window-strings", type=float, default=None, help="Window half-width in grid points.")
    parser.add_argument("--half-width", type=float, default=None, help="Window half-width in phase units.")
    parser.add_argument("--shots", type=int, default=None, help="Shots per readout (0 = exact).")
    parser.add_argument("--source", choices=SOURCES, default=None)
    parser.add_argument("--molecule", choices=BUILTIN_MOLECULES, default=None)
    parser.add_argument("--path", type=str, default=None, help="XYZ or FCIDUMP file.")
    parser.add_argument("--charge", type=int, default=None)
    parser.add_argument("--phases", type=float, nargs="+", default=None, help="Synthetic eigenphases.")
    parser.add_argument("--weights", type=float, nargs="+", default=None, help="Synthetic overlaps.")
    parser.add_argument("--determinant", type=str, default=None, help="Input occupation bitstring.")
    parser.add_argument("--fd-order", type=int, default=None)
    parser.add_argument("--fd-step", type=float, default=None, help="FD step in angstrom.")
    parser.add_argument("--derivative-step", type=float, default=None)
    parser.add_argument("--optimizer", choices=OPTIMIZERS, default=None)
    parser.add_argument("--step", type=float, default=None, help="GD learning rate (Å^2/Ha).")
    parser.add_argument("--tol", type=float, default=None, help="Gradient tolerance (Ha/Å).")
    parser.add_argument("--max-iter", type=int, default=None)
    parser.add_argument("--epsilon", type=float, default=None, help="Target phase accuracy.")
    parser.add_argument("--gate-count", type=int, default=None)
    parser.add_argument("--n-params", type=int, default=None)
    parser.add_argument("--overlap", type=float, default=None)
    parser.add_argument("--delta-phi", type=float, default=None)
    parser.add_argument(
        "--log-level",
        type=str,
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        help="Logging level (default: INFO).",
    )
    parser.add_argument("--log-file", type=str, default=None,
                        help="Path to log file (default: <output-dir>/dqpe.log).")
    parser.add_argument("--no-log-file", action="store_true", help="Disable logging to file.")
    return parser


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="dqpe", description="Differentiable quantum phase estimation")
    parser.add_argument("--version", action="version", version=f"dqpe {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("distribution", parents=[common], help="Parent distribution CSV.")
    sub.add_parser("estimate", parents=[common], help="Phase and energy estimate JSON.")
    sub.add_parser("stats", parents=[common], help="Variance and query-cost report.")
    sub.add_parser("grad", parents=[common], help="Smooth gradient with FD and oracle validation.")
    sub.add_parser("optimize", parents=[common], help="Geometry optimization trace.")
    reproduce = sub.add_parser("reproduce", parents=[common], help="Named studies.")
    reproduce.add_argument("study", choices=sorted(STUDIES))
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    """Defaults < config file < flags, validated."""
    config = RunConfig(Path(args.config) if args.config else None)
    for dest, (section, key) in CONFIG_FLAGS.items():
        value = getattr(args, dest, None)
        if value is not None:
            config.set(section, key, value)
    if args.half_width is None and args.window_strings is not None:
        config.set("estimator", "half_width", None)
    if args.phases is not None and args.source is None:
        config.set("system", "source", "synthetic")
    config.validate()
    return config


@dataclass
class Problem:
    """What a subcommand operates on: a parametrized system or fixed synthetic phases."""

    system: Optional[ParametrizedHamiltonian]
    psi: Optional[np.ndarray]
    phases: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    determinant: Optional[str] = None

    @property
    def synthetic(self) -> bool:
        return self.system is None


def build_problem(config: RunConfig) -> Problem:
    source = config.system_source
    section = config.get_section("system")
    if source == "synthetic":
        phases = np.mod(np.asarray(section["phases"], dtype=float), 1.0)
        weights = section["weights"]
        weights = np.full(phases.size, 1.0 / phases.size) if weights is None else np.asarray(weights, float)
        return Problem(system=None, psi=None, phases=phases, weights=weights)

    determinant = config.get("state", "determinant")
    if source == "fcidump":
        system: ParametrizedHamiltonian = FixedSystem.from_fcidump(section["path"])
    elif source == "xyz":
        geometry = load_geometry(section["path"], None, charge=section["charge"] or 0)
        system = MolecularSystem(geometry, config.get("gradient", "derivative_step"))
    else:
        geometry = builtin_geometry(section["molecule"])
        if section["charge"] is not None and section["charge"] != geometry.charge:
            geometry = replace(geometry, charge=section["charge"])
        system = MolecularSystem(geometry, config.get("gradient", "derivative_step"))
        determinant = determinant or DEFAULT_DETERMINANTS.get(section["molecule"])
    target = excited_state_target(system, system.initial_x, determinant=determinant,
                                  csf=config.get("state", "csf"))
    return Problem(system=system, psi=target.psi, determinant=determinant)


def _pipeline(problem: Problem, config: RunConfig) -> PhasePipeline:
    return PhasePipeline(problem.system, problem.psi, config.t, config.estimator_name, config.gce_config(),
                         shots=config.shots, seed=config.seed, margin=config.margin)


def _parent(problem: Problem, config: RunConfig) -> ParentDistribution:
    grid = ReadoutGrid(config.t)
    if problem.synthetic:
        return spectral_distribution(problem.phases, problem.weights, grid)
    pipeline = _pipeline(problem, config)
    x0 = problem.system.initial_x
    if config.qpe_method == "circuit":
        return circuit_distribution(problem.system.evaluate(x0), problem.psi, pipeline.phase_map(x0), grid)
    return pipeline.distribution(x0)


def cmd_distribution(config: RunConfig, run_dir: RunDirectory) -> dict:
    parent = _parent(build_problem(config), config)
    path = run_dir.write_csv("distribution.csv", parent.rows(), ["index", "phase", "probability"])
    result: dict[str, Any] = {"distribution": str(path), "t": config.t, "method": config.qpe_method}
    if config.shots:
        empirical = sample(parent, config.shots, config.seed)
        result["empirical"] = str(run_dir.write_csv("empirical.csv", empirical.rows(),
                                                    ["index", "count", "frequency"]))
        run_dir.write_json("empirical.json", empirical.sidecar())
    return result


def cmd_estimate(config: RunConfig, run_dir: RunDirectory) -> dict:
    problem = build_problem(config)
    if problem.synthetic:
        parent = _parent(problem, config)
        empirical = sample(parent, config.shots, config.seed) if config.shots else None
        readout = frequencies(empirical) if empirical else parent
        moment = run_estimator(readout, config.estimator_name, config.gce_config())
        dominant = float(problem.phases[int(np.argmax(problem.weights))])
        result = {**moment.to_dict(), "energy": None, "phase": dominant,
                  "error": float(abs(circular_offset(moment.mean_direction - dominant)))}
        if empirical:
            result["sampling"] = empirical.sidecar()
    else:
        pipeline = _pipeline(problem, config)
        x0 = problem.system.initial_x
        phase_map = pipeline.phase_map(x0)
        moment = pipeline.moment(x0, phase_map)
        energy = float(phase_map.energy_of_phase(moment.mean_direction)) + problem.system.offset(x0)
        exact = pipeline.exact_energy(x0)
        _, overlap = pipeline.dominant_state(x0)
        result = {**moment.to_dict(), "energy": energy, "exact_energy": exact,
                  "error": abs(energy - exact), "overlap": overlap,
                  "phase_map": phase_map.to_dict(), "determinant": problem.determinant}
        if pipeline.last_empirical is not None:
            result["sampling"] = pipeline.last_empirical.sidecar()
    run_dir.write_json("estimate.json", result)
    return result


def cmd_stats(config: RunConfig, run_dir: RunDirectory) -> dict:
    stats = config.get_section("stats")
    h = config.gce_config().half_width
    analysis = analyze_moment(config.t, stats["delta_phi"], h, stats["overlap"])
    magnitude = min(abs(analysis.theta_closed), 1.0)
    stencil = fd_stencil(config.get("gradient", "fd_order"), config.get("gradient", "fd_step"))
    report = cost_report(config.t, magnitude, stats["epsilon"], stats["gate_count"],
                         stats["n_params"], stencil.one_norm)
    result = {"moment": analysis.to_dict(), "cost": report.to_dict(), "stencil": stencil.to_dict()}
    run_dir.write_json("stats.json", result)
    for key in ("variance_theta", "variance_mu", "n_samples_estimate", "n_shots_gradient",
                "n_calls", "total_queries"):
        logger.info(f"{key}: {getattr(report, key)}")
    return result


def _molecular(problem: Problem, what: str) -> ParametrizedHamiltonian:
    if problem.synthetic or problem.system.n_params == 0:
        raise ConfigError(f"{what} needs a geometry-parametrized system (builtin or xyz source)")
    return problem.system


def cmd_grad(config: RunConfig, run_dir: RunDirectory) -> dict:
    problem = build_problem(config)
    system = _molecular(problem, "grad")
    pipeline = _pipeline(problem, config)
    x0 = system.initial_x
    phase_map = pipeline.phase_map(x0)
    smooth = pipeline.gradient(x0, phase_map)
    oracle = pipeline.oracle_gradient(x0)

    exact = PhasePipeline(system, problem.psi, config.t, config.estimator_name, config.gce_config(),
                          margin=config.margin)

    def energy(x: np.ndarray) -> float:
        return exact.energy(x, phase_map)

    stencil = fd_stencil(config.get("gradient", "fd_order"), config.get("gradient", "fd_step"))
    fd = np.array([fd_gradient(energy, stencil, x0, j) for j in range(system.n_params)])
    richardson = [richardson_check(energy, x0, j, stencil.step) for j in range(system.n_params)]
    scale = max(float(np.linalg.norm(fd)), 1e-12)
    validation = {
        "fd": fd.tolist(),
        "fd_relative_error": float(np.linalg.norm(smooth - fd) / scale),
        "oracle": oracle.tolist(),
        "oracle_relative_error": float(np.linalg.norm(smooth - oracle) / max(np.linalg.norm(oracle), 1e-12)),
        "richardson_residuals": [r["residual"] for r in richardson],
        "stencil": stencil.to_dict(),
        "sampled": pipeline.sampled,
    }
    if pipeline.last_empirical is not None:
        validation["sampling"] = pipeline.last_empirical.sidecar()
    report = GradientReport(values=smooth, method="smooth", validation=validation)
    result = report.to_dict()
    run_dir.write_json("gradient.json", result)
    return result


def cmd_optimize(config: RunConfig, run_dir: RunDirectory) -> dict:
    problem = build_problem(config)
    system = _molecular(problem, "optimize")
    pipeline = _pipeline(problem, config)
    metadata = {"t": config.t, "estimator": config.estimator_name, "shots": config.shots,
                "seed": pipeline.seed, "determinant": problem.determinant, "gce": pipeline.config.to_dict()}
    trace = run_optimizer(PipelineObjective(pipeline), system.initial_x, config, metadata)
    trace.metadata["draws"] = pipeline.draws
    run_dir.write_csv("trace.csv", trace.rows())
    run_dir.write_json("trace.json", trace.to_dict())
    geometry_at = getattr(system, "geometry_at")
    run_dir.write_xyz_frames(
        "geometries.xyz",
        ((geometry_at(r.x), f"iteration={r.iteration} energy={r.energy:.10f}") for r in trace.records),
    )
    return trace.to_dict()


COMMANDS = {
    "distribution": cmd_distribution,
    "estimate": cmd_estimate,
    "stats": cmd_stats,
    "grad": cmd_grad,
    "optimize": cmd_optimize,
}


def _report_error(exc: DqpeError, run_dir: Optional[RunDirectory]) -> int:
    payload = exc.to_dict()
    print(json.dumps(payload), file=sys.stderr)
    if run_dir is not None:
        try:
            run_dir.write_error(exc)
        except DqpeError as write_exc:
            logger.error(f"Failed to write error.json: {write_exc}")
    return exc.exit_code


def run_app(argv: list[str] | None = None) -> int:
    """
    Entry point for the dqpe CLI.
    """
    argv = sys.argv[1:] if argv is None else argv
    args = build_parser().parse_args(argv)

    run_dir: Optional[RunDirectory] = None
    try:
        config = load_config(args)
        run_dir = RunDirectory(config.output_dir)
    except DqpeError as exc:
        setup_logging(level=args.log_level, console=True)
        logger.error(f"Failed to prepare the run: {exc}")
        return _report_error(exc, run_dir)

    log_file = None
    if not args.no_log_file:
        log_file = Path(args.log_file) if args.log_file else get_default_log_file(config.output_dir)
    try:
        setup_logging(level=args.log_level, log_file=log_file, console=True)
    except OSError as exc:
        setup_logging(level=args.log_level, console=True)
        logger.error(f"Failed to open the log file {log_file}: {exc}")
        return _report_error(InputError(f"Cannot open log file {log_file}: {exc}"), run_dir)

    logger.info(f"dqpe {__version__} starting: {args.command}")
    logger.debug(f"Command line arguments: {argv}")

    try:
        run_dir.write_config(config.resolved())
        if args.command == "reproduce":
            result = run_study(args.study, config, run_dir)
        else:
            result = COMMANDS[args.command](config, run_dir)
    except DqpeError as exc:
        logger.error(f"Failed to run {args.command}: {exc}")
        return _report_error(exc, run_dir)
    except OSError as exc:
        logger.exception(f"I/O failure in {args.command}")
        return _report_error(InputError(f"I/O failure: {exc}", kind=type(exc).__name__), run_dir)
    except (np.linalg.LinAlgError, ArithmeticError) as exc:
        logger.exception(f"Numerical failure in {args.command}")
        return _report_error(NumericalError(f"Numerical failure: {exc}", kind=type(exc).__name__), run_dir)

    print(json.dumps(result, default=str, indent=2))
    logger.info(f"{args.command} finished; outputs in {run_dir.path}")
    return 0
