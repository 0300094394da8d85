"""
Named studies behind `dqpe reproduce`.

Each study writes CSV tables (and JSON/XYZ where useful) into a RunDirectory and
returns a summary dict. Sweeps run as a parallel map over independent cells whose
seeds are spawned from the run seed; results are merged by cell key, so the output
does not depend on the worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

import numpy as np

from dqpe.artifacts import RunDirectory
from dqpe.chem.geometry import builtin_geometry
from dqpe.chem.system import DEFAULT_DETERMINANTS, MolecularSystem
from dqpe.config import RunConfig
from dqpe.core.estimator import gce_moment, majority_rule
from dqpe.core.gradients import fd_gradient, fd_stencil, resolves_on_grid
from dqpe.core.optimizer import (
    ExactStateObjective,
    OptimizationTrace,
    PipelineObjective,
    bfgs,
    excited_state_target,
    gradient_descent,
)
from dqpe.core.pipeline import PhasePipeline
from dqpe.core.qpe import PhaseMap, ReadoutGrid, circular_offset, spectral_distribution
from dqpe.core.sampling import GENERATOR_NAME, SampleStream, frequencies, make_rng, sample, spawn_seeds
from dqpe.core.statistics import (
    chebyshev_samples,
    cost_report,
    theta_closed_form,
    variance_mu,
    variance_mu_closed,
)
from dqpe.errors import ConfigError
from dqpe.logging_config import get_logger

logger = get_logger("studies")

Cell = TypeVar("Cell")

ACCURACY_REGISTERS = tuple(range(8, 15))
ACCURACY_WINDOWS = (8, 16)
ACCURACY_PHASES = 100
ACCURACY_PHASE_RANGE = (0.1, 0.9)

COST_REGISTERS = tuple(range(8, 15))
COST_WINDOWS = (8, 16)

FD_STEPS = (1e-4, 1e-3, 1e-2, 5e-2, 1e-1)  # Å
FD_ESTIMATORS = ("majority", "gce")

NOISE_REGISTERS = (11, 13)
NOISE_SHOTS = (1_000, 10_000, 100_000)
NOISE_SEEDS = 3

VARIANCE_WINDOW = 16
VARIANCE_RUNS = 10_000
VARIANCE_CHUNKS = 16
VARIANCE_FACTOR = 3.0  # empirical vs predicted variance of the mean direction
CHEBYSHEV_MISS_FRACTION = 0.2
CHEMICAL_ACCURACY = 1e-3  # hartree


def parallel_map(fn: Callable[[Cell], dict], cells: Iterable[Cell], workers: int = 1) -> list[dict]:
    """Apply fn to every cell, in a thread pool when workers > 1; output follows cell order."""
    cells = list(cells)
    if workers <= 1 or len(cells) <= 1:
        return [fn(cell) for cell in cells]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, cells))


def _phase_error(estimate: float, phi: float) -> float:
    return float(abs(circular_offset(estimate - phi)))


# accuracy of the GCE against the majority rule on single off-grid eigenphases


def accuracy_study(config: RunConfig, run_dir: RunDirectory,
                   registers: Iterable[int] = ACCURACY_REGISTERS,
                   windows: Iterable[float] = ACCURACY_WINDOWS,
                   n_phases: int = ACCURACY_PHASES) -> dict:
    """
    Median GCE and majority-rule phase errors per (t, window).

    Both windows at one t see the same random phases, so the rows pair up.
    """
    registers, windows = list(registers), list(windows)
    seeds = dict(zip(registers, spawn_seeds(config.seed, len(registers))))
    cells = [(t, window) for t in registers for window in windows]

    def run_cell(cell: tuple[int, float]) -> dict:
        t, window = cell
        grid = ReadoutGrid(t)
        gce_config = config.gce_config(t, window_strings=window)
        phases = make_rng(seeds[t]).uniform(*ACCURACY_PHASE_RANGE, size=n_phases)
        gce_errors, mr_errors = np.empty(n_phases), np.empty(n_phases)
        for i, phi in enumerate(phases):
            dist = spectral_distribution(np.array([phi]), np.array([1.0]), grid)
            gce_errors[i] = _phase_error(gce_moment(dist, gce_config).mean_direction, phi)
            mr_errors[i] = _phase_error(majority_rule(dist), phi)
        logger.debug(f"accuracy cell t={t} window={window} done")
        return {
            "t": t,
            "window": window,
            "half_width": gce_config.half_width,
            "n_phases": n_phases,
            "gce_error": float(np.median(gce_errors)),
            "mr_error": float(np.median(mr_errors)),
            "gce_max": float(gce_errors.max()),
            "mr_max": float(mr_errors.max()),
            "mr_bound": 1.0 / 2 ** (t + 1),
            "gce_not_worse": float(np.mean(gce_errors <= mr_errors + 1e-15)),
            "seed": seeds[t],
        }

    rows = parallel_map(run_cell, cells, config.workers)
    run_dir.write_csv("fig4-accuracy.csv", rows)
    return {
        "cells": len(rows),
        "gce_le_mr_all": all(row["gce_error"] <= row["mr_error"] for row in rows),
        "mr_within_bound_all": all(row["mr_max"] <= row["mr_bound"] * (1 + 1e-12) for row in rows),
    }


# query cost of the GCE for a target phase accuracy


def cost_study(config: RunConfig, run_dir: RunDirectory,
               registers: Iterable[int] = COST_REGISTERS,
               windows: Iterable[float] = COST_WINDOWS) -> dict:
    """CostReport components per (t, window, epsilon) for an eigenstate centered in its window."""
    stats = config.get_section("stats")
    stencil = fd_stencil(config.get("gradient", "fd_order"), config.get("gradient", "fd_step"))
    epsilons = (stats["epsilon"], 0.1 * stats["epsilon"])
    cells = [(t, window, eps) for t in registers for window in windows for eps in epsilons]

    def run_cell(cell: tuple[int, float, float]) -> dict:
        t, window, eps = cell
        h = config.gce_config(t, window_strings=window).half_width
        magnitude = min(abs(theta_closed_form(t, stats["delta_phi"], h, stats["overlap"])), 1.0)
        report = cost_report(t, magnitude, eps, stats["gate_count"], stats["n_params"], stencil.one_norm)
        return {"window": window, "half_width": h, "magnitude": magnitude, **report.to_dict()}

    rows = parallel_map(run_cell, cells, config.workers)
    run_dir.write_csv("fig5-cost.csv", rows)
    return {"cells": len(rows), "fd_step": stencil.step, "stencil_one_norm": stencil.one_norm}


# finite differences through a discrete estimator versus the smooth gradient


def _electronic_energy(pipeline: PhasePipeline, phase_map: PhaseMap) -> Callable[[np.ndarray], float]:
    def energy(x: np.ndarray) -> float:
        return pipeline.energy(x, phase_map) - pipeline.system.offset(x)

    return energy


def fd_study(config: RunConfig, run_dir: RunDirectory, steps: Iterable[float] = FD_STEPS) -> dict:
    """
    Degree-2 central differences of the estimated electronic energy on H3+.

    The nuclear repulsion is smooth and excluded so the rows show what the estimator
    itself resolves. The smooth GCE gradient and the Hellmann-Feynman oracle are
    reported alongside.
    """
    t = config.t
    system = MolecularSystem(builtin_geometry("h3+"), config.get("gradient", "derivative_step"))
    psi = system.input_state()
    x0 = system.initial_x
    gce = PhasePipeline(system, psi, t, "gce", config.gce_config(), margin=config.margin)
    phase_map = gce.phase_map(x0)
    offset_gradient = system.offset_gradient(x0)
    oracle = gce.oracle_gradient(x0) - offset_gradient
    smooth = gce.gradient(x0, phase_map) - offset_gradient
    oracle_norm = float(np.linalg.norm(oracle))

    cells = [(name, step) for name in FD_ESTIMATORS for step in steps]

    def run_cell(cell: tuple[str, float]) -> dict:
        name, step = cell
        pipeline = PhasePipeline(system, psi, t, name, config.gce_config(), margin=config.margin)
        energy = _electronic_energy(pipeline, phase_map)
        stencil = fd_stencil(1, step)
        values = np.array([fd_gradient(energy, stencil, x0, j) for j in range(system.n_params)])
        phases = [
            phase_map.phase_of_energy(energy(x0 + l * step * np.eye(system.n_params)[j]))
            for j in range(system.n_params)
            for l in (-1, 1)
        ]
        return {
            "estimator": name,
            "step": step,
            "fd_norm": float(np.linalg.norm(values)),
            "oracle_norm": oracle_norm,
            "relative_error": float(np.linalg.norm(values - oracle) / oracle_norm),
            "zero_components": int(np.count_nonzero(values == 0.0)),
            "resolved": resolves_on_grid(phases, t),
        }

    rows = parallel_map(run_cell, cells, config.workers)
    rows.append({
        "estimator": "gce-smooth",
        "step": "",
        "fd_norm": float(np.linalg.norm(smooth)),
        "oracle_norm": oracle_norm,
        "relative_error": float(np.linalg.norm(smooth - oracle) / oracle_norm),
        "zero_components": int(np.count_nonzero(smooth == 0.0)),
        "resolved": "",
    })
    run_dir.write_csv("fig8-fd.csv", rows)
    cosine = float(smooth @ oracle / (np.linalg.norm(smooth) * oracle_norm))
    return {"t": t, "oracle_norm": oracle_norm, "smooth_norm": float(np.linalg.norm(smooth)),
            "smooth_oracle_cosine": cosine}


# geometry optimizations against the exact-diagonalization optimum


def run_optimizer(objective, x0: np.ndarray, config: RunConfig, metadata: dict) -> OptimizationTrace:
    section = config.get_section("optimizer")
    if section["method"] == "bfgs":
        return bfgs(objective, x0, tol=section["tol"], max_iter=section["max_iter"],
                    fallback_step=section["step"], metadata=metadata)
    return gradient_descent(objective, x0, step=section["step"], tol=section["tol"],
                            max_iter=section["max_iter"], metadata=metadata)


def _sorted_bonds(system: MolecularSystem, x: np.ndarray) -> np.ndarray:
    return np.sort(np.array(list(system.geometry_at(x).bond_lengths().values())))


def _oracle_optimum(system: MolecularSystem, psi: np.ndarray, config: RunConfig) -> OptimizationTrace:
    return bfgs(ExactStateObjective(system, psi), system.initial_x,
                tol=config.get("optimizer", "tol"), max_iter=config.get("optimizer", "max_iter"),
                metadata={"objective": "exact"})


def _comparison(system: MolecularSystem, trace: OptimizationTrace, oracle: OptimizationTrace) -> dict:
    bonds = _sorted_bonds(system, trace.final.x)
    oracle_bonds = _sorted_bonds(system, oracle.final.x)
    return {
        "final_energy": trace.final.energy,
        "oracle_energy": oracle.final.energy,
        "energy_error": abs(trace.final.energy - oracle.final.energy),
        "bond_error": float(np.max(np.abs(bonds - oracle_bonds))),
        "bond_spread": float(bonds.max() - bonds.min()),
        "bonds": bonds.tolist(),
        "oracle_bonds": oracle_bonds.tolist(),
        "converged": trace.converged,
        "iterations": len(trace.records),
        "non_monotone_steps": trace.non_monotone_steps,
        "final_overlap": trace.final.overlap,
    }


def optimization_study(config: RunConfig, run_dir: RunDirectory, molecule: str, prefix: str) -> dict:
    """Pipeline optimization from a shipped start, compared with the exact-state optimum."""
    system = MolecularSystem(builtin_geometry(molecule), config.get("gradient", "derivative_step"))
    determinant = config.get("state", "determinant") or DEFAULT_DETERMINANTS.get(molecule)
    target = excited_state_target(system, system.initial_x, determinant=determinant,
                                  csf=config.get("state", "csf"))
    pipeline = PhasePipeline(system, target.psi, config.t, config.estimator_name, config.gce_config(),
                             shots=config.shots, seed=config.seed, margin=config.margin)
    metadata = {"molecule": molecule, "t": config.t, "estimator": config.estimator_name,
                "shots": config.shots, "seed": pipeline.seed, "determinant": determinant,
                "gce": pipeline.config.to_dict()}
    trace = run_optimizer(PipelineObjective(pipeline), system.initial_x, config, metadata)
    trace.metadata["draws"] = pipeline.draws
    oracle = _oracle_optimum(system, target.psi, config)

    run_dir.write_csv(f"{prefix}-trace.csv", trace.rows())
    run_dir.write_csv(f"{prefix}-oracle-trace.csv", oracle.rows())
    run_dir.write_xyz_frames(
        f"{prefix}-geometries.xyz",
        ((system.geometry_at(r.x), f"iteration={r.iteration} energy={r.energy:.10f}") for r in trace.records),
    )
    summary = _comparison(system, trace, oracle)
    state_index, _ = pipeline.dominant_state(trace.final.x)
    summary["final_state_index"] = state_index
    summary["target_state_index"] = target.dominant_index
    summary["energy_resolution"] = 1.0 / (pipeline.phase_map(oracle.final.x).scale * pipeline.grid.size)
    run_dir.write_json(f"{prefix}.json", {"trace": trace.to_dict(), "oracle": oracle.to_dict(), **summary})
    return summary


# shot noise in repeated ground-state optimizations


def noise_study(config: RunConfig, run_dir: RunDirectory,
                registers: Iterable[int] = NOISE_REGISTERS,
                shot_counts: Iterable[int] = NOISE_SHOTS,
                n_seeds: int = NOISE_SEEDS) -> dict:
    """
    Final-geometry error of sampled optimizations per (t, shots, seed).

    A fourth shot count per register is the Chebyshev count for chemical accuracy at
    the start geometry ("prescribed" rows).
    """
    registers, shot_counts = list(registers), list(shot_counts)
    system = MolecularSystem(builtin_geometry("h3+"), config.get("gradient", "derivative_step"))
    psi = system.input_state()
    oracle = _oracle_optimum(system, psi, config)
    x0 = system.initial_x

    cells = []
    for t in registers:
        reference = PhasePipeline(system, psi, t, "gce", config.gce_config(t), margin=config.margin)
        exact = gce_moment(reference.distribution(x0), reference.config)
        epsilon = CHEMICAL_ACCURACY * reference.phase_map(x0).scale
        prescribed = chebyshev_samples(variance_mu(exact), epsilon)
        logger.info(f"t={t}: Chebyshev shot count for {CHEMICAL_ACCURACY} Ha is {prescribed}")
        counts = [(shots, False) for shots in shot_counts] + [(prescribed, True)]
        cells.extend((t, shots, is_prescribed, i) for shots, is_prescribed in counts for i in range(n_seeds))
    seeds = spawn_seeds(config.seed, len(cells))
    keyed = [(cell, seed) for cell, seed in zip(cells, seeds)]

    def run_cell(item) -> dict:
        (t, shots, is_prescribed, replica), seed = item
        pipeline = PhasePipeline(system, psi, t, "gce", config.gce_config(t),
                                 shots=shots, seed=seed, margin=config.margin)
        trace = run_optimizer(PipelineObjective(pipeline), x0, config,
                          {"t": t, "shots": shots, "seed": seed})
        trace.metadata["draws"] = pipeline.draws
        result = _comparison(system, trace, oracle)
        return {
            "t": t,
            "shots": shots,
            "prescribed": is_prescribed,
            "replica": replica,
            "seed": seed,
            "draws": pipeline.draws,
            "final_energy": result["final_energy"],
            "energy_error": result["energy_error"],
            "bond_error": result["bond_error"],
            "iterations": result["iterations"],
            "converged": result["converged"],
        }

    rows = parallel_map(run_cell, keyed, config.workers)
    run_dir.write_csv("appB-noise.csv", rows)

    medians = {}
    for t in registers:
        medians[t] = [
            float(np.median([r["bond_error"] for r in rows
                             if r["t"] == t and r["shots"] == shots and not r["prescribed"]]))
            for shots in shot_counts
        ]
    return {"oracle_energy": oracle.final.energy, "median_bond_error": medians}


# Monte-Carlo check of the mean-direction variance and the Chebyshev count


def variance_study(config: RunConfig, run_dir: RunDirectory, runs: int = VARIANCE_RUNS,
                   window: float = VARIANCE_WINDOW) -> dict:
    """
    Empirical spread of the sampled GCE for one off-grid eigenstate.

    epsilon is 1 mHa in phase units for a 1-hartree span; the predicted variance of
    the N-shot estimate is Var(mu)/N with N the Chebyshev count.
    """
    t = config.t
    grid = ReadoutGrid(t)
    gce_config = config.gce_config(t, window_strings=window)
    rng = make_rng(config.seed)
    phi = float(rng.uniform(*ACCURACY_PHASE_RANGE))
    parent = spectral_distribution(np.array([phi]), np.array([1.0]), grid)
    exact = gce_moment(parent, gce_config)
    epsilon = CHEMICAL_ACCURACY * PhaseMap(e_min=0.0, span=1.0, margin=config.margin).scale
    var = variance_mu(exact)
    n_samples = chebyshev_samples(var, epsilon)

    chunks = max(1, min(VARIANCE_CHUNKS, runs))
    sizes = [runs // chunks + (1 if i < runs % chunks else 0) for i in range(chunks)]
    cells = list(zip(range(chunks), sizes, spawn_seeds(config.seed, chunks)))

    def run_cell(cell: tuple[int, int, int]) -> dict:
        index, size, seed = cell
        stream = SampleStream(seed)
        estimates = np.empty(size)
        for i in range(size):
            empirical = frequencies(sample(parent, n_samples, stream))
            estimates[i] = gce_moment(empirical, gce_config).mean_direction
        return {"chunk": index, "seed": seed, "draws": stream.draws, "estimates": estimates}

    results = parallel_map(run_cell, cells, config.workers)
    estimates = np.concatenate([r["estimates"] for r in results])
    deviation = circular_offset(estimates - exact.mean_direction)
    empirical_var = float(np.var(deviation))
    predicted = var / n_samples
    ratio = empirical_var / predicted if predicted > 0 else float("nan")
    exceed_fraction = float(np.mean(np.abs(circular_offset(estimates - phi)) > epsilon))
    row = {
        "t": t,
        "window": window,
        "phi": phi,
        "epsilon": epsilon,
        "magnitude": exact.magnitude,
        "variance_mu": var,
        "variance_mu_closed": variance_mu_closed(min(exact.magnitude, 1.0)),
        "n_samples": n_samples,
        "runs": runs,
        "predicted_variance": predicted,
        "empirical_variance": empirical_var,
        "ratio": ratio,
        "within_factor_3": bool(1.0 / VARIANCE_FACTOR <= ratio <= VARIANCE_FACTOR),
        "spread_bounded": bool(ratio <= VARIANCE_FACTOR),
        "exceed_fraction": exceed_fraction,
        "chebyshev_holds": bool(exceed_fraction <= CHEBYSHEV_MISS_FRACTION),
    }
    run_dir.write_csv("variance.csv", [row])
    run_dir.write_json("variance-seeds.json", {
        "seed": config.seed,
        "generator": GENERATOR_NAME,
        "shots": n_samples,
        "chunks": [{"chunk": r["chunk"], "seed": r["seed"], "draws": r["draws"]} for r in results],
    })
    return row


STUDIES: dict[str, Callable[[RunConfig, RunDirectory], dict]] = {
    "fig4-accuracy": accuracy_study,
    "fig5-cost": cost_study,
    "fig8-fd": fd_study,
    "fig9-h3-gs": lambda config, run_dir: optimization_study(config, run_dir, "h3+", "fig9-h3-gs"),
    "fig10-h3-triplet": lambda config, run_dir: optimization_study(
        config, run_dir, "h3+-triplet", "fig10-h3-triplet"
    ),
    "appB-noise": noise_study,
    "variance": variance_study,
}


def run_study(name: str, config: RunConfig, run_dir: RunDirectory) -> dict:
    """Run a named study and write its summary beside the tables."""
    try:
        study = STUDIES[name]
    except KeyError:
        raise ConfigError(f"Unknown study {name!r}", known=sorted(STUDIES)) from None
    logger.info(f"Running study {name} into {run_dir.path}")
    summary = study(config, run_dir)
    run_dir.write_json(f"{name}-summary.json", {"study": name, "seed": config.seed, **summary})
    return summary
