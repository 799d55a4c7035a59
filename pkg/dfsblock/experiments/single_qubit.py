import math

import numpy as np

from dfsblock.experiments.router import ExperimentRouter, Outcome
from dfsblock.logger import get_logger
from dfsblock.models.experiment import ExperimentConfig, Metric
from dfsblock.services.device import isolated_chain, standard_block, standard_chain
from dfsblock.services.gatecomp import (
    compile_map_1_to_2,
    compile_map_2_to_1,
    compile_x_rotation,
    compile_z_unit,
    logical_unitary,
    z_unit,
)
from dfsblock.services.invariants import gate_fidelity
from dfsblock.services.synthesis import circle_distance, synthesize_z_power

router = ExperimentRouter()
logger = get_logger("CLI")

LEAKAGE_TOL = 1e-8
PHASE_TOL = 1e-9
POPULATION_TOL = 1e-10
MAP_TOL = 1e-6
SYNTHESIS_TARGETS = 20
J_PRIME_RATIOS = (0.2, 0.4, 0.6, 0.8, 1.3)
NU_RATIOS = (0.25, 0.5, 1.0, 2.0, 4.0)


def x_rotation(angle: float) -> np.ndarray:
    return np.array([[math.cos(angle), -1j * math.sin(angle)],
                     [-1j * math.sin(angle), math.cos(angle)]])


def z_unit_errors(J: float, J_prime: float, nu: float, blocks: int = 1) -> tuple[float, float, float]:
    """(phase error, |2_L> population, leakage) after one z unit on block 0."""
    theta, _ = z_unit(J, J_prime, nu)
    chain = standard_chain(J, J_prime, blocks) if blocks > 1 else isolated_chain(standard_block(J, J_prime))
    M, result = logical_unitary(chain, compile_z_unit(0, J, J_prime, nu), [0], labels=(0, 1, 2))
    relative = float(np.angle(M[1, 1]) - np.angle(M[0, 0]))
    return circle_distance(relative, 2 * theta), float(abs(M[2, 1]) ** 2), result.leakage


@router.experiment("gate-x", help="Logical X rotation from one K12 pulse")
def gate_x(cfg: ExperimentConfig) -> Outcome:
    chain = standard_chain(cfg.J, cfg.J_prime, cfg.blocks)
    schedule = compile_x_rotation(0, cfg.lam, cfg.mu, cfg.J_prime)
    M, result = logical_unitary(chain, schedule, [0])
    fidelity = gate_fidelity(M, x_rotation(cfg.lam))

    half = compile_x_rotation(0, cfg.lam / 2, cfg.mu, cfg.J_prime)
    M_half, _ = logical_unitary(chain, half.then(half), [0])
    composition = gate_fidelity(M_half, M)

    return Outcome(
        metrics=[
            Metric.close("x_rotation_fidelity", "x-rotation", fidelity, 1.0, 1e-10),
            Metric.close("x_composition_fidelity", "x-rotation", composition, 1.0, 1e-10),
            Metric.bound("x_leakage", "leakage-bound", result.leakage, LEAKAGE_TOL),
        ],
        details={"schedule": schedule.model_dump()},
    )


@router.experiment("gate-z", help="Z unit timing and phase over a grid of J'/J and nu/J")
def gate_z(cfg: ExperimentConfig) -> Outcome:
    theta, t = z_unit(cfg.J, cfg.J_prime, cfg.nu)
    phase_error, population, leak = z_unit_errors(cfg.J, cfg.J_prime, cfg.nu, cfg.blocks)
    worst_phase, worst_population = phase_error, population
    for jr in J_PRIME_RATIOS:
        for nr in NU_RATIOS:
            e, p, _ = z_unit_errors(cfg.J, jr * cfg.J, nr * cfg.J)
            worst_phase, worst_population = max(worst_phase, e), max(worst_population, p)
    logger.info(f"[Z-UNIT] theta={theta:.12f} t={t:.6f}; grid phase error {worst_phase:.2e}")
    return Outcome(
        metrics=[
            Metric.info("theta", "z-unit-angle", theta),
            Metric.bound("z_phase_error", "z-unit-phase", phase_error, PHASE_TOL),
            Metric.bound("z_return_population", "z-unit-return", population, POPULATION_TOL),
            Metric.bound("z_grid_phase_error", "z-unit-phase", worst_phase, PHASE_TOL),
            Metric.bound("z_grid_return_population", "z-unit-return", worst_population, POPULATION_TOL),
            Metric.bound("z_leakage", "leakage-bound", leak, LEAKAGE_TOL),
        ],
        details={"theta": theta, "unit_duration": t},
    )


@router.experiment("synthesize", help="Irrational-power synthesis of Z rotations")
def synthesize(cfg: ExperimentConfig) -> Outcome:
    theta, _ = z_unit(cfg.J, cfg.J_prime, cfg.nu)
    rng = np.random.default_rng(cfg.seed)
    targets = [cfg.lam, *rng.uniform(-math.pi, math.pi, SYNTHESIS_TARGETS)]
    unit = np.diag([np.exp(-1j * theta), np.exp(1j * theta)])
    rows, worst = [], 0.0
    for target in targets:
        found = synthesize_z_power(float(target), theta, cfg.epsilon)
        # direct multiplication of the unit
        achieved = -np.angle(np.linalg.matrix_power(unit, found.power)[0, 0])
        error = circle_distance(float(achieved), float(target))
        worst = max(worst, error)
        rows.append({"target": float(target), "power": found.power, "error": error})
    logger.info(f"[SYNTH] {len(targets)} targets, largest power {max(r['power'] for r in rows)}")
    return Outcome(
        metrics=[
            Metric.check("synthesis_error", "synthesis-error", worst, worst < cfg.epsilon),
            Metric.info("largest_power", "synthesis-cost", max(r["power"] for r in rows)),
        ],
        details={"theta": theta, "targets": rows},
    )


@router.experiment("map12", help="|1_L> <-> |2_L> map from idle and K23 pulses")
def map12(cfg: ExperimentConfig) -> Outcome:
    chain = standard_chain(cfg.J, cfg.J_prime, cfg.blocks)
    forward = compile_map_1_to_2(0, cfg.J, cfg.J_prime, cfg.nu)
    M, result = logical_unitary(chain, forward, [0], labels=(0, 1, 2))
    transfer = float(abs(M[2, 1]) ** 2)

    twice, _ = logical_unitary(chain, forward.then(compile_map_2_to_1(0, cfg.J, cfg.J_prime, cfg.nu)),
                               [0], labels=(0, 1, 2))
    off_diagonal = float(max(abs(twice[1, 2]), abs(twice[2, 1])))
    return Outcome(
        metrics=[
            Metric.bound("swap_distance", "map-swap", forward.metadata["swap_distance"], MAP_TOL),
            Metric.close("transfer_fidelity", "map-swap", transfer, 1.0, MAP_TOL),
            Metric.bound("involution_error", "map-involution", off_diagonal, MAP_TOL),
            Metric.close("zero_state_population", "map-diagonal-zero", float(abs(M[0, 0]) ** 2), 1.0, 1e-10),
            Metric.bound("map_leakage", "leakage-bound", result.leakage, LEAKAGE_TOL),
        ],
        details={"pulses": forward.metadata["pulses"], "duration": forward.duration},
    )
