"""Encoding checks: DFS and IFS subspaces, frame Hamiltonians, stabilizer limit, block topology."""
import math

import numpy as np

from dfsblock.experiments.router import ExperimentRouter, Outcome
from dfsblock.logger import get_logger
from dfsblock.models.device import LogicalFrame
from dfsblock.models.experiment import ExperimentConfig, Metric
from dfsblock.services.device import (
    STANDARD_J_PRIME_EDGES,
    block_dfs_constraints,
    block_hamiltonian,
    block_ifs_constraints,
    chain_dfs_projector,
    chain_hamiltonian,
    effective_hamiltonian,
    frame_indices,
    interblock_hamiltonian,
    isolated_chain,
    standard_block,
    standard_chain,
    topology_search,
)
from dfsblock.services.operators import commutator_norm, operator_norm
from dfsblock.services.subspace import (
    dfs_dimension,
    gamma_stabilizer,
    intersect,
    projector_from_constraints,
)

router = ExperimentRouter()
logger = get_logger("CLI")

EXACT_TOL = 1e-10
COUPLING_GRID = np.linspace(-2.0, 2.0, 5)
DFS_IFS_STATES = {"0101", "0110", "1001", "1010"}


def frame_model(J: float, J_prime: float, k12: float, k23: float) -> np.ndarray:
    """Expected 3x3 frame Hamiltonian of one block with K12 = k12, K23 = k23."""
    return np.array([
        [-2 * J_prime, 2 * k12, 0],
        [2 * k12, -2 * J_prime, 2 * k23],
        [0, 2 * k23, 2 * J_prime - 4 * J],
    ], dtype=complex)


def two_block_idle_model(J: float, J_prime: float) -> np.ndarray:
    """-5J + (3J - 2J')(Z1 + Z2) - J Z1 Z2 on the {|1_L>, |2_L>}^2 space, |1_L> as z = +1."""
    Z = np.diag([1.0, -1.0])
    I = np.eye(2)
    return (-5 * J * np.eye(4) + (3 * J - 2 * J_prime) * (np.kron(Z, I) + np.kron(I, Z))
            - J * np.kron(Z, Z))


@router.experiment("verify-encoding", help="DFS/IFS dimensions, invariance and frame Hamiltonians")
def verify_encoding(cfg: ExperimentConfig) -> Outcome:
    J, Jp = cfg.J, cfg.J_prime
    spec = standard_block(J, Jp)
    metrics = []

    p_dfs = projector_from_constraints(block_dfs_constraints())
    p_ifs = projector_from_constraints(block_ifs_constraints())
    metrics.append(Metric.close("block_dfs_dimension", "dfs-dimension", p_dfs.rank, dfs_dimension(4, 0), 0))
    common = intersect(p_dfs, p_ifs)
    support = {format(i, "04b") for i in common.support()}
    metrics.append(Metric.close("dfs_ifs_dimension", "dfs-ifs-intersection", common.rank, 4, 0))
    metrics.append(Metric.check("dfs_ifs_support", "dfs-ifs-intersection", len(support), support == DFS_IFS_STATES))

    chain = isolated_chain(spec)
    worst_commutator, worst_frame = 0.0, 0.0
    for k12 in COUPLING_GRID:
        for k23 in COUPLING_GRID:
            H = block_hamiltonian(spec, {(1, 2): k12, (2, 3): k23})
            worst_commutator = max(worst_commutator, commutator_norm(p_dfs.matrix, H))
            h = effective_hamiltonian(H, chain, [LogicalFrame(0)])
            worst_frame = max(worst_frame, float(np.max(np.abs(h - frame_model(J, Jp, k12, k23)))))
    metrics.append(Metric.bound("block_dfs_invariance", "dfs-invariance", worst_commutator, EXACT_TOL))
    metrics.append(Metric.bound("frame_hamiltonian_error", "frame-hamiltonian", worst_frame, EXACT_TOL))

    if cfg.blocks >= 2:
        two = standard_chain(J, Jp, 2)
        frames = [LogicalFrame(0), LogicalFrame(1)]
        h_inter = effective_hamiltonian(interblock_hamiltonian(two, 0), two, frames)
        expected = np.zeros((9, 9), dtype=complex)
        expected[8, 8] = -4 * two.interblock_strength
        metrics.append(Metric.bound("interblock_frame_error", "interblock-frame-energy",
                                    float(np.max(np.abs(h_inter - expected))), EXACT_TOL))

        H = chain_hamiltonian(two)
        P = chain_dfs_projector(two)
        metrics.append(Metric.bound("chain_dfs_invariance", "dfs-invariance", commutator_norm(P.matrix, H), EXACT_TOL))

        idx = frame_indices(two, frames, labels=(1, 2))
        sub = H.matrix[idx][:, idx]
        sub = sub.toarray() if hasattr(sub, "toarray") else np.asarray(sub)
        metrics.append(Metric.bound("two_block_idle_error", "two-block-idle-form",
                                    float(np.max(np.abs(sub - two_block_idle_model(J, Jp)))), EXACT_TOL))

    logger.info(f"[ENCODING] J={J} J'={Jp}: {sum(m.passed for m in metrics)}/{len(metrics)} checks passed")
    return Outcome(metrics=metrics, details={"dfs_ifs_states": sorted(support)})


@router.experiment("stabilizer-convergence", help="||D_Gamma - P|| = exp(-4 Gamma) for DFS and IFS stabilizers")
def stabilizer_convergence(cfg: ExperimentConfig) -> Outcome:
    p_dfs = projector_from_constraints(block_dfs_constraints())
    p_ifs = projector_from_constraints(block_ifs_constraints())
    metrics, curve = [], []
    for gamma in cfg.gammas:
        expected = math.exp(-4 * gamma)
        d = operator_norm(gamma_stabilizer(block_dfs_constraints(), gamma) - p_dfs.matrix)
        i = operator_norm(gamma_stabilizer(block_ifs_constraints(), gamma) - p_ifs.matrix)
        bound = expected * (1 + 1e-9)
        metrics.append(Metric.bound(f"dfs_distance_gamma_{gamma:g}", "stabilizer-limit", d, bound))
        metrics.append(Metric.bound(f"ifs_distance_gamma_{gamma:g}", "stabilizer-limit", i, bound))
        curve.append({"gamma": gamma, "dfs": d, "ifs": i, "expected": expected})
    ordered = [c["dfs"] for c in sorted(curve, key=lambda c: c["gamma"])]
    monotone = all(b <= a for a, b in zip(ordered, ordered[1:]))
    metrics.append(Metric.check("dfs_distance_monotone", "stabilizer-limit", float(monotone), monotone))
    return Outcome(metrics=metrics, details={"curve": curve})


@router.experiment("topology-regression", help="Exhaustive search over J'-edge assignments of the rectangle")
def topology_regression(cfg: ExperimentConfig) -> Outcome:
    matches = topology_search(cfg.J, cfg.J_prime)
    unique = matches == [STANDARD_J_PRIME_EDGES]
    return Outcome(
        metrics=[
            Metric.close("matching_assignments", "topology-uniqueness", len(matches), 1, 0),
            Metric.check("standard_assignment", "topology-uniqueness", float(unique), unique),
        ],
        details={"matches": [list(map(list, m)) for m in matches]},
    )
