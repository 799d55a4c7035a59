import functools
from itertools import combinations
from typing import Mapping, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from dfsblock.errors import LeakageError, ModelError
from dfsblock.logger import get_logger
from dfsblock.models.device import (
    BLOCK_QUBITS,
    FRAME_STATES,
    BlockSpec,
    ChainSpec,
    CouplingEdge,
    LogicalFrame,
    basis_index,
)
from dfsblock.models.operators import MatrixOperator, OperatorExpr
from dfsblock.models.subspace import GeneratorConstraint, Projector
from dfsblock.services.operators import collective_operator, pair, realize

logger = get_logger("Device")

STANDARD_J_PRIME_EDGES = ((1, 2), (3, 4))
STANDARD_TUNABLE_EDGES = ((1, 2), (2, 3))
ALL_BLOCK_EDGES = tuple(combinations(range(1, BLOCK_QUBITS + 1), 2))

# (block, (i, j)) -> K
ChainCouplings = Mapping[tuple[int, tuple[int, int]], float]
FrameLabel = Union[int, str]


def block_with_topology(J: float, J_prime: float, j_prime_edges,
                        tunable_edges=STANDARD_TUNABLE_EDGES) -> BlockSpec:
    """All six pairs of the rectangle coupled in zz; ``j_prime_edges`` at J', the rest at J."""
    if not (np.isfinite(J) and np.isfinite(J_prime)) or J == 0 or J_prime == 0:
        raise ModelError(f"J and J' must be finite and nonzero, got J={J}, J'={J_prime}")
    j_prime_edges = {tuple(sorted(e)) for e in j_prime_edges}
    tunable_edges = {tuple(sorted(e)) for e in tunable_edges}
    edges = tuple(
        CouplingEdge(e, J_prime if e in j_prime_edges else J, tunable=e in tunable_edges)
        for e in ALL_BLOCK_EDGES
    )
    return BlockSpec(edges=edges, J=J, J_prime=J_prime)


def standard_block(J: float, J_prime: float) -> BlockSpec:
    """Rectangle block: J on horizontal and diagonal pairs, J' on the vertical pairs (1,2), (3,4)."""
    return block_with_topology(J, J_prime, STANDARD_J_PRIME_EDGES)


def standard_chain(J: float, J_prime: float, blocks: int = 2,
                   interblock_strength: Optional[float] = None) -> ChainSpec:
    if blocks < 1:
        raise ModelError(f"Chain needs at least one block, got {blocks}")
    block = standard_block(J, J_prime)
    return ChainSpec(blocks=(block,) * blocks,
                     interblock_strength=J if interblock_strength is None else interblock_strength)


def _check_couplings(spec: BlockSpec, couplings: Mapping[tuple[int, int], float]) -> None:
    for edge in couplings:
        if tuple(sorted(edge)) not in spec.tunable_edges:
            raise ModelError(f"Edge {edge} is not tunable; tunable edges are {spec.tunable_edges}")


def block_expression(spec: BlockSpec, couplings: Optional[Mapping[tuple[int, int], float]] = None,
                     offset: int = 0) -> OperatorExpr:
    """sum_ij K_ij (x_i x_j + y_i y_j) + J_ij z_i z_j with qubit label i at site offset + i - 1.

    Edges missing from ``couplings`` sit at their resting ``xy_strength``.
    """
    couplings = dict(couplings or {})
    _check_couplings(spec, couplings)
    expr = OperatorExpr()
    for edge in spec.edges:
        i, j = (offset + k - 1 for k in edge.endpoints)
        expr = expr + pair("z", i, "z", j, edge.zz_strength)
        K = couplings.get(edge.endpoints, couplings.get(edge.endpoints[::-1], edge.xy_strength))
        if K:
            expr = expr + pair("x", i, "x", j, K) + pair("y", i, "y", j, K)
    return expr


def resting_couplings(chain: ChainSpec) -> dict[tuple[int, tuple[int, int]], float]:
    """Nonzero resting XY strengths, keyed like ChainCouplings."""
    return {(L, e.endpoints): e.xy_strength
            for L, spec in enumerate(chain.blocks) for e in spec.edges if e.xy_strength}


def block_hamiltonian(spec: BlockSpec, couplings: Optional[Mapping[tuple[int, int], float]] = None) -> MatrixOperator:
    return realize(block_expression(spec, couplings), spec.qubit_count)


def interblock_expression(chain: ChainSpec, L: int) -> OperatorExpr:
    if not 0 <= L < chain.num_blocks - 1:
        raise ModelError(f"No interblock coupling {L}->{L + 1} in a {chain.num_blocks}-block chain")
    left = collective_operator("z", (chain.site(L, 1), chain.site(L, 2)))
    right = collective_operator("z", (chain.site(L + 1, 3), chain.site(L + 1, 4)))
    return chain.interblock_strength * left.tensor(right)


def interblock_hamiltonian(chain: ChainSpec, L: int) -> MatrixOperator:
    return realize(interblock_expression(chain, L), chain.num_qubits)


def chain_expression(chain: ChainSpec, couplings: Optional[ChainCouplings] = None) -> OperatorExpr:
    couplings = dict(couplings or {})
    per_block: dict[int, dict[tuple[int, int], float]] = {}
    for (block, edge), value in couplings.items():
        if not 0 <= block < chain.num_blocks:
            raise ModelError(f"Coupling on block {block} outside the chain")
        per_block.setdefault(block, {})[tuple(sorted(edge))] = value

    expr = OperatorExpr()
    for L, spec in enumerate(chain.blocks):
        expr = expr + block_expression(spec, per_block.get(L), offset=chain.site(L, 1))
    for L in range(chain.num_blocks - 1):
        expr = expr + interblock_expression(chain, L)
    return expr


def chain_hamiltonian(chain: ChainSpec, couplings: Optional[ChainCouplings] = None,
                      storage: str = "auto") -> MatrixOperator:
    return realize(chain_expression(chain, couplings), chain.num_qubits, storage)


@functools.lru_cache(maxsize=64)
def drive_operator(chain: ChainSpec, block: int, edge: tuple[int, int]) -> MatrixOperator:
    """x_i x_j + y_i y_j on a tunable edge, embedded in the chain space (sparse)."""
    _check_couplings(chain.blocks[block], {edge: 1.0})
    i, j = chain.site(block, edge[0]), chain.site(block, edge[1])
    return realize(pair("x", i, "x", j) + pair("y", i, "y", j), chain.num_qubits, "sparse")


@functools.lru_cache(maxsize=16)
def idle_diagonal(chain: ChainSpec) -> np.ndarray:
    """Diagonal of the idle chain Hamiltonian (its zz terms)."""
    return chain_hamiltonian(chain, storage="sparse").diagonal().real.copy()


# ---------- COLLECTIVE CONSTRAINTS ----------

def block_sz(chain: ChainSpec, L: int) -> OperatorExpr:
    return collective_operator("z", [chain.site(L, k) for k in range(1, BLOCK_QUBITS + 1)])


def block_dfs_constraints(l: int = 0) -> list[GeneratorConstraint]:
    """S^z = l on an isolated 4-qubit block."""
    return [GeneratorConstraint(realize(collective_operator("z", range(BLOCK_QUBITS)), BLOCK_QUBITS), l)]


def block_ifs_constraints() -> list[GeneratorConstraint]:
    """Both interblock collective operators A = s1+s2 and s3+s4 of a block vanish."""
    return [
        GeneratorConstraint(realize(collective_operator("z", (0, 1)), BLOCK_QUBITS), 0.0),
        GeneratorConstraint(realize(collective_operator("z", (2, 3)), BLOCK_QUBITS), 0.0),
    ]


def chain_dfs_constraints(chain: ChainSpec, blocks: Optional[Sequence[int]] = None,
                          l: int = 0) -> list[GeneratorConstraint]:
    blocks = range(chain.num_blocks) if blocks is None else blocks
    return [GeneratorConstraint(realize(block_sz(chain, L), chain.num_qubits), l) for L in blocks]


def _bit_table(chain: ChainSpec) -> np.ndarray:
    n = chain.num_qubits
    idx = np.arange(chain.dim)
    return (idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1


def chain_dfs_mask(chain: ChainSpec, l: int = 0) -> np.ndarray:
    """Indicator of the product space of per-block S^z = l eigenspaces."""
    z = 1 - 2 * _bit_table(chain)
    per_block = z.reshape(chain.dim, chain.num_blocks, BLOCK_QUBITS).sum(axis=2)
    return np.all(per_block == l, axis=1)


def chain_dfs_projector(chain: ChainSpec, l: int = 0) -> Projector:
    mask = chain_dfs_mask(chain, l).astype(np.complex128)
    return Projector(MatrixOperator(sp.diags(mask, format="csr")))


# ---------- LOGICAL FRAMES ----------

def frame_bits(chain: ChainSpec, labels: Sequence[FrameLabel]) -> str:
    """Bitstring of a product state; int labels index the frame, strings are raw block bits."""
    if len(labels) != chain.num_blocks:
        raise ModelError(f"Need one label per block ({chain.num_blocks}), got {len(labels)}")
    out = []
    for label in labels:
        bits = FRAME_STATES[label] if isinstance(label, (int, np.integer)) else label
        if len(bits) != BLOCK_QUBITS:
            raise ModelError(f"Block state '{bits}' must have {BLOCK_QUBITS} bits")
        out.append(bits)
    return "".join(out)


def frame_state(chain: ChainSpec, labels: Sequence[FrameLabel]) -> np.ndarray:
    v = np.zeros(chain.dim, dtype=np.complex128)
    v[basis_index(frame_bits(chain, labels))] = 1.0
    return v


def frame_indices(chain: ChainSpec, frames: Sequence[LogicalFrame],
                  background: Optional[Mapping[int, FrameLabel]] = None,
                  labels: Sequence[int] = (0, 1, 2)) -> list[int]:
    """Basis indices of the framed product space, first frame most significant."""
    background = dict(background or {})
    framed = [f.block for f in frames]
    if len(set(framed)) != len(framed):
        raise ModelError(f"Repeated block in frames: {framed}")
    indices = []
    for combo in np.ndindex(*(len(labels),) * len(frames)):
        per_block: list[FrameLabel] = [background.get(L, 0) for L in range(chain.num_blocks)]
        for frame, k in zip(frames, combo):
            per_block[frame.block] = frame.bits(labels[k])
        indices.append(basis_index(frame_bits(chain, per_block)))
    return indices


def effective_hamiltonian(H: MatrixOperator, chain: ChainSpec, frames: Sequence[LogicalFrame],
                          background: Optional[Mapping[int, FrameLabel]] = None) -> np.ndarray:
    """3^k x 3^k restriction of H to the framed computational space.

    Blocks without a frame are held in ``background`` (default |0_L>).
    Identity-proportional parts are kept.
    """
    if H.dim != chain.dim:
        raise ModelError(f"Hamiltonian dimension {H.dim} does not match chain dimension {chain.dim}")
    indices = frame_indices(chain, frames, background)
    # ||[P, H]|| = ||(1 - P) H P|| for Hermitian H and coordinate P
    columns = H.matrix[:, indices]
    columns = columns.toarray() if sp.issparse(columns) else np.asarray(columns)
    outside = np.delete(columns, indices, axis=0)
    norm = float(np.linalg.norm(outside, 2)) if outside.size else 0.0
    if norm >= 1e-10:
        raise LeakageError("Hamiltonian couples the framed space to its complement", norm)
    m = H.matrix[indices][:, indices]
    return np.asarray(m.toarray() if hasattr(m, "toarray") else m)


def isolated_chain(spec: BlockSpec) -> ChainSpec:
    return ChainSpec(blocks=(spec,), interblock_strength=0.0)


def idle_frame_diagonal(spec: BlockSpec) -> np.ndarray:
    chain = isolated_chain(spec)
    return np.diag(effective_hamiltonian(block_hamiltonian(spec), chain, [LogicalFrame(0)])).real


def topology_search(J: float, J_prime: float, tol: float = 1e-12) -> list[tuple[tuple[int, int], ...]]:
    """Every choice of two J'-edges on the rectangle whose idle frame energies are diag(-2J', -2J', 2J'-4J)."""
    target = np.array([-2 * J_prime, -2 * J_prime, 2 * J_prime - 4 * J])
    matches = []
    for choice in combinations(ALL_BLOCK_EDGES, 2):
        energies = idle_frame_diagonal(block_with_topology(J, J_prime, choice))
        if np.max(np.abs(energies - target)) < tol:
            matches.append(choice)
    logger.info(f"[TOPOLOGY] {len(matches)} of 15 J'-edge assignments reproduce the idle frame energies")
    return matches
