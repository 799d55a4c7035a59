from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dfsblock.errors import ModelError

BLOCK_QUBITS = 4

# logical frame of every block: |0_L>, |1_L>, and the auxiliary |2_L>
FRAME_STATES = ("1001", "0101", "0011")


@dataclass(frozen=True)
class CouplingEdge:
    """XXZ coupling between two qubits of one block (1-based labels)."""

    endpoints: tuple[int, int]
    zz_strength: float
    tunable: bool = False
    xy_strength: float = 0.0

    def __post_init__(self):
        i, j = self.endpoints
        if i == j:
            raise ModelError(f"Edge endpoints must differ, got {self.endpoints}")
        if not (1 <= i <= BLOCK_QUBITS and 1 <= j <= BLOCK_QUBITS):
            raise ModelError(f"Edge {self.endpoints} outside a {BLOCK_QUBITS}-qubit block")
        if not self.tunable and self.xy_strength != 0:
            raise ModelError(f"Edge {self.endpoints} is not tunable")
        object.__setattr__(self, "endpoints", (min(i, j), max(i, j)))


@dataclass(frozen=True)
class BlockSpec:
    edges: tuple[CouplingEdge, ...]
    J: float
    J_prime: float
    qubit_count: int = BLOCK_QUBITS

    def edge(self, i: int, j: int) -> CouplingEdge:
        key = (min(i, j), max(i, j))
        for e in self.edges:
            if e.endpoints == key:
                return e
        raise ModelError(f"Block has no edge {key}")

    @property
    def tunable_edges(self) -> tuple[tuple[int, int], ...]:
        return tuple(e.endpoints for e in self.edges if e.tunable)


@dataclass(frozen=True)
class ChainSpec:
    """Open 1-D chain; block L couples to L+1 through J (s1+s2)_L (s3+s4)_{L+1}."""

    blocks: tuple[BlockSpec, ...]
    interblock_strength: float

    def __post_init__(self):
        if not self.blocks:
            raise ModelError("A chain needs at least one block")

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    @property
    def num_qubits(self) -> int:
        return sum(b.qubit_count for b in self.blocks)

    @property
    def dim(self) -> int:
        return 2 ** self.num_qubits

    def site(self, block: int, label: int) -> int:
        """Global 0-based qubit index of 1-based ``label`` in ``block``."""
        if not 0 <= block < self.num_blocks:
            raise ModelError(f"Block {block} out of range for {self.num_blocks} blocks")
        return BLOCK_QUBITS * block + label - 1


@dataclass(frozen=True)
class LogicalFrame:
    block: int
    states: tuple[str, str, str] = FRAME_STATES

    def bits(self, label: int) -> str:
        return self.states[label]


def basis_index(bits: str) -> int:
    """Index of |q0 q1 ... q_{n-1}>, qubit 0 most significant."""
    if not bits or set(bits) - {"0", "1"}:
        raise ModelError(f"Invalid bitstring '{bits}'")
    return int(bits, 2)


def basis_state(bits: str) -> np.ndarray:
    v = np.zeros(2 ** len(bits), dtype=np.complex128)
    v[basis_index(bits)] = 1.0
    return v
