"""Local invariants of two-qubit unitaries (Makhlin G1, G2)."""
from math import sqrt

import numpy as np
import scipy.linalg

from dfsblock.errors import ModelError

# Bell "magic" basis
MAGIC = 1.0 / sqrt(2) * np.array([
    [1, 0, 0, 1j],
    [0, 1j, 1, 0],
    [0, 1j, -1, 0],
    [1, 0, 0, -1j]], dtype=complex)


def unitarize(M: np.ndarray) -> np.ndarray:
    """Closest unitary to M (unitary factor of the polar decomposition)."""
    u, _ = scipy.linalg.polar(np.asarray(M, dtype=complex))
    return u


def makhlin_invariants(U: np.ndarray) -> tuple[complex, float]:
    """(G1, G2) of a 4x4 unitary; equal for locally equivalent gates."""
    U = np.asarray(U, dtype=complex)
    if U.shape != (4, 4):
        raise ModelError(f"Local invariants need a two-qubit (4x4) unitary, got {U.shape}")
    Um = MAGIC.conj().T @ U @ MAGIC
    det_um = np.linalg.det(Um)
    M = Um.T @ Um
    m_tr2 = M.trace() ** 2
    G1 = m_tr2 / (16 * det_um)
    G2 = (m_tr2 - np.trace(M @ M)) / (4 * det_um)
    return complex(G1), float(G2.real)


def zz_invariants(d: float) -> tuple[complex, float]:
    """Invariants of exp(i d Z⊗Z): G1 = cos^2(2d), G2 = 2cos^2(2d) + 1."""
    c2 = np.cos(2 * d) ** 2
    return complex(c2), float(2 * c2 + 1)


def zz_coefficient(U: np.ndarray) -> float:
    """ZZ coefficient d in [0, pi/4] of a gate locally equivalent to exp(i d Z⊗Z)."""
    G1, _ = makhlin_invariants(U)
    return 0.5 * float(np.arccos(np.sqrt(np.clip(G1.real, 0.0, 1.0))))


def locally_equivalent(U: np.ndarray, V: np.ndarray, tol: float = 1e-9) -> bool:
    g1u, g2u = makhlin_invariants(U)
    g1v, g2v = makhlin_invariants(V)
    return abs(g1u - g1v) < tol and abs(g2u - g2v) < tol


def gate_fidelity(U: np.ndarray, V: np.ndarray) -> float:
    """|Tr(U^dagger V)|^2 / dim^2, insensitive to global phase."""
    U, V = np.asarray(U), np.asarray(V)
    if U.shape != V.shape:
        raise ModelError(f"Shape mismatch: {U.shape} vs {V.shape}")
    return float(abs(np.trace(U.conj().T @ V)) ** 2 / U.shape[0] ** 2)
