"""Exact unitary evolution of chains under pulse schedules.

The propagator never forms the full 2^n x 2^n Hamiltonian. Every drive term
x_i x_j + y_i y_j only mixes basis states inside small sectors, so the
space is split into the connected components of the union pattern of all
drives used by a schedule. Components of equal size are stacked and
evolved together with batched eigendecompositions.
"""
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from dfsblock import config
from dfsblock.errors import (
    CapacityError,
    GapClosureError,
    GridMismatchError,
    IntegrationError,
    ModelError,
)
from dfsblock.logger import get_logger
from dfsblock.models.device import ChainSpec
from dfsblock.models.dynamics import DiagonalPerturbation, EvolutionResult
from dfsblock.models.operators import MatrixOperator
from dfsblock.models.schedule import EdgeRef, PulseSchedule, PulseSegment, RampSpec, edge_key
from dfsblock.services.device import chain_dfs_mask, drive_operator, idle_diagonal, resting_couplings

logger = get_logger("Dynamics")

MIN_RAMP_STEPS = 100
UNITARITY_TOL = 1e-8
NORM_TOL = 1e-8
CONVERGENCE_FLOOR = 1e-12
# error at steps/2 over error at steps; midpoint order two gives about 4
MIN_REFINEMENT_RATIO = 3.0
# largest phase advance of a tracked amplitude between two samples
MAX_SLICE_PHASE = math.pi / 4
CHUNK_ELEMENTS = 2 ** 20


def wrap_phase(x: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(x, 2 * math.pi)
    return math.pi if w <= -math.pi else w


@dataclass
class _Sector:
    idx: np.ndarray  # (m, k) basis indices of m components of size k
    idle: np.ndarray  # (m, k)
    drives: np.ndarray  # (E, m, k, k)
    noise: Optional[np.ndarray]  # (P, m, k)
    unitary: np.ndarray = None  # (m, k, k)

    def reset(self) -> None:
        m, k = self.idx.shape
        self.unitary = np.broadcast_to(np.eye(k, dtype=np.complex128), (m, k, k)).copy()

    def hamiltonians(self, K: np.ndarray, a: Optional[np.ndarray]) -> np.ndarray:
        """H for S time points: K is (S, E), a is (S, P) or None."""
        m, k = self.idx.shape
        H = np.einsum("se,emij->smij", K.astype(np.complex128), self.drives)
        diag = np.broadcast_to(self.idle, (K.shape[0], m, k)).astype(np.complex128)
        if self.noise is not None and a is not None:
            diag = diag + np.einsum("sp,pmk->smk", a, self.noise)
        r = np.arange(k)
        H[..., r, r] += diag
        return H


def _propagators(H: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    w, v = np.linalg.eigh(H)
    expo = (v * np.exp(-1j * w * dt)[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))
    return expo, w


class _SectorEngine:
    def __init__(self, chain: ChainSpec, edges: Sequence[EdgeRef],
                 perturbation: Optional[DiagonalPerturbation], track: Sequence[int]):
        self.chain = chain
        self.edges = sorted(edges)
        self.keys = [edge_key(b, *e) for b, e in self.edges]
        resting = resting_couplings(chain)
        self.resting = np.array([resting.get(ref, 0.0) for ref in self.edges])
        self.perturbation = perturbation
        dim = chain.dim

        diag = idle_diagonal(chain)
        drives = [drive_operator(chain, b, e).matrix for b, e in self.edges]
        pattern = sp.identity(dim, format="csr", dtype=np.complex128)
        for V in drives:
            pattern = pattern + abs(V)
        count, labels = connected_components(pattern, directed=False)
        order = np.argsort(labels, kind="stable")
        sizes = np.bincount(labels, minlength=count)
        starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))

        where = np.zeros((dim, 3), dtype=int)
        self.sectors: list[_Sector] = []
        for g, k in enumerate(np.unique(sizes)):
            comps = np.nonzero(sizes == k)[0]
            idx = order[starts[comps][:, None] + np.arange(k)[None, :]]
            m = idx.shape[0]
            rows = np.broadcast_to(idx[:, :, None], (m, k, k)).ravel()
            cols = np.broadcast_to(idx[:, None, :], (m, k, k)).ravel()
            if drives:
                stacked = np.stack([np.asarray(V[rows, cols]).reshape(m, k, k) for V in drives])
            else:
                stacked = np.zeros((0, m, k, k), dtype=np.complex128)
            noise = perturbation.patterns[:, idx] if perturbation is not None else None
            self.sectors.append(_Sector(idx, diag[idx], stacked.astype(np.complex128), noise))
            where[idx, 0] = g
            where[idx, 1] = np.arange(m)[:, None]
            where[idx, 2] = np.arange(k)[None, :]

        self.track = list(track)
        tracked = where[self.track] if self.track else np.zeros((0, 3), dtype=int)
        self._tracked = []
        for g in range(len(self.sectors)):
            pos = np.nonzero(tracked[:, 0] == g)[0]
            self._tracked.append((tracked[pos, 1], tracked[pos, 2], pos))
        self.reset()
        logger.debug(f"[SECTORS] {count} components in {len(self.sectors)} size classes "
                     f"{[s.idx.shape for s in self.sectors]}")

    def reset(self) -> None:
        for s in self.sectors:
            s.reset()
        n = len(self.track)
        self.total = np.zeros(n)
        self.dynamical = np.zeros(n)
        self._raw = np.zeros(n)
        self.steps = 0

    # ---------- coupling / field values ----------

    def couplings(self, segment: PulseSegment, s: np.ndarray) -> np.ndarray:
        out = np.tile(self.resting, (len(s), 1))
        for e, key in enumerate(self.keys):
            value = segment.couplings.get(key)
            if value is None:
                continue
            out[:, e] = value.value(s, segment.duration) if isinstance(value, RampSpec) else value
        return out

    def fields(self, t: float, count: int) -> Optional[np.ndarray]:
        if self.perturbation is None:
            return None
        a = np.asarray(self.perturbation.amplitudes(t), dtype=float)
        return np.broadcast_to(a, (count, a.shape[0]))

    # ---------- propagation ----------

    def _advance(self, g: int, expo: np.ndarray, H: np.ndarray, dt: float, repeats: int = 1) -> None:
        sector = self.sectors[g]
        js, rs, pos = self._tracked[g]
        for _ in range(repeats):
            if pos.size:
                psi = sector.unitary[js, :, rs]
                energy = np.einsum("ni,nij,nj->n", psi.conj(), H[js], psi).real
                self.dynamical[pos] -= energy * dt
            sector.unitary = expo @ sector.unitary
            if pos.size:
                amp = sector.unitary[js, rs, rs]
                raw = np.angle(amp)
                delta = np.remainder(raw - self._raw[pos] + np.pi, 2 * np.pi) - np.pi
                ok = np.abs(amp) > 1e-12
                self.total[pos] += np.where(ok, delta, 0.0)
                self._raw[pos] = np.where(ok, raw, self._raw[pos])

    def constant_piece(self, segment: PulseSegment, lo: float, hi: float, t_mid: float) -> int:
        K = self.couplings(segment, np.array([lo]))
        a = self.fields(t_mid, 1)
        tau = hi - lo
        slices = 1
        for g, sector in enumerate(self.sectors):
            H = sector.hamiltonians(K, a)[0]
            s = 1
            if self._tracked[g][2].size:
                w = np.linalg.eigvalsh(H)
                s = max(1, math.ceil(tau * float(np.max(np.abs(w))) / MAX_SLICE_PHASE))
            expo, _ = _propagators(H, tau / s)
            self._advance(g, expo, H, tau / s, repeats=s)
            slices = max(slices, s)
        self.steps += slices
        return slices

    def midpoint_piece(self, segment: PulseSegment, lo: float, hi: float, t_mid: float, n: int) -> None:
        h = (hi - lo) / n
        s_mid = lo + (np.arange(n) + 0.5) * h
        K = self.couplings(segment, s_mid)
        a = self.fields(t_mid, n)
        for g, sector in enumerate(self.sectors):
            m, k = sector.idx.shape
            chunk = max(1, CHUNK_ELEMENTS // (m * k * k))
            for c0 in range(0, n, chunk):
                c1 = min(n, c0 + chunk)
                H = sector.hamiltonians(K[c0:c1], None if a is None else a[c0:c1])
                expo, _ = _propagators(H, h)
                for i in range(c1 - c0):
                    self._advance(g, expo[i], H[i], h)
        self.steps += n

    # ---------- results ----------

    def unitarity_defect(self) -> float:
        defect = 0.0
        for s in self.sectors:
            k = s.idx.shape[1]
            gram = np.conj(np.swapaxes(s.unitary, -1, -2)) @ s.unitary
            defect = max(defect, float(np.max(np.abs(gram - np.eye(k)))))
        return defect

    def distance(self, other: "_SectorEngine") -> float:
        return max(float(np.max(np.abs(a.unitary - b.unitary))) for a, b in zip(self.sectors, other.sectors))

    def snapshot(self) -> list[np.ndarray]:
        return [s.unitary.copy() for s in self.sectors]

    def final(self, initial: Optional[np.ndarray]) -> np.ndarray:
        dim = self.chain.dim
        if initial is None:
            U = np.zeros((dim, dim), dtype=np.complex128)
            for s in self.sectors:
                U[s.idx[:, :, None], s.idx[:, None, :]] = s.unitary
            return U
        out = np.zeros(initial.shape, dtype=np.complex128)
        for s in self.sectors:
            out[s.idx] = np.einsum("mij,mj...->mi...", s.unitary, initial[s.idx])
        return out

    def leakage(self, final: np.ndarray, initial: Optional[np.ndarray], reference: np.ndarray) -> float:
        if initial is not None:
            # worst column of a stacked batch
            return float(np.max(np.sum(np.abs(final[~reference]) ** 2, axis=0)))
        leak = 0.0
        for s in self.sectors:
            inside = reference[s.idx]
            if not inside.any():
                continue
            outside = np.einsum("mi,mij->mj", (~inside).astype(float), np.abs(s.unitary) ** 2)
            leak = max(leak, float(np.max(outside[inside])))
        return leak


# ---------- helpers ----------

def _pieces(schedule: PulseSchedule, breakpoints: Sequence[float]) -> Iterator[tuple[PulseSegment, float, float, float]]:
    """(segment, local start, local end, global midpoint) split at perturbation breakpoints."""
    t = 0.0
    for segment in schedule.segments:
        cuts = [b - t for b in breakpoints if t < b < t + segment.duration]
        bounds = [0.0, *cuts, segment.duration]
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            if hi > lo:
                yield segment, lo, hi, t + 0.5 * (lo + hi)
        t += segment.duration


def _validate(chain: ChainSpec, schedule: PulseSchedule, initial: Optional[np.ndarray],
              track: Sequence[int], perturbation: Optional[DiagonalPerturbation]) -> list[EdgeRef]:
    edges = sorted(schedule.edges() | resting_couplings(chain).keys())
    for block, edge in edges:
        if not 0 <= block < chain.num_blocks:
            raise ModelError(f"Schedule drives block {block} outside a {chain.num_blocks}-block chain")
        drive_operator(chain, block, edge)
    if initial is None:
        if chain.num_qubits > config.DENSE_QUBITS:
            raise CapacityError(f"Full unitary of {chain.num_qubits} qubits exceeds the dense limit "
                                f"of {config.DENSE_QUBITS}; evolve a state instead")
    else:
        if initial.ndim not in (1, 2) or initial.shape[0] != chain.dim or initial.size == 0:
            raise ModelError(f"Initial state has shape {initial.shape}, expected ({chain.dim},) or ({chain.dim}, k)")
        if np.max(np.abs(np.linalg.norm(initial, axis=0) - 1.0)) > NORM_TOL:
            raise ModelError("Initial state is not normalized")
    for b in track:
        if not 0 <= b < chain.dim:
            raise ModelError(f"Tracked basis index {b} out of range")
    if perturbation is not None and perturbation.dim != chain.dim:
        raise ModelError(f"Perturbation dimension {perturbation.dim} does not match chain dimension {chain.dim}")
    return edges


def _result(engine: _SectorEngine, schedule: PulseSchedule, initial: Optional[np.ndarray],
            reference: Optional[np.ndarray], max_step_error: float) -> EvolutionResult:
    defect = engine.unitarity_defect()
    if defect >= UNITARITY_TOL:
        raise IntegrationError(f"Unitarity defect {defect:.3e} exceeds {UNITARITY_TOL:.0e}")
    final = engine.final(initial)
    reference = chain_dfs_mask(engine.chain) if reference is None else np.asarray(reference, dtype=bool)
    result = EvolutionResult(
        final=final,
        total_phases={b: float(p) for b, p in zip(engine.track, engine.total)},
        dynamical_phases={b: float(p) for b, p in zip(engine.track, engine.dynamical)},
        leakage=engine.leakage(final, initial, reference),
        step_count=engine.steps,
        max_step_error=max_step_error,
        duration=schedule.duration,
        cyclic=schedule.is_cyclic(),
        unitarity_defect=defect,
    )
    logger.debug(f"[EVOLVE] T={result.duration:.4g} steps={result.step_count} "
                 f"leakage={result.leakage:.2e} step_error={max_step_error:.2e}")
    return result


def _as_state(initial) -> Optional[np.ndarray]:
    return None if initial is None else np.asarray(initial, dtype=np.complex128)


# ---------- public API ----------

def evolve_piecewise(chain: ChainSpec, schedule: PulseSchedule, initial: Optional[np.ndarray] = None,
                     track: Sequence[int] = (), perturbation: Optional[DiagonalPerturbation] = None,
                     reference: Optional[np.ndarray] = None) -> EvolutionResult:
    """Exact propagation through constant segments, first segment first.

    With ``initial=None`` the full unitary is returned. A (dim, k) ``initial``
    evolves k states at once. ``reference`` is the boolean mask leakage is
    measured against (default: every block in S^z = 0).
    """
    if not schedule.is_piecewise:
        raise ModelError("evolve_piecewise received a ramped segment; use evolve_ramped")
    initial = _as_state(initial)
    edges = _validate(chain, schedule, initial, track, perturbation)
    engine = _SectorEngine(chain, edges, perturbation, track)
    breakpoints = perturbation.breakpoints if perturbation is not None else ()
    for segment, lo, hi, t_mid in _pieces(schedule, breakpoints):
        engine.constant_piece(segment, lo, hi, t_mid)
    return _result(engine, schedule, initial, reference, 0.0)


def max_coupling(schedule: PulseSchedule) -> float:
    total = 0.0
    for segment in schedule.segments:
        seg = sum(abs(v.amplitude) if isinstance(v, RampSpec) else abs(v) for v in segment.couplings.values())
        total = max(total, seg)
    return total


def default_step_count(chain: ChainSpec, schedule: PulseSchedule) -> int:
    """ceil(STEP_DENSITY * T * ||H||max), never below the ramp minimum."""
    h_max = float(np.max(np.abs(idle_diagonal(chain)))) + 2.0 * max_coupling(schedule)
    return max(MIN_RAMP_STEPS, math.ceil(config.STEP_DENSITY * schedule.duration * h_max))


def _run_midpoint(engine: _SectorEngine, schedule: PulseSchedule, steps: int) -> None:
    engine.reset()
    breakpoints = engine.perturbation.breakpoints if engine.perturbation is not None else ()
    T = schedule.duration
    for segment, lo, hi, t_mid in _pieces(schedule, breakpoints):
        n = max(1, round(steps * (hi - lo) / T))
        engine.midpoint_piece(segment, lo, hi, t_mid, n)


def evolve_ramped(chain: ChainSpec, schedule: PulseSchedule, steps: Optional[int] = None,
                  initial: Optional[np.ndarray] = None, track: Sequence[int] = (),
                  perturbation: Optional[DiagonalPerturbation] = None,
                  reference: Optional[np.ndarray] = None,
                  estimate_error: bool = True, check_convergence: bool = True) -> EvolutionResult:
    """Midpoint-exponential propagation, steps shared among segments by duration.

    The step error is the largest entry difference against a run at half the
    steps. With ``check_convergence`` a quarter-step run must show the error
    shrinking by at least MIN_REFINEMENT_RATIO, otherwise IntegrationError
    is raised. Errors at or below CONVERGENCE_FLOOR count as converged.
    """
    if steps is None:
        steps = default_step_count(chain, schedule)
    if steps < MIN_RAMP_STEPS:
        raise ModelError(f"evolve_ramped needs at least {MIN_RAMP_STEPS} steps, got {steps}")
    initial = _as_state(initial)
    edges = _validate(chain, schedule, initial, track, perturbation)
    if not schedule.segments:
        return evolve_piecewise(chain, schedule, initial, track, perturbation, reference)

    engine = _SectorEngine(chain, edges, perturbation, track)
    step_error = 0.0
    if estimate_error or check_convergence:
        _run_midpoint(engine, schedule, steps // 2)
        half = engine.snapshot()
        if check_convergence:
            _run_midpoint(engine, schedule, steps // 4)
            coarse = max(float(np.max(np.abs(a.unitary - b))) for a, b in zip(engine.sectors, half))
        _run_midpoint(engine, schedule, steps)
        step_error = max(float(np.max(np.abs(a.unitary - b))) for a, b in zip(engine.sectors, half))
        if (check_convergence and coarse > CONVERGENCE_FLOOR and step_error > CONVERGENCE_FLOOR
                and step_error * MIN_REFINEMENT_RATIO > coarse):
            raise IntegrationError(f"Step refinement does not converge: error {step_error:.3e} "
                                   f"at {steps} steps vs {coarse:.3e} at {steps // 2}, "
                                   f"ratio below {MIN_REFINEMENT_RATIO:g}")
    else:
        _run_midpoint(engine, schedule, steps)
    return _result(engine, schedule, initial, reference, step_error)


def evolve(chain: ChainSpec, schedule: PulseSchedule, **kwargs) -> EvolutionResult:
    """Dispatch to the exact evolver when every segment is constant."""
    if schedule.is_piecewise:
        kwargs.pop("steps", None)
        kwargs.pop("estimate_error", None)
        kwargs.pop("check_convergence", None)
        return evolve_piecewise(chain, schedule, **kwargs)
    return evolve_ramped(chain, schedule, **kwargs)


def dynamical_phase(states: Sequence[np.ndarray], hamiltonians: Sequence[Union[MatrixOperator, np.ndarray]],
                    durations: Sequence[float]) -> float:
    """-sum_k <psi_k|H_k|psi_k> dt_k, the rule evolve_ramped applies per step."""
    if not (len(states) == len(hamiltonians) == len(durations)):
        raise GridMismatchError(f"Grid lengths differ: {len(states)} states, "
                                f"{len(hamiltonians)} Hamiltonians, {len(durations)} durations")
    phase = 0.0
    for psi, H, dt in zip(states, hamiltonians, durations):
        m = H.matrix if isinstance(H, MatrixOperator) else H
        phase -= float(np.vdot(psi, m @ psi).real) * dt
    return phase


def berry_phase_residual(result: EvolutionResult, index: int) -> float:
    """Total minus dynamical phase of a tracked basis state, wrapped to (-pi, pi]."""
    if not result.cyclic:
        raise ModelError("Berry phase residual needs a cyclic schedule (H(t_f) = H(0))")
    if index not in result.total_phases:
        raise ModelError(f"Basis state {index} was not tracked")
    return wrap_phase(result.total_phases[index] - result.dynamical_phases[index])


RampLike = Union[RampSpec, Callable[[np.ndarray], np.ndarray]]


def ramp_derivative_max(ramp: RampLike, duration: float, samples: int = 4001) -> float:
    """max |d nu / dt| over [0, duration]; finite differences for plain callables."""
    if isinstance(ramp, RampSpec):
        return ramp.max_derivative(duration)
    t = np.linspace(0.0, duration, samples)
    return float(np.max(np.abs(np.gradient(np.asarray(ramp(t), dtype=float), t))))


def adiabaticity_margin(J: float, J_prime: float, ramp: RampLike, duration: float) -> float:
    """min(|J-J'|^2, |2J-J'|^2) / ((1/8) max|nu'|); inf for a flat ramp."""
    gaps = (abs(J - J_prime) ** 2, abs(2 * J - J_prime) ** 2)
    if min(gaps) == 0:
        raise GapClosureError(f"Spectral gap closes at J={J}, J'={J_prime}")
    rate = ramp_derivative_max(ramp, duration)
    if rate == 0:
        return math.inf
    return min(gaps) / (rate / 8.0)


def restrict_unitary(U: np.ndarray, indices: Sequence[int]) -> np.ndarray:
    """Sub-block <i|U|j> for i, j in ``indices``, in the given order."""
    indices = list(indices)
    return np.asarray(U)[np.ix_(indices, indices)]
