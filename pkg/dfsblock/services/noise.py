import asyncio
import math
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from dfsblock import config
from dfsblock.errors import ModelError
from dfsblock.logger import get_logger
from dfsblock.models.device import BLOCK_QUBITS, ChainSpec
from dfsblock.models.dynamics import DiagonalPerturbation
from dfsblock.models.noise import DephasingModel, FidelityReport
from dfsblock.models.operators import MatrixOperator
from dfsblock.models.schedule import PulseSchedule, PulseSegment
from dfsblock.services.device import frame_state
from dfsblock.services.dynamics import evolve

logger = get_logger("Noise")

NORM_TOL = 1e-8

LOGICAL_INPUTS = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([1, 1], dtype=complex) / math.sqrt(2),
    "+i": np.array([1, 1j], dtype=complex) / math.sqrt(2),
}


def trajectory_rng(model: DephasingModel, index: int) -> np.random.Generator:
    """Independent stream per trajectory, fixed by (seed, index) alone."""
    return np.random.default_rng(np.random.SeedSequence(model.seed, spawn_key=(index,)))


def _z_table(chain: ChainSpec) -> np.ndarray:
    n = chain.num_qubits
    idx = np.arange(chain.dim)
    return 1 - 2 * ((idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1)


def field_patterns(chain: ChainSpec, collective: bool = True) -> np.ndarray:
    """Diagonals of S^z_L per block, or of sigma^z_i per qubit when not collective."""
    z = _z_table(chain).T.astype(float)
    if not collective:
        return z
    return z.reshape(chain.num_blocks, BLOCK_QUBITS, chain.dim).sum(axis=1)


def sample_trajectory_fields(model: DephasingModel, chain: ChainSpec, duration: float,
                             index: int) -> tuple[tuple[float, ...], np.ndarray]:
    """(breakpoints, fields) with fields[k] the sources held on the k-th interval."""
    rng = trajectory_rng(model, index)
    sources = chain.num_blocks if model.collective else chain.num_qubits
    if model.kind == "static":
        return (), model.sigma * rng.standard_normal((1, sources))
    intervals = max(1, math.ceil(duration / model.tau_c))
    breakpoints = tuple(k * model.tau_c for k in range(1, intervals))
    return breakpoints, model.sigma * rng.standard_normal((intervals, sources))


def noise_perturbation(model: DephasingModel, chain: ChainSpec, duration: float, index: int) -> DiagonalPerturbation:
    breakpoints, fields = sample_trajectory_fields(model, chain, duration, index)
    tau_c = model.tau_c

    def amplitudes(t: float) -> np.ndarray:
        if not breakpoints:
            return fields[0]
        return fields[min(int(t // tau_c), len(fields) - 1)]

    return DiagonalPerturbation(field_patterns(chain, model.collective), amplitudes, breakpoints)


def sample_noise_hamiltonian(model: DephasingModel, chain: ChainSpec, t: float, index: int = 0,
                             duration: Optional[float] = None) -> MatrixOperator:
    """sum_L beta_L(t) S^z_L for trajectory ``index`` (diagonal, sparse)."""
    perturbation = noise_perturbation(model, chain, t if duration is None else duration, index)
    return MatrixOperator(sp.diags(perturbation.diagonal(t).astype(np.complex128), format="csr"))


def sector_mask(chain: ChainSpec, state: np.ndarray) -> np.ndarray:
    """Basis states sharing a per-block S^z assignment with the support of ``state``."""
    per_block = _z_table(chain).reshape(chain.dim, chain.num_blocks, BLOCK_QUBITS).sum(axis=2)
    keys = np.ravel_multi_index(tuple((per_block + BLOCK_QUBITS).T), (2 * BLOCK_QUBITS + 1,) * chain.num_blocks)
    support = np.abs(state) ** 2 > 1e-15
    return np.isin(keys, np.unique(keys[support]))


def idle_schedule(duration: float) -> PulseSchedule:
    return PulseSchedule(segments=[PulseSegment(duration=duration, label="idle")], metadata={"gate": "idle"})


def ghz_fidelity_closed_form(sigma: float, t: float) -> float:
    """Gaussian average of cos^2(4 beta t) for the bare |0000> + |1111> block state."""
    return 0.5 * (1.0 + math.exp(-32.0 * sigma ** 2 * t ** 2))


def field_correlation(model: DephasingModel, chain: ChainSpec, trajectories: int,
                      sources: tuple[int, int] = (0, 1)) -> float:
    """Pearson r between two field sources over trajectories (first interval)."""
    samples = np.array([sample_trajectory_fields(model, chain, 1.0, i)[1][0] for i in range(trajectories)])
    return float(np.corrcoef(samples[:, sources[0]], samples[:, sources[1]])[0, 1])


def _evolve_kwargs(schedule: PulseSchedule, steps: Optional[int]) -> dict:
    if schedule.is_piecewise:
        return {}
    return {"steps": steps, "estimate_error": False, "check_convergence": False}


def _report(experiment: str, model: DephasingModel, duration: float,
            outcomes: Sequence[tuple[float, float]]) -> FidelityReport:
    fidelities = np.array([f for f, _ in outcomes])
    report = FidelityReport(
        experiment=experiment, seed=model.seed, sigma=model.sigma, duration=duration,
        trajectories=len(outcomes),
        mean_fidelity=float(fidelities.mean()),
        std_fidelity=float(fidelities.std(ddof=1)) if len(outcomes) > 1 else 0.0,
        max_leakage=float(max(leak for _, leak in outcomes)),
        fidelities=[float(f) for f in fidelities],
    )
    logger.info(f"[DONE] {experiment}: {report.trajectories} trajectories, "
                f"mean fidelity {report.mean_fidelity:.12f} +- {report.standard_error:.2e}")
    return report


async def _fan_out(worker, trajectories: int) -> list:
    semaphore = asyncio.Semaphore(config.TRAJECTORY_WORKERS)

    async def run_one(index: int):
        async with semaphore:
            return await asyncio.to_thread(worker, index)

    return await asyncio.gather(*(run_one(i) for i in range(trajectories)))


async def run_immunity_experiment_async(chain: ChainSpec, model: DephasingModel, state: np.ndarray,
                                        duration: float, trajectories: Optional[int] = None,
                                        schedule: Optional[PulseSchedule] = None,
                                        steps: Optional[int] = None) -> FidelityReport:
    state = np.asarray(state, dtype=np.complex128)
    if state.shape != (chain.dim,) or abs(float(np.linalg.norm(state)) - 1.0) > NORM_TOL:
        raise ModelError("Immunity experiment needs a normalized state of the chain")
    trajectories = config.DEFAULT_TRAJECTORIES if trajectories is None else trajectories
    if trajectories < 1:
        raise ModelError("At least one trajectory is required")
    schedule = idle_schedule(duration) if schedule is None else schedule
    kwargs = _evolve_kwargs(schedule, steps)
    reference = sector_mask(chain, state)
    logger.info(f"[RUN] immunity: sigma={model.sigma} T={schedule.duration} trajectories={trajectories}")

    ideal = evolve(chain, schedule, initial=state, reference=reference, **kwargs).final

    def worker(index: int) -> tuple[float, float]:
        perturbation = noise_perturbation(model, chain, schedule.duration, index)
        noisy = evolve(chain, schedule, initial=state, perturbation=perturbation, reference=reference, **kwargs)
        return min(1.0, abs(np.vdot(ideal, noisy.final)) ** 2), noisy.leakage

    outcomes = await _fan_out(worker, trajectories)
    return _report("noise-immunity", model, schedule.duration, outcomes)


def run_immunity_experiment(chain: ChainSpec, model: DephasingModel, state: np.ndarray, duration: float,
                            trajectories: Optional[int] = None, schedule: Optional[PulseSchedule] = None,
                            steps: Optional[int] = None) -> FidelityReport:
    return asyncio.run(run_immunity_experiment_async(chain, model, state, duration, trajectories, schedule, steps))


def logical_input_states(chain: ChainSpec, blocks: Sequence[int],
                         inputs: Sequence[str] = tuple(LOGICAL_INPUTS)) -> dict[str, np.ndarray]:
    """Products of {0, 1, +, +i} on ``blocks``; the other blocks sit in |0_L>."""
    basis = {}
    for a in (0, 1):
        for b in (0, 1) if len(blocks) == 2 else (None,):
            labels = [0] * chain.num_blocks
            labels[blocks[0]] = a
            if b is not None:
                labels[blocks[1]] = b
            basis[(a, b)] = frame_state(chain, labels)

    states = {}
    for first in inputs:
        for second in inputs if len(blocks) == 2 else (None,):
            amp1 = LOGICAL_INPUTS[first]
            amp2 = LOGICAL_INPUTS[second] if second is not None else np.array([1.0])
            psi = np.zeros(chain.dim, dtype=np.complex128)
            for (a, b), vec in basis.items():
                psi += amp1[a] * (amp2[b] if b is not None else 1.0) * vec
            states[first if second is None else f"{first},{second}"] = psi
    return states


async def gate_under_noise_async(chain: ChainSpec, model: DephasingModel, schedule: PulseSchedule,
                                 trajectories: Optional[int] = None, steps: Optional[int] = None,
                                 blocks: Optional[Sequence[int]] = None) -> FidelityReport:
    """Mean state fidelity over logical inputs against the noiseless gate, per trajectory."""
    trajectories = config.DEFAULT_TRAJECTORIES if trajectories is None else trajectories
    if trajectories < 1:
        raise ModelError("At least one trajectory is required")
    blocks = sorted(schedule.blocks()) if blocks is None else list(blocks)
    if not 1 <= len(blocks) <= 2:
        raise ModelError(f"Gate fidelity is defined for one or two target blocks, got {blocks}")
    kwargs = _evolve_kwargs(schedule, steps)
    inputs = np.stack(list(logical_input_states(chain, blocks).values()), axis=1)
    logger.info(f"[RUN] gate under noise: blocks={blocks} sigma={model.sigma} "
                f"collective={model.collective} trajectories={trajectories}")

    ideal = evolve(chain, schedule, initial=inputs, **kwargs).final

    def worker(index: int) -> tuple[float, float]:
        perturbation = noise_perturbation(model, chain, schedule.duration, index)
        noisy = evolve(chain, schedule, initial=inputs, perturbation=perturbation, **kwargs)
        overlaps = np.abs(np.einsum("ij,ij->j", ideal.conj(), noisy.final)) ** 2
        return min(1.0, float(overlaps.mean())), noisy.leakage

    outcomes = await _fan_out(worker, trajectories)
    return _report("gate-under-noise", model, schedule.duration, outcomes)


def gate_under_noise(chain: ChainSpec, model: DephasingModel, schedule: PulseSchedule,
                     trajectories: Optional[int] = None, steps: Optional[int] = None,
                     blocks: Optional[Sequence[int]] = None) -> FidelityReport:
    return asyncio.run(gate_under_noise_async(chain, model, schedule, trajectories, steps, blocks))
