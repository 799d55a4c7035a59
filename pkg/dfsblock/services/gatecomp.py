"""Compilation of logical gates into K12 / K23 pulse schedules."""
import math
from typing import Mapping, Optional, Sequence, Union

import numpy as np
import scipy.integrate
import scipy.linalg
from scipy.optimize import least_squares

from dfsblock import config
from dfsblock.errors import CompilationError, ContractViolation, GapClosureError, ModelError
from dfsblock.logger import get_logger
from dfsblock.models.device import ChainSpec, LogicalFrame, basis_index
from dfsblock.models.dynamics import EvolutionResult
from dfsblock.models.gates import AdiabaticPrediction, GateSpec, wrap_angle
from dfsblock.models.schedule import PulseSchedule, PulseSegment, RampSpec, edge_key
from dfsblock.services.device import (
    block_hamiltonian,
    effective_hamiltonian,
    frame_bits,
    frame_indices,
    isolated_chain,
    standard_block,
)
from dfsblock.services.dynamics import adiabaticity_margin, evolve
from dfsblock.services.invariants import gate_fidelity, zz_coefficient
from dfsblock.services.synthesis import synthesize_z_power

logger = get_logger("GateCompiler")

SWAP_TOL = 1e-6
SWAP_REFINE_TOL = 1e-9
IDENTITY_TOL = 1e-12

PauliX = np.array([[0, 1], [1, 0]], dtype=complex)

PhaseKey = Union[tuple[int, int], str]


def _x_edge(block: int) -> str:
    return edge_key(block, 1, 2)


def _z_edge(block: int) -> str:
    return edge_key(block, 2, 3)


# ---------- single-block rotations ----------

def compile_x_rotation(block: int, angle: float, mu: float, J_prime: Optional[float] = None) -> PulseSchedule:
    """exp(-i angle X) on {|0_L>, |1_L>} from one K12 = mu pulse.

    h^a restricted to the logical pair is -2J' + 2 mu X, so the pulse also
    carries the global phase 2 J' t.
    """
    if mu == 0 or not math.isfinite(mu):
        raise CompilationError("X rotation needs a nonzero K12 amplitude mu")
    t = (angle / (2 * mu)) % (math.pi / abs(mu))
    metadata = {"gate": "x-rotation", "block": block, "angle": float(angle), "mu": float(mu)}
    if J_prime is not None:
        metadata["global_phase"] = float(2 * J_prime * t)
    if t == 0:
        return PulseSchedule(metadata=metadata)
    return PulseSchedule(
        segments=[PulseSegment(duration=t, couplings={_x_edge(block): mu}, label="x")],
        metadata=metadata,
    )


def z_unit(J: float, J_prime: float, nu: float) -> tuple[float, float]:
    """(theta, t) of one full Rabi cycle of |1_L> through |2_L> under K23 = nu."""
    varsigma = 2 * (J - J_prime)
    omega = math.hypot(varsigma, 2 * nu)
    if omega == 0:
        raise CompilationError("z unit is undefined for J = J' and nu = 0")
    return math.pi * varsigma / omega, 2 * math.pi / omega


def compile_z_unit(block: int, J: float, J_prime: float, nu: float, power: int = 1) -> PulseSchedule:
    if power < 1:
        raise ModelError(f"Power must be a positive integer, got {power}")
    theta, t = z_unit(J, J_prime, nu)
    couplings = {_z_edge(block): nu} if nu else {}
    return PulseSchedule(
        segments=[PulseSegment(duration=power * t, couplings=couplings, label="z-unit")],
        metadata={
            "gate": "z-unit-power", "block": block, "power": power, "theta": theta, "unit_duration": t,
            # U = e^{i phase} exp(-i n theta Z) on the logical pair
            "global_phase": float(power * (2 * J_prime * t + theta)),
        },
    )


def compile_z_rotation(block: int, angle: float, J: float, J_prime: float, nu: float,
                       epsilon: float = 1e-3) -> PulseSchedule:
    """exp(-i angle Z) to within epsilon from integer powers of the z unit."""
    theta, _ = z_unit(J, J_prime, nu)
    synthesis = synthesize_z_power(angle, theta, epsilon)
    schedule = compile_z_unit(block, J, J_prime, nu, synthesis.power)
    schedule.metadata.update({
        "gate": "z-rotation", "angle": float(angle), "achieved_angle": synthesis.achieved_angle,
        "synthesis_error": synthesis.error, "epsilon": float(epsilon),
    })
    return schedule


# ---------- |1_L> <-> |2_L> map ----------

def frame_hamiltonians(J: float, J_prime: float, nu: float) -> tuple[np.ndarray, np.ndarray]:
    """3x3 frame restrictions of the idle block and of the block with K23 = nu."""
    spec = standard_block(J, J_prime)
    chain = isolated_chain(spec)
    frames = [LogicalFrame(0)]
    h_id = effective_hamiltonian(block_hamiltonian(spec), chain, frames)
    h_b = effective_hamiltonian(block_hamiltonian(spec, {(2, 3): nu}), chain, frames)
    return h_id, h_b


def _bloch(psi: np.ndarray) -> np.ndarray:
    a, b = psi
    ab = np.conj(a) * b
    return np.array([2 * ab.real, 2 * ab.imag, abs(a) ** 2 - abs(b) ** 2])


def _polar(v: np.ndarray) -> float:
    return float(np.arccos(np.clip(v[2], -1.0, 1.0)))


def _sequence_unitary(plan: Sequence[tuple[str, float]], h_id: np.ndarray, h_b: np.ndarray) -> np.ndarray:
    U = np.eye(h_id.shape[0], dtype=complex)
    for kind, t in plan:
        U = scipy.linalg.expm(-1j * (h_b if kind == "pulse" else h_id) * t) @ U
    return U


def swap_distance(U2: np.ndarray) -> float:
    """min over phi of ||U2 - e^{i phi} X|| (spectral norm)."""
    phi = np.angle(np.trace(PauliX.conj().T @ U2))
    return float(np.linalg.norm(U2 - np.exp(1j * phi) * PauliX, 2))


def _plan_swap(h_id: np.ndarray, h_b: np.ndarray) -> list[tuple[str, float]]:
    """Idle waits and K23 pulses mapping |1> to |2> on the Bloch sphere of the {|1>, |2>} sector.

    Idle rotates about z, a pulse about the tilted axis n. Each
    (idle, pi-pulse about n) pair pushes the state 2*beta further from the
    north pole; a final pair lands exactly on the south pole and a last
    idle equalizes the two off-diagonal phases.
    """
    h_id2, h_b2 = h_id[1:, 1:], h_b[1:, 1:]
    varsigma = float((h_id2[0, 0] - h_id2[1, 1]).real) / 2
    coupling = float(h_b2[0, 1].real)
    omega = math.hypot(varsigma, coupling)
    n = np.array([coupling, 0.0, varsigma]) / omega
    flip = n[2] < 0
    m = -n if flip else n
    beta = float(np.arccos(np.clip(m[2], -1.0, 1.0)))
    phi_m = math.atan2(m[1], m[0])

    plan: list[tuple[str, float]] = []
    U = np.eye(2, dtype=complex)

    def push(kind: str, t: float) -> None:
        nonlocal U
        if t <= 1e-15:
            return
        plan.append((kind, t))
        U = scipy.linalg.expm(-1j * (h_b2 if kind == "pulse" else h_id2) * t) @ U

    def idle_to(azimuth: float) -> None:
        v = _bloch(U[:, 0])
        if math.sin(_polar(v)) < 1e-12:
            return
        alpha = azimuth - math.atan2(v[1], v[0])
        push("idle", (alpha / (2 * varsigma)) % (math.pi / abs(varsigma)))

    def rotate_about_m(angle: float) -> None:
        b = -angle if flip else angle
        push("pulse", (b % (2 * math.pi)) / (2 * omega))

    pulses = 0
    while _polar(_bloch(U[:, 0])) < math.pi - 2 * beta - 1e-12:
        idle_to(phi_m + math.pi)
        rotate_about_m(math.pi)
        pulses += 1
        if pulses > config.MAX_MAP_PULSES:
            raise CompilationError(f"Map needs more than {config.MAX_MAP_PULSES} pulses "
                                   f"(axis tilt {beta:.3e} rad is too small)")

    p = _polar(_bloch(U[:, 0]))
    if math.pi - p > 1e-12:
        target = math.pi - beta
        cos_delta = (math.cos(target) - math.cos(p) * math.cos(beta)) / (math.sin(p) * math.sin(beta))
        idle_to(phi_m + float(np.arccos(np.clip(cos_delta, -1.0, 1.0))))
        v = _bloch(U[:, 0])
        south = np.array([0.0, 0.0, -1.0])
        v_perp = v - np.dot(v, m) * m
        s_perp = south - np.dot(south, m) * m
        rotate_about_m(math.atan2(float(np.dot(m, np.cross(v_perp, s_perp))), float(np.dot(v_perp, s_perp))))

    a = float(np.angle(U[0, 1] / U[1, 0]))
    push("idle", (a / (2 * varsigma)) % (math.pi / abs(varsigma)))
    return plan


def _refine_plan(plan: list[tuple[str, float]], h_id: np.ndarray, h_b: np.ndarray) -> list[tuple[str, float]]:
    kinds = [k for k, _ in plan]

    def residual(x: np.ndarray) -> np.ndarray:
        U2 = _sequence_unitary(list(zip(kinds, x)), h_id, h_b)[1:, 1:]
        phi = np.angle(np.trace(PauliX.conj().T @ U2))
        diff = (U2 - np.exp(1j * phi) * PauliX).ravel()
        return np.concatenate([diff.real, diff.imag])

    fit = least_squares(residual, np.array([t for _, t in plan]), bounds=(0.0, np.inf), xtol=1e-15, ftol=1e-15)
    return list(zip(kinds, (float(t) for t in fit.x)))


def compile_map_1_to_2(block: int, J: float, J_prime: float, nu: float) -> PulseSchedule:
    """Idle/K23 sequence exchanging |1_L> and |2_L>, diagonal on |0_L>."""
    if nu == 0:
        raise CompilationError("Map needs nu != 0: idle alone never mixes |1_L> and |2_L>")
    if J == J_prime:
        raise CompilationError("Map needs J != J': idle and K23 pulses then share one axis")

    h_id, h_b = frame_hamiltonians(J, J_prime, nu)
    plan = _plan_swap(h_id, h_b)
    U = _sequence_unitary(plan, h_id, h_b)
    distance = swap_distance(U[1:, 1:])
    if distance > SWAP_REFINE_TOL:
        logger.warning(f"[MAP12] geometric sequence off by {distance:.2e}, refining durations")
        plan = [(k, t) for k, t in _refine_plan(plan, h_id, h_b) if t > 1e-15]
        U = _sequence_unitary(plan, h_id, h_b)
        distance = swap_distance(U[1:, 1:])
    if distance > SWAP_TOL:
        raise CompilationError(f"Map sequence misses the swap by {distance:.2e}")

    total = sum(t for _, t in plan)
    segments = [
        PulseSegment(duration=t, couplings={_z_edge(block): nu} if kind == "pulse" else {}, label=kind)
        for kind, t in plan
    ]
    pulses = sum(1 for kind, _ in plan if kind == "pulse")
    logger.info(f"[MAP12] block {block}: {pulses} pulses, {len(plan) - pulses} waits, "
                f"T={total:.4f}, distance={distance:.2e}")
    return PulseSchedule(segments=segments, metadata={
        "gate": "map-1-to-2", "block": block, "pulses": pulses, "swap_distance": distance,
        "phase_0": float(-h_id[0, 0].real * total),
        "phase_1_to_2": float(np.angle(U[2, 1])),
        "phase_2_to_1": float(np.angle(U[1, 2])),
    })


def compile_map_2_to_1(block: int, J: float, J_prime: float, nu: float) -> PulseSchedule:
    """Same sequence as the forward map; the swap is its own inverse up to phases."""
    schedule = compile_map_1_to_2(block, J, J_prime, nu)
    schedule.metadata["gate"] = "map-2-to-1"
    return schedule


# ---------- phase bookkeeping ----------

def _phase_key(key: PhaseKey) -> tuple[int, int]:
    if isinstance(key, str):
        return int(key[0]), int(key[1])
    return int(key[0]), int(key[1])


def fit_phase_coefficients(phases: Mapping[PhaseKey, float],
                           labels: tuple[Sequence[int], Sequence[int]] = ((0, 2), (0, 1))) -> tuple[float, float, float, float]:
    """(a, b, c, d) with phi_mn = a + b z_m + c z_n + d z_m z_n.

    In each label pair the first label has z = +1 and the second z = -1.
    """
    table = {_phase_key(k): float(v) for k, v in phases.items()}
    rows, rhs = [], []
    for i, m in enumerate(labels[0]):
        for j, n in enumerate(labels[1]):
            if (m, n) not in table:
                raise ModelError(f"Phase for combination ({m}, {n}) is missing")
            zm, zn = (1 - 2 * i), (1 - 2 * j)
            rows.append([1, zm, zn, zm * zn])
            rhs.append(table[(m, n)])
    a, b, c, d = np.linalg.solve(np.array(rows, dtype=float), np.array(rhs))
    return float(a), float(b), float(c), float(d)


def fit_diagonal(M: np.ndarray) -> tuple[np.ndarray, float]:
    """Diagonal unitary closest in phase to M and the fidelity |Tr(U^dagger M)|^2 / dim^2."""
    U = np.diag(np.exp(1j * np.angle(np.diag(M))))
    return U, gate_fidelity(U, M)


# ---------- controlled phase, pulsed ----------

def _check_pair(chain: Optional[ChainSpec], block: int) -> None:
    if block < 0 or (chain is not None and block + 1 >= chain.num_blocks):
        raise ModelError(f"Blocks {block} and {block + 1} are not neighbours in the chain")


def predict_pulsed_phases(J: float, J_prime: float, nu: float, tau: float) -> dict[tuple[int, int], float]:
    """Ideal logical phases of flip / wait tau / flip with instantaneous flips.

    A logical |1> waits as |2>; each ideal flip of a block multiplies by -i sign(nu).
    """
    energy = {0: -2 * J_prime, 2: 2 * J_prime - 4 * J}
    phases = {}
    for a in (0, 1):
        for b in (0, 1):
            ma, mb = 2 * a, 2 * b
            e = energy[ma] + energy[mb] + (-4 * J if ma == mb == 2 else 0.0)
            flips = (a + b) * 2 * (-math.copysign(math.pi / 2, nu))
            phases[(a, b)] = -e * tau + flips
    return phases


def compile_cz_pulsed(block: int, J: float, J_prime: float, nu: float, d: float,
                      compensate: bool = False, epsilon: float = 1e-3) -> PulseSchedule:
    """Flip both blocks to |2>, wait, flip back: ZZ coefficient d = J tau."""
    if nu == 0 or J == 0:
        raise CompilationError("Pulsed controlled phase needs nonzero nu and J")
    _check_pair(None, block)
    ratio = abs(nu) / max(abs(J), abs(J_prime))
    warning = ratio < config.PULSED_RATIO_THRESHOLD
    if warning:
        logger.warning(f"[CZ-PULSED] |nu|/|J| = {ratio:.1f} below {config.PULSED_RATIO_THRESHOLD}; "
                       "flip infidelity is not negligible")

    t_flip = math.pi / (4 * abs(nu))
    tau = (d / J) % (math.pi / abs(J))
    flip = {_z_edge(block): nu, _z_edge(block + 1): nu}
    segments = [PulseSegment(duration=t_flip, couplings=flip, label="flip")]
    if tau > 0:
        segments.append(PulseSegment(duration=tau, label="wait"))
    segments.append(PulseSegment(duration=t_flip, couplings=flip, label="flip"))

    a, b, c, zz = fit_phase_coefficients(predict_pulsed_phases(J, J_prime, nu, tau), ((0, 1), (0, 1)))
    schedule = PulseSchedule(segments=segments, metadata={
        "gate": "cz-pulsed", "blocks": [block, block + 1], "d": float(d), "tau": tau,
        "flip_duration": t_flip, "ratio": ratio, "regime_warning": warning,
        "byproducts": {"a": a, "b": b, "c": c}, "predicted_d": zz,
    })
    if compensate:
        schedule = schedule.then(compile_compensation({block: b, block + 1: c}, J, J_prime, nu, epsilon))
        schedule.metadata["gate"] = "cz-pulsed"
    return schedule


# ---------- controlled phase, adiabatic ----------

def adiabatic_predictions(J: float, J_prime: float, ramp: RampSpec, t_f: float) -> AdiabaticPrediction:
    """eta, kappa, d = (kappa - eta)/4 and theta by quadrature; d == theta is checked."""
    if J_prime == J or J_prime == 2 * J:
        raise GapClosureError(f"J' = {J_prime} closes a gap at J = {J}")

    def nu2(t: float) -> float:
        return float(ramp.value(t, t_f)) ** 2

    integral = lambda f: scipy.integrate.quad(f, 0.0, t_f, limit=200, epsabs=1e-14, epsrel=1e-13)[0]
    eta = integral(lambda t: nu2(t) / (J_prime - J))
    kappa = integral(lambda t: nu2(t) / (J_prime - 2 * J))
    theta = 0.25 * integral(lambda t: J * nu2(t) / ((J_prime - 2 * J) * (J_prime - J)))
    d = (kappa - eta) / 4
    if abs(d - theta) > IDENTITY_TOL * max(1.0, abs(d)):
        raise ContractViolation(f"Quadrature identity d = theta broken: {d!r} vs {theta!r}")
    margin = adiabaticity_margin(J, J_prime, ramp, t_f)
    return AdiabaticPrediction(
        eta=eta, kappa=kappa, d=d, theta=theta, margin=margin, t_f=t_f,
        phases={
            "00": 4 * J_prime * t_f, "01": 4 * J_prime * t_f + eta,
            "20": 4 * J * t_f, "21": 4 * J * t_f + kappa,
        },
    )


def ramp_schedule(block: int, ramp: RampSpec, t_f: float) -> PulseSchedule:
    return PulseSchedule(segments=[PulseSegment(duration=t_f, couplings={_z_edge(block): ramp}, label="ramp")],
                         metadata={"gate": "ramp", "block": block})


def compile_cz_adiabatic(block: int, J: float, J_prime: float, ramp: RampSpec, t_f: float,
                         nu_map: Optional[float] = None) -> tuple[PulseSchedule, AdiabaticPrediction]:
    """Map |1> -> |2> on L, ramp K23 on L+1, map back."""
    _check_pair(None, block)
    if abs(ramp.value(0.0, t_f)) > 1e-12 or abs(ramp.value(t_f, t_f)) > 1e-12:
        raise CompilationError("Adiabatic ramp must start and end at zero")
    prediction = adiabatic_predictions(J, J_prime, ramp, t_f)
    if prediction.margin < config.MIN_ADIABATIC_MARGIN:
        raise CompilationError(f"Adiabaticity margin {prediction.margin:.2f} below "
                               f"{config.MIN_ADIABATIC_MARGIN}")
    nu_map = J if nu_map is None else nu_map
    forward = compile_map_1_to_2(block, J, J_prime, nu_map)
    schedule = forward.then(ramp_schedule(block + 1, ramp, t_f)).then(compile_map_2_to_1(block, J, J_prime, nu_map))
    schedule.metadata = {
        "gate": "cz-adiabatic", "blocks": [block, block + 1], "t_f": t_f,
        "map_byproducts": {k: forward.metadata[k] for k in ("phase_0", "phase_1_to_2", "phase_2_to_1")},
        "prediction": prediction.model_dump(),
    }
    logger.info(f"[CZ-ADIABATIC] eta={prediction.eta:.6f} kappa={prediction.kappa:.6f} "
                f"d={prediction.d:.6f} margin={prediction.margin:.1f}")
    return schedule, prediction


def adiabatic_indices(chain: ChainSpec, block: int) -> dict[tuple[int, int], int]:
    """Basis indices of |m_L, n_L+1>, m in {0, 2}, n in {0, 1}, other blocks in |0_L>."""
    _check_pair(chain, block)
    labels = {}
    for m in (0, 2):
        for n in (0, 1):
            per_block = [0] * chain.num_blocks
            per_block[block], per_block[block + 1] = m, n
            labels[(m, n)] = basis_index(frame_bits(chain, per_block))
    return labels


def simulate_adiabatic_phases(chain: ChainSpec, block: int, ramp: RampSpec, t_f: float,
                              steps: Optional[int] = None, check_convergence: bool = True
                              ) -> tuple[dict[tuple[int, int], float], EvolutionResult]:
    """Unwrapped phases of |m_L, n_L+1>, m in {0, 2}, n in {0, 1}, through the ramp alone."""
    labels = adiabatic_indices(chain, block)
    result = evolve(chain, ramp_schedule(block + 1, ramp, t_f), steps=steps, track=list(labels.values()),
                    check_convergence=check_convergence)
    return {key: result.total_phases[idx] for key, idx in labels.items()}, result


# ---------- verification helpers ----------

def logical_unitary(chain: ChainSpec, schedule: PulseSchedule, blocks: Sequence[int],
                    labels: Sequence[int] = (0, 1), steps: Optional[int] = None,
                    background: Optional[Mapping[int, int]] = None) -> tuple[np.ndarray, EvolutionResult]:
    """Frame-restricted unitary of ``schedule``, first block most significant.

    Only the frame basis states are propagated, as one stacked batch, so the
    full 2^n unitary is never formed.
    """
    indices = frame_indices(chain, [LogicalFrame(b) for b in blocks], background, labels)
    columns = np.zeros((chain.dim, len(indices)), dtype=np.complex128)
    columns[indices, np.arange(len(indices))] = 1.0
    result = evolve(chain, schedule, initial=columns, steps=steps)
    return result.final[indices, :], result


def evaluate_cz_pulsed(chain: ChainSpec, schedule: PulseSchedule, block: int) -> dict[str, float]:
    M, result = logical_unitary(chain, schedule, [block, block + 1])
    _, fidelity = fit_diagonal(M)
    phases = {(a, b): float(np.angle(M[2 * a + b, 2 * a + b])) for a in (0, 1) for b in (0, 1)}
    _, _, _, d_fit = fit_phase_coefficients(
        {k: v for k, v in phases.items()}, ((0, 1), (0, 1)))
    d_wrapped = wrap_angle(4 * d_fit) / 4
    return {
        "fidelity": fidelity,
        "d_fit": d_wrapped,
        "d_invariant": zz_coefficient(scipy.linalg.polar(M)[0]),
        "leakage": result.leakage,
    }


# ---------- compensation and dispatch ----------

def compile_compensation(angles: Mapping[int, float], J: float, J_prime: float, nu: float,
                         epsilon: float = 1e-3) -> PulseSchedule:
    """Local exp(-i angle Z) per block, one block after another."""
    schedule = PulseSchedule(metadata={"gate": "compensation"})
    for block, angle in sorted(angles.items()):
        if abs(wrap_angle(angle)) < epsilon:
            continue
        schedule = schedule.then(compile_z_rotation(block, angle, J, J_prime, nu, epsilon))
    schedule.metadata = {"gate": "compensation", "angles": {str(b): float(a) for b, a in angles.items()}}
    return schedule


def compile_gate(spec: GateSpec) -> PulseSchedule:
    block = spec.blocks[0]

    def need(name: str):
        value = getattr(spec, name)
        if value is None:
            raise ModelError(f"{spec.kind} needs '{name}'")
        return value

    if spec.kind == "x-rotation":
        return compile_x_rotation(block, spec.angle, need("mu"), spec.J_prime)
    if spec.kind == "z-unit-power":
        return compile_z_unit(block, spec.J, spec.J_prime, need("nu"), need("power"))
    if spec.kind == "z-rotation":
        return compile_z_rotation(block, spec.angle, spec.J, spec.J_prime, need("nu"), spec.epsilon)
    if spec.kind == "map-1-to-2":
        return compile_map_1_to_2(block, spec.J, spec.J_prime, need("nu"))
    if spec.kind == "cz-pulsed":
        return compile_cz_pulsed(block, spec.J, spec.J_prime, need("nu"), spec.angle)
    schedule, _ = compile_cz_adiabatic(block, spec.J, spec.J_prime, need("ramp"), need("t_f"), spec.nu)
    return schedule
