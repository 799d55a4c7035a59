import math
from dataclasses import replace

import numpy as np
import pytest
from unittest.mock import patch

from dfsblock.errors import CapacityError, GapClosureError, GridMismatchError, IntegrationError, ModelError
from dfsblock.models.device import LogicalFrame, basis_index
from dfsblock.models.dynamics import DiagonalPerturbation
from dfsblock.models.schedule import PulseSchedule, PulseSegment, RampSpec, edge_key
from dfsblock.services.device import (
    block_hamiltonian,
    frame_indices,
    frame_state,
    idle_diagonal,
    isolated_chain,
    standard_chain,
)
from dfsblock.services.dynamics import (
    adiabaticity_margin,
    berry_phase_residual,
    default_step_count,
    dynamical_phase,
    evolve,
    evolve_piecewise,
    evolve_ramped,
    ramp_derivative_max,
    restrict_unitary,
    wrap_phase,
)

J, JP = 1.0, 0.5


def ramp(amplitude: float = 0.2, t_f: float = 200.0, kind: str = "sin2") -> PulseSchedule:
    return PulseSchedule(segments=[PulseSegment(duration=t_f, couplings={edge_key(0, 2, 3): RampSpec(kind=kind, amplitude=amplitude)})])


def test_x_pulse_matches_closed_form(single_chain):
    mu, t = 0.8, 0.37
    schedule = PulseSchedule(segments=[PulseSegment(duration=t, couplings={edge_key(0, 1, 2): mu})])
    U = evolve_piecewise(single_chain, schedule).final
    M = restrict_unitary(U, frame_indices(single_chain, [LogicalFrame(0)], labels=(0, 1)))
    X = np.array([[0, 1], [1, 0]])
    expected = np.exp(2j * JP * t) * (math.cos(2 * mu * t) * np.eye(2) - 1j * math.sin(2 * mu * t) * X)
    assert np.allclose(M, expected, atol=1e-12)


def test_empty_schedule_is_identity(single_chain):
    result = evolve(single_chain, PulseSchedule())
    assert np.allclose(result.final, np.eye(16))
    assert result.leakage == 0.0


def test_idle_phase_of_logical_zero(single_chain):
    t = 3.0
    idx = basis_index("1001")
    result = evolve(single_chain, PulseSchedule(segments=[PulseSegment(duration=t)]), track=[idx])
    assert result.total_phases[idx] == pytest.approx(2 * JP * t, abs=1e-12)
    assert result.dynamical_phases[idx] == pytest.approx(2 * JP * t, abs=1e-12)


def test_tracked_phase_is_unwrapped(single_chain):
    idx = basis_index("0011")
    t = 10.0
    result = evolve(single_chain, PulseSchedule(segments=[PulseSegment(duration=t)]), track=[idx])
    # |2_L> has energy 2J' - 4J = -3
    assert result.total_phases[idx] == pytest.approx(3.0 * t, abs=1e-9)


def test_dynamical_phase_of_eigenstate(block):
    H = block_hamiltonian(block)
    psi = np.zeros(16, dtype=complex)
    psi[basis_index("0011")] = 1.0
    assert dynamical_phase([psi, psi], [H, H], [0.5, 1.5]) == pytest.approx(3.0 * 2.0)


def test_dynamical_phase_grid_mismatch(block):
    H = block_hamiltonian(block)
    with pytest.raises(GridMismatchError):
        dynamical_phase([np.ones(16) / 4], [H, H], [1.0])


def test_state_and_unitary_modes_agree(two_blocks):
    schedule = PulseSchedule(segments=[
        PulseSegment(duration=0.4, couplings={edge_key(0, 1, 2): 0.7, edge_key(1, 2, 3): -0.3}),
        PulseSegment(duration=0.9, couplings={edge_key(0, 2, 3): 1.1}),
    ])
    psi = frame_state(two_blocks, [1, 0])
    U = evolve(two_blocks, schedule).final
    state = evolve(two_blocks, schedule, initial=psi).final
    assert np.allclose(U @ psi, state, atol=1e-12)


def test_stacked_states_match_unitary_columns(two_blocks):
    schedule = PulseSchedule(segments=[
        PulseSegment(duration=0.7, couplings={edge_key(0, 1, 2): 0.6, edge_key(1, 2, 3): 0.8}),
    ])
    states = np.stack([frame_state(two_blocks, [a, b]) for a in (0, 1, 2) for b in (0, 1)], axis=1)
    U = evolve(two_blocks, schedule).final
    batch = evolve(two_blocks, schedule, initial=states)
    assert batch.final.shape == states.shape
    assert not batch.is_unitary
    assert np.allclose(batch.final, U @ states, atol=1e-12)
    assert batch.leakage < 1e-12
    with pytest.raises(ModelError):
        evolve(two_blocks, schedule, initial=2 * states)


def test_piecewise_evolution_stays_in_dfs(two_blocks):
    schedule = PulseSchedule(segments=[
        PulseSegment(duration=1.3, couplings={edge_key(0, 1, 2): 0.5, edge_key(0, 2, 3): 0.9,
                                              edge_key(1, 1, 2): -0.4, edge_key(1, 2, 3): 0.2}),
    ])
    result = evolve(two_blocks, schedule)
    assert result.is_unitary
    assert result.leakage < 1e-12
    assert result.unitarity_defect < 1e-12


def test_resting_coupling_drives_idle_segments(block):
    edges = tuple(replace(e, xy_strength=0.6) if e.endpoints == (1, 2) else e for e in block.edges)
    resting = isolated_chain(replace(block, edges=edges))
    idle = PulseSchedule(segments=[PulseSegment(duration=0.8)])
    driven = PulseSchedule(segments=[PulseSegment(duration=0.8, couplings={edge_key(0, 1, 2): 0.6})])
    assert np.allclose(evolve(resting, idle).final, evolve(isolated_chain(block), driven).final, atol=1e-12)
    switched_off = PulseSchedule(segments=[PulseSegment(duration=0.8, couplings={edge_key(0, 1, 2): 0.0})])
    assert np.allclose(evolve(resting, switched_off).final, np.diag(np.exp(-0.8j * idle_diagonal(resting))))


def test_piecewise_rejects_ramps(single_chain):
    with pytest.raises(ModelError):
        evolve_piecewise(single_chain, ramp())


def test_ramped_needs_minimum_steps(single_chain):
    with pytest.raises(ModelError):
        evolve_ramped(single_chain, ramp(), steps=50)


def test_non_tunable_drive_rejected(single_chain):
    schedule = PulseSchedule(segments=[PulseSegment(duration=1.0, couplings={edge_key(0, 1, 3): 0.5})])
    with pytest.raises(ModelError):
        evolve(single_chain, schedule)


def test_dense_unitary_capacity():
    with patch("dfsblock.config.DENSE_QUBITS", 6):
        with pytest.raises(CapacityError):
            evolve(standard_chain(J, JP, 2), PulseSchedule(segments=[PulseSegment(duration=1.0)]))
        psi = frame_state(standard_chain(J, JP, 2), [1, 0])
        stacked = evolve(standard_chain(J, JP, 2), PulseSchedule(segments=[PulseSegment(duration=1.0)]),
                         initial=psi[:, None])
        assert abs(np.vdot(psi, stacked.final[:, 0])) == pytest.approx(1.0, abs=1e-12)


def test_ramped_constant_matches_exact(single_chain):
    flat = PulseSchedule(segments=[PulseSegment(duration=2.0, couplings={edge_key(0, 2, 3): RampSpec(kind="constant", amplitude=0.6)})])
    exact = evolve_piecewise(single_chain, flat).final
    stepped = evolve_ramped(single_chain, flat, steps=200).final
    assert np.allclose(exact, stepped, atol=1e-12)


def test_ramp_step_error_shrinks(single_chain):
    schedule = ramp(amplitude=0.8, t_f=5.0)
    coarse = evolve_ramped(single_chain, schedule, steps=400)
    fine = evolve_ramped(single_chain, schedule, steps=1600)
    assert coarse.max_step_error / fine.max_step_error >= 3
    assert fine.leakage < 1e-12


def test_slow_refinement_is_rejected(single_chain):
    with patch("dfsblock.services.dynamics.MIN_REFINEMENT_RATIO", 100.0):
        with pytest.raises(IntegrationError):
            evolve_ramped(single_chain, ramp(amplitude=0.8, t_f=5.0), steps=200)
        result = evolve_ramped(single_chain, ramp(amplitude=0.8, t_f=5.0), steps=200, check_convergence=False)
    assert result.max_step_error > 0


def test_slow_ramp_has_no_berry_phase(single_chain):
    idx = basis_index("0101")
    result = evolve(single_chain, ramp(), steps=20000, track=[idx])
    assert result.cyclic
    assert abs(berry_phase_residual(result, idx)) < 1e-3


def test_berry_residual_needs_cyclic_schedule(single_chain):
    idx = basis_index("0101")
    schedule = PulseSchedule(segments=[
        PulseSegment(duration=1.0, couplings={edge_key(0, 2, 3): 0.3}),
        PulseSegment(duration=1.0),
    ])
    result = evolve(single_chain, schedule, track=[idx])
    with pytest.raises(ModelError):
        berry_phase_residual(result, idx)


def test_perturbation_breakpoints_split_segments(single_chain):
    psi = np.zeros(16, dtype=complex)
    psi[basis_index("0000")] = psi[basis_index("1111")] = 1 / math.sqrt(2)
    sz = np.array([4 - 2 * bin(i).count("1") for i in range(16)], dtype=float)
    fields = [0.3, -0.7]
    perturbation = DiagonalPerturbation(sz[None, :], lambda t: np.array([fields[0] if t < 1.0 else fields[1]]), (1.0,))
    schedule = PulseSchedule(segments=[PulseSegment(duration=2.0)])
    noisy = evolve(single_chain, schedule, initial=psi, perturbation=perturbation).final
    ideal = evolve(single_chain, schedule, initial=psi).final
    overlap = abs(np.vdot(ideal, noisy)) ** 2
    assert overlap == pytest.approx(math.cos(4 * (fields[0] + fields[1])) ** 2, abs=1e-12)


def test_default_step_count_scales_with_duration(single_chain):
    assert default_step_count(single_chain, ramp(t_f=200.0)) > default_step_count(single_chain, ramp(t_f=20.0))


def test_adiabaticity_margin_example():
    margin = adiabaticity_margin(J, JP, RampSpec(kind="sin2", amplitude=0.1), 100.0)
    assert margin == pytest.approx(0.25 * 8 * 100 / (0.1 * math.pi), rel=1e-12)
    assert margin == pytest.approx(636.6, abs=0.1)


def test_adiabaticity_margin_gap_closure():
    with pytest.raises(GapClosureError):
        adiabaticity_margin(J, J, RampSpec(amplitude=0.1), 10.0)
    with pytest.raises(GapClosureError):
        adiabaticity_margin(J, 2 * J, RampSpec(amplitude=0.1), 10.0)


def test_ramp_derivative_max_for_callable():
    value = ramp_derivative_max(lambda t: 0.2 * np.sin(np.pi * t / 50.0) ** 2, 50.0, samples=20001)
    assert value == pytest.approx(0.2 * math.pi / 50.0, rel=1e-4)


def test_wrap_phase():
    assert wrap_phase(math.pi) == pytest.approx(math.pi)
    assert wrap_phase(-math.pi) == pytest.approx(math.pi)
    assert wrap_phase(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
