"""Tests for the four-level model, generator assembly and RK4 propagation."""

import numpy as np
import pytest

from wfpo import pulse as P
from wfpo import quantum_core as Q


def random_density(rng):
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def test_rotating_frame_h0_reference_values():
    m = Q.SystemModel(omega_g=0.5, omega_e=0.1, detuning=0.2)
    h0 = Q.build_rotating_frame_h0(m)
    assert np.allclose(np.diag(h0), [0.3, 0.2, 0.5, 0.0], atol=0)
    assert np.count_nonzero(h0 - np.diag(np.diag(h0))) == 0


def test_rotating_frame_h0_degenerate():
    m = Q.SystemModel(omega_g=0.0, omega_e=0.0, detuning=0.0)
    assert np.all(Q.build_rotating_frame_h0(m) == 0)


def test_coupling_pattern_positions():
    m = Q.SystemModel(f14=0.9, f23=0.9, f24=0.1, f13=0.1)
    c = Q.build_coupling(m)
    # rows: levels 4, 3; columns: levels 2, 1
    assert c[0, 2] == 0.1 and c[0, 3] == 0.9
    assert c[1, 2] == 0.9 and c[1, 3] == 0.1
    assert np.all(c[Q.EXCITED, Q.EXCITED] == 0)
    assert np.all(c[Q.GROUND, Q.GROUND] == 0)
    assert np.allclose(c, c.conj().T)


def test_assembled_field_operator_is_hermitian():
    gen = Q.lindblad_generator(Q.SystemModel())
    rng = np.random.default_rng(3)
    for _ in range(100):
        eps = complex(rng.normal(), rng.normal())
        h = gen.hamiltonian(eps)
        assert np.max(np.abs(h - h.conj().T)) < 1e-15


def test_invalid_model_rejected():
    with pytest.raises(ValueError):
        Q.SystemModel(gamma=-1.0)
    with pytest.raises(ValueError):
        Q.SystemModel(mu=-0.5)
    with pytest.raises(ValueError):
        Q.SystemModel(omega_g=np.inf)


def test_jump_confined_to_excited_surface():
    gen = Q.lindblad_generator(Q.SystemModel(gamma=0.3))
    (s,) = gen.jump_ops
    assert np.max(np.abs(s[Q.EXCITED, Q.GROUND])) == 0
    assert np.max(np.abs(s[Q.GROUND, Q.EXCITED])) == 0
    assert s[1, 0] == pytest.approx(np.sqrt(0.3))
    with pytest.raises(ValueError):
        bad = np.zeros((4, 4), complex)
        bad[3, 0] = 1.0  # couples the surfaces
        Q.LindbladGenerator(gen.hamiltonian_static, gen.coupling_shape,
                            gen.mu, (bad,))


# ---------------------------------------------------------------------------
# right-hand side
# ---------------------------------------------------------------------------

def test_field_free_ground_state_is_stationary():
    gen = Q.lindblad_generator(Q.SystemModel())
    r = Q.lindblad_rhs(gen, Q.ground_state(), 0.0)
    assert np.max(np.abs(r)) == 0.0


def test_single_jump_relaxation_rates():
    gen = Q.lindblad_generator(Q.SystemModel(gamma=1.0))
    rho = np.zeros((4, 4), complex)
    rho[0, 0] = 1.0  # level 4
    r = Q.lindblad_rhs(gen, rho, 0.0)
    assert r[0, 0] == pytest.approx(-1.0)
    assert r[1, 1] == pytest.approx(1.0)
    r[0, 0] = r[1, 1] = 0.0
    assert np.max(np.abs(r)) == 0.0


def test_rhs_traceless_and_hermiticity_preserving():
    gen = Q.lindblad_generator(Q.SystemModel(gamma=0.37))
    rng = np.random.default_rng(11)
    for _ in range(100):
        rho = random_density(rng)
        eps = complex(rng.normal(), rng.normal())
        r = Q.lindblad_rhs(gen, rho, eps)
        assert abs(np.trace(r)) < 1e-13
        assert np.max(np.abs(r - r.conj().T)) < 1e-13


def test_field_free_excited_surface_conserved_at_rhs_level():
    gen = Q.lindblad_generator(Q.SystemModel(gamma=0.8))
    rng = np.random.default_rng(5)
    for _ in range(50):
        r = Q.lindblad_rhs(gen, random_density(rng), 0.0)
        assert abs(r[0, 0] + r[1, 1]) < 1e-15


# ---------------------------------------------------------------------------
# propagation
# ---------------------------------------------------------------------------

def small_field(chirp=2.0, bandwidth=1.0, carrier=0.0, dt=0.01):
    grid = Q.propagation_time_grid(bandwidth, chirp, dt=dt)
    return P.analytic_chirped_gaussian(bandwidth, chirp, carrier, grid)


def test_compiled_step_matches_reference():
    gen = Q.lindblad_generator(Q.SystemModel(gamma=0.25))
    rng = np.random.default_rng(1)
    rho = random_density(rng)
    eps = np.array([0.3 + 0.1j, -0.2 + 0.4j, 0.1 - 0.3j])
    grid = P.TimeGrid(-0.01, 0.01, 3)
    field = P.TimeField(grid, np.zeros(3, complex))
    # one step through the compiled path
    upper = gen.upper_coupling
    states = Q._rk4_run(gen.hamiltonian_static, upper, upper.conj().T, gen.mu,
                        np.array(gen.jump_ops).reshape(-1, 4, 4),
                        eps, np.ascontiguousarray(rho), 0.02, np.array([1]))
    expected = Q.single_rk4_step(gen, rho, eps, 0.02)
    assert np.max(np.abs(states[0] - expected)) < 1e-15


def test_python_fallback_matches_compiled():
    gen = Q.lindblad_generator(Q.SystemModel(gamma=0.25))
    rng = np.random.default_rng(2)
    rho = np.ascontiguousarray(random_density(rng))
    eps = (rng.normal(size=9) + 1j * rng.normal(size=9)) * 0.3
    upper = gen.upper_coupling
    jumps = np.array(gen.jump_ops).reshape(-1, 4, 4)
    idx = np.array([0, 2, 4])
    a = Q._rk4_python(gen.hamiltonian_static, upper, upper.conj().T, gen.mu,
                      jumps, eps, rho, 0.02, idx)
    b = Q._rk4_run(gen.hamiltonian_static, upper, upper.conj().T, gen.mu,
                   jumps, eps, rho, 0.02, idx)
    assert np.max(np.abs(a - b)) < 1e-15


def test_no_field_no_dissipator_state_frozen():
    # any state commuting with H0 is stationary; populations always are
    m = Q.SystemModel(mu=0.0, gamma=0.0)
    gen = Q.lindblad_generator(m)
    grid = Q.propagation_time_grid(1.0, 0.0, dt=0.01)
    field = P.TimeField(grid, np.zeros(grid.n_points, complex))
    rho0 = np.diag([0.1, 0.2, 0.3, 0.4]).astype(complex)
    traj = Q.propagate(gen, rho0, field, stride=100)
    assert np.max(np.abs(traj.states - rho0)) < 1e-12
    rng = np.random.default_rng(8)
    coh = random_density(rng)
    traj2 = Q.propagate(gen, coh, field, stride=100)
    pops = traj2.populations()
    assert np.max(np.abs(pops - pops[0])) < 1e-12


def test_zero_coupling_freezes_populations_even_with_field():
    m = Q.SystemModel(f14=0.0, f23=0.0, f24=0.0, f13=0.0, gamma=0.0)
    gen = Q.lindblad_generator(m)
    assert np.all(gen.coupling_shape == 0)
    field = small_field(chirp=0.0)
    traj = Q.propagate(gen, Q.ground_state(), field, stride=100)
    assert np.max(np.abs(traj.states - Q.ground_state())) < 1e-14


def test_field_free_excited_population_conserved():
    gen = Q.lindblad_generator(Q.SystemModel(gamma=0.4, mu=1e-3))
    grid = Q.propagation_time_grid(1.0, 0.0, dt=0.01)
    field = P.TimeField(grid, np.zeros(grid.n_points, complex))
    rho0 = np.zeros((4, 4), complex)
    rho0[0, 0] = 0.3
    rho0[1, 1] = 0.2
    rho0[3, 3] = 0.5
    traj = Q.propagate(gen, rho0, field, stride=50)
    drift = np.abs(traj.excited_population() - 0.5)
    assert drift.max() < 1e-10


def test_propagation_invariants_and_population():
    gen = Q.lindblad_generator(Q.SystemModel())
    traj = Q.propagate(gen, Q.ground_state(), small_field(), stride=50)
    traj.validate()
    tr = np.einsum("nii->n", traj.states)
    assert np.max(np.abs(tr - 1.0)) < 1e-10
    herm = np.max(np.abs(traj.states - np.conj(np.swapaxes(traj.states, 1, 2))))
    assert herm < 1e-12
    eigs = np.linalg.eigvalsh(traj.states)
    assert eigs.min() > -1e-9
    final = traj.final_state
    ne = Q.population(final, "excited_surface")
    assert 0.0 < ne < 1.0
    assert ne == pytest.approx(final[0, 0].real + final[1, 1].real)


def test_step_halving_convergence():
    gen = Q.lindblad_generator(Q.SystemModel())
    coarse = Q.propagate(gen, Q.ground_state(),
                         small_field(chirp=8.0, dt=0.01), stride=10 ** 6)
    fine = Q.propagate(gen, Q.ground_state(),
                       small_field(chirp=8.0, dt=0.005), stride=10 ** 6)
    pc = np.real(np.diag(coarse.final_state))
    pf = np.real(np.diag(fine.final_state))
    assert np.max(np.abs(pc - pf)) < 1e-8


def test_two_frame_equivalence():
    # the rotating-frame reduction must reproduce lab-frame populations
    carrier = 100.0
    m = Q.SystemModel(mu=1e-3, gamma=0.1)
    rot = Q.lindblad_generator(m, frame="rotating")
    lab = Q.lindblad_generator(m, frame="lab", carrier=carrier)

    grid = Q.propagation_time_grid(1.0, 0.0, dt=4e-4)
    env = P.analytic_chirped_gaussian(1.0, 0.0, 0.0, grid)
    full = P.analytic_chirped_gaussian(1.0, 0.0, carrier, grid)
    t_rot = Q.propagate(rot, Q.ground_state(), env, stride=10 ** 6)
    t_lab = Q.propagate(lab, Q.ground_state(), full, stride=10 ** 6)
    p_rot = np.real(np.diag(t_rot.final_state))
    p_lab = np.real(np.diag(t_lab.final_state))
    assert np.max(np.abs(p_rot - p_lab)) < 1e-6


def test_population_helpers():
    rho = Q.ground_state()
    assert Q.population(rho, "excited_surface") == 0.0
    assert Q.population(rho, 2) == 0.0
    assert Q.population(rho, 1) == 1.0
    half = np.zeros((4, 4), complex)
    half[0, 0] = half[1, 1] = 0.5
    assert Q.population(half, "excited_surface") == pytest.approx(1.0)
    with pytest.raises(ValueError):
        Q.population(rho, 5)


def test_ground_mixture():
    rho = Q.ground_mixture([0.25, 0.75])
    assert rho[2, 2] == 0.25 and rho[3, 3] == 0.75
    with pytest.raises(ValueError):
        Q.ground_mixture([0.5, 0.6])


def test_propagate_rejects_bad_grids_and_states():
    gen = Q.lindblad_generator(Q.SystemModel())
    even = P.TimeField(P.TimeGrid(-1.0, 1.0, 10), np.zeros(10, complex))
    with pytest.raises(ValueError, match="odd"):
        Q.propagate(gen, Q.ground_state(), even)
    coarse = P.TimeField(P.TimeGrid(-10.0, 10.0, 21), np.zeros(21, complex))
    with pytest.raises(ValueError, match="too coarse"):
        Q.propagate(gen, Q.ground_state(), coarse)
    field = small_field()
    bad = np.eye(4, dtype=complex)  # trace 4
    with pytest.raises(Q.InvariantViolationError):
        Q.propagate(gen, bad, field)


def test_validator_flags_corrupted_state():
    good = Q.ground_state()
    Q.check_density_matrix(good)
    bad = good.copy()
    bad[0, 1] = 0.5  # not Hermitian
    with pytest.raises(Q.InvariantViolationError, match="hermiticity"):
        Q.check_density_matrix(bad)
    neg = np.diag([1.2, 0.0, 0.0, -0.2]).astype(complex)
    with pytest.raises(Q.InvariantViolationError, match="positivity"):
        Q.check_density_matrix(neg)


def test_stride_stores_final_state():
    gen = Q.lindblad_generator(Q.SystemModel())
    field = small_field()
    m = (field.grid.n_points - 1) // 2
    traj = Q.propagate(gen, Q.ground_state(), field, stride=7)
    assert traj.times[0] == field.grid.t_min
    assert traj.times[-1] == field.grid.t_max
    expected = len(np.arange(0, m + 1, 7)) + (0 if m % 7 == 0 else 1)
    assert traj.states.shape == (expected, 4, 4)


def test_coherence_trace_definition():
    gen = Q.lindblad_generator(Q.SystemModel())
    rng = np.random.default_rng(21)
    rho = random_density(rng)
    dip = gen.mu * gen.coupling_shape[Q.EXCITED, Q.GROUND]
    expected = np.trace(dip @ rho[Q.GROUND, Q.EXCITED])
    assert Q.coherence_trace(rho, gen) == pytest.approx(expected)
