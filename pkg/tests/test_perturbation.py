"""Tests for the ACF-based transfer integrals and their validity conditions."""

import numpy as np
import pytest

from wfpo import perturbation as T
from wfpo import pulse as P
from wfpo import quantum_core as Q

MU = 1e-3
FOUR_PI_32 = 4.0 * np.pi ** 1.5  # |integral eps dt|^2 for the unit-norm pulse


def gaussian_acf(bandwidth=1.0, chirp=0.0):
    grid = Q.propagation_time_grid(bandwidth, chirp)
    field = P.analytic_chirped_gaussian(bandwidth, chirp, 0.0, grid)
    return P.autocorrelation(field), field


# ---------------------------------------------------------------------------
# transition table
# ---------------------------------------------------------------------------

def test_transition_table_reference_values():
    table = T.transition_table(Q.SystemModel(mu=MU))
    by_pair = {(t.ground, t.excited): t for t in table.transitions}
    assert by_pair[(1, 4)].omega_ba == pytest.approx(0.3)
    assert by_pair[(1, 3)].omega_ba == pytest.approx(0.2)
    assert by_pair[(2, 4)].omega_ba == pytest.approx(-0.2)
    assert by_pair[(2, 3)].omega_ba == pytest.approx(-0.3)
    assert by_pair[(1, 4)].mu_ab == pytest.approx(MU * 0.9)
    assert by_pair[(1, 4)].p_a == 1.0
    assert by_pair[(2, 4)].p_a == 0.0


def test_transition_table_weight_validation():
    with pytest.raises(ValueError):
        T.transition_table(Q.SystemModel(), weights=(0.5, 0.6))
    table = T.transition_table(Q.SystemModel(), weights=(0.25, 0.75))
    weights = {t.ground: t.p_a for t in table.transitions}
    assert weights == {1: 0.75, 2: 0.25}


# ---------------------------------------------------------------------------
# delta_n_unitary
# ---------------------------------------------------------------------------

def test_unitary_transfer_closed_form():
    # dN = 4 pi^2 sum_a P(a) |mu_ab|^2 J(w_ba) with J the spectral density
    acf, _ = gaussian_acf()
    table = T.transition_table(Q.SystemModel(mu=MU))
    got = T.delta_n_unitary(table, acf)
    j = lambda w: np.exp(-w * w) / np.sqrt(np.pi)
    ref = 4.0 * np.pi ** 2 * ((MU * 0.9) ** 2 * j(0.3) + (MU * 0.1) ** 2 * j(0.2))
    assert got == pytest.approx(ref, rel=1e-10)


def test_unitary_transfer_resonant_single_transition():
    # at w_ba = 0 the lag integral collapses to |integral eps dt|^2
    acf, _ = gaussian_acf()
    table = T.TransitionTable((T.Transition(1, 3, 0.7, 0.0, 1.0),))
    got = T.delta_n_unitary(table, acf)
    assert got == pytest.approx(0.7 ** 2 * FOUR_PI_32, rel=1e-10)


def test_unitary_transfer_against_double_integral_oracle():
    # brute-force the time-ordered double integral on a coarse grid
    grid = P.TimeGrid(-8.0, 8.0, 1601)
    field = P.analytic_chirped_gaussian(1.0, 0.0, 0.0, grid)
    omega = 0.3
    eps = field.values
    t = grid.times
    dt = grid.spacing
    phase = np.exp(-1j * omega * (t[:, None] - t[None, :]))  # e^{-i w (t2-t1)}
    pair = eps[None, :] * np.conj(eps[:, None]) * phase      # (t2, t1) grid
    lower = np.tril(pair, -1).sum() + 0.5 * np.trace(pair)
    oracle = 2.0 * np.real(lower) * dt * dt

    acf = P.autocorrelation(field)
    table = T.TransitionTable((T.Transition(1, 4, 1.0, omega, 1.0),))
    got = T.delta_n_unitary(table, acf)
    assert got == pytest.approx(oracle, rel=1e-8)


def test_unitary_transfer_chirp_blind():
    table = T.transition_table(Q.SystemModel(mu=MU))
    acf_p, _ = gaussian_acf(chirp=80.0)
    acf_m, _ = gaussian_acf(chirp=-80.0)
    a = T.delta_n_unitary(table, acf_p)
    b = T.delta_n_unitary(table, acf_m)
    assert abs(a - b) < 1e-12 * a


def test_unitary_transfer_zero_dipole():
    acf, _ = gaussian_acf()
    table = T.transition_table(Q.SystemModel(mu=0.0))
    assert T.delta_n_unitary(table, acf) == 0.0


def test_truncated_acf_rejected():
    lags = np.linspace(-2.0, 2.0, 401)
    vals = 2 * np.pi * np.exp(-lags ** 2 / 4.0)  # still ~0.37 of peak at the ends
    trace = P.CorrelationTrace(lags, vals.astype(complex))
    table = T.transition_table(Q.SystemModel())
    with pytest.raises(ValueError, match="truncated"):
        T.delta_n_unitary(table, trace)


# ---------------------------------------------------------------------------
# propagators
# ---------------------------------------------------------------------------

def test_propagator_identity_and_composition():
    prop = T.model_propagator(Q.SystemModel(gamma=0.3))
    rng = np.random.default_rng(4)
    x = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    assert np.max(np.abs(prop(x, 0.0) - x)) < 1e-12
    for _ in range(50):
        t1, t2 = rng.uniform(0.0, 3.0, size=2)
        direct = prop(x, t1 + t2)
        composed = prop(prop(x, t2), t1)
        assert np.max(np.abs(direct - composed)) < 1e-9 * np.max(np.abs(direct))


def test_model_propagator_matches_expm():
    from scipy.linalg import expm
    m = Q.SystemModel(gamma=0.4)
    prop = T.model_propagator(m)
    lv = prop.generator
    rng = np.random.default_rng(9)
    x = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    for tau in (0.3, 1.7):
        ref = (expm(lv * tau) @ x.reshape(16)).reshape(4, 4)
        assert np.max(np.abs(prop(x, tau) - ref)) < 1e-11


def test_validation_passes_for_model_propagator():
    prop = T.model_propagator(Q.SystemModel(gamma=0.5))
    T.validate_propagator(prop, Q.ground_state())


def test_validation_rejects_surface_coupling():
    # electronic relaxation |1><4| transfers population between surfaces
    m = Q.SystemModel(gamma=0.0)
    s = np.zeros((4, 4), complex)
    s[3, 0] = np.sqrt(0.2)
    lv = T._liouvillian_matrix(Q.build_rotating_frame_h0(m), (s,))
    prop = T.CoherencePropagator("external", generator=lv)
    with pytest.raises(T.AxiomViolationError, match="surface-trace"):
        T.validate_propagator(prop, Q.ground_state())


def test_validation_rejects_pumped_initial_state():
    # a ground-surface pump keeps the surfaces decoupled but moves rho0
    m = Q.SystemModel(gamma=0.0)
    s = np.zeros((4, 4), complex)
    s[2, 3] = np.sqrt(0.2)  # level 1 -> level 2
    lv = T._liouvillian_matrix(Q.build_rotating_frame_h0(m), (s,))
    prop = T.CoherencePropagator("external", generator=lv)
    with pytest.raises(T.AxiomViolationError, match="initial-state"):
        T.validate_propagator(prop, Q.ground_state())


def test_validation_rejects_inhomogeneous_map():
    decay = lambda x, tau: x * np.exp(-tau ** 2)
    prop = T.external_propagator(decay)
    with pytest.raises(T.AxiomViolationError, match="homogeneity"):
        T.validate_propagator(prop, Q.ground_state())


# ---------------------------------------------------------------------------
# delta_n_lgks / delta_n_general
# ---------------------------------------------------------------------------

def test_lgks_reduces_to_unitary_without_jumps():
    m = Q.SystemModel(gamma=0.0, mu=MU)
    acf, _ = gaussian_acf()
    table = T.transition_table(m)
    a = T.delta_n_unitary(table, acf)
    b = T.delta_n_lgks(table, acf, T.model_propagator(m), T.dipole_operator(m))
    assert abs(a - b) < 1e-10 * a


def test_general_with_lgks_propagator_matches():
    m = Q.SystemModel(gamma=0.2, mu=MU)
    acf, _ = gaussian_acf()
    table = T.transition_table(m)
    prop = T.model_propagator(m)
    dip = T.dipole_operator(m)
    assert (T.delta_n_general(acf, prop, table, dip)
            == T.delta_n_lgks(table, acf, prop, dip))


def test_general_rejects_surface_coupling_propagator():
    m = Q.SystemModel(gamma=0.0, mu=MU)
    s = np.zeros((4, 4), complex)
    s[3, 0] = 1.0
    lv = T._liouvillian_matrix(Q.build_rotating_frame_h0(m), (s,))
    prop = T.CoherencePropagator("external", generator=lv)
    acf, _ = gaussian_acf()
    table = T.transition_table(m)
    with pytest.raises(T.AxiomViolationError, match="surface-trace"):
        T.delta_n_general(acf, prop, table, T.dipole_operator(m))


def excited_dephasing_propagator(model, kappa4, kappa3):
    """Analytic map: free phases plus dephasing of excited coherences."""
    energies = np.real(np.diag(Q.build_rotating_frame_h0(model)))
    kappa = np.array([kappa4, kappa3, 0.0, 0.0])

    def apply(x, tau):
        phases = np.exp(-1j * np.subtract.outer(energies, energies) * tau)
        decay = np.exp(-0.5 * np.add.outer(kappa, kappa) * tau)
        decay[np.diag_indices(4)] = 1.0
        return x * phases * decay

    return T.external_propagator(apply)


def test_every_transfer_route_is_mask_blind():
    # fixed spectral amplitude: the unitary, dissipative and injected-
    # dephasing routes must all return mask-independent transfers
    m = Q.SystemModel(gamma=0.0, mu=MU)
    mg = m.with_params(gamma=0.15)
    dephasing = excited_dephasing_propagator(m, 0.23, 0.11)
    T.validate_propagator(dephasing, Q.ground_state())
    lgks = T.model_propagator(mg)
    table = T.transition_table(m)
    dip = T.dipole_operator(m)

    pulse = P.synth_chirped_gaussian(1.0, 0.0)
    # pad the window with the group delay the random masks can add
    tgrid = P.default_time_grid(1.0, 0.0, match=pulse.grid,
                                padding=1.25 * P.mask_group_delay_bound(pulse.grid))
    rng = np.random.default_rng(17)
    routes = {"unitary": [], "lgks": [], "eq22": []}
    masks = [np.zeros(pulse.grid.n_points)]
    masks += [P.random_smooth_phase_mask(pulse.grid, rng) for _ in range(10)]
    for mask in masks:
        masked = P.apply_phase_mask(pulse, mask)
        acf = P.autocorrelation(P.to_time_domain(masked, tgrid))
        routes["unitary"].append(T.delta_n_unitary(table, acf))
        routes["lgks"].append(T.delta_n_lgks(table, acf, lgks, dip))
        routes["eq22"].append(T.delta_n_general(acf, dephasing, table, dip))
    for name, values in routes.items():
        spread = (max(values) - min(values)) / values[0]
        assert spread < 1e-8, f"{name} route varies with the mask: {spread:.2e}"


def test_lgks_against_full_propagation_residual_order():
    # the defect of the leading-order value scales as the 4th power of mu
    gamma = 0.1
    grid = Q.propagation_time_grid(1.0, 0.0)
    field = P.analytic_chirped_gaussian(1.0, 0.0, 0.0, grid)
    acf = P.autocorrelation(field)
    mus = np.array([3e-4, 6e-4, 1.2e-3, 2.4e-3])
    residuals = []
    for mu in mus:
        m = Q.SystemModel(mu=mu, gamma=gamma)
        traj = Q.propagate(Q.lindblad_generator(m), Q.ground_state(), field,
                           stride=10 ** 6)
        full = Q.population(traj.final_state, "excited_surface")
        pert = T.delta_n_lgks(T.transition_table(m), acf,
                              T.model_propagator(m), T.dipole_operator(m))
        assert abs(full - pert) < 1e-4 * full  # mu^2-relative separation
        residuals.append(abs(full - pert))
    slope = np.polyfit(np.log(mus), np.log(residuals), 1)[0]
    assert slope == pytest.approx(4.0, abs=0.3)


# ---------------------------------------------------------------------------
# energy absorption
# ---------------------------------------------------------------------------

def test_energy_zero_field():
    m = Q.SystemModel(mu=MU, gamma=0.1)
    gen = Q.lindblad_generator(m)
    grid = Q.propagation_time_grid(1.0, 0.0, dt=0.01)
    field = P.TimeField(grid, np.zeros(grid.n_points, complex))
    traj = Q.propagate(gen, Q.ground_state(), field, stride=1)
    de, dn = T.energy_absorption(traj, field)
    assert de == 0.0 and dn == 0.0


def test_transfer_rate_integral_matches_population():
    m = Q.SystemModel(mu=MU, gamma=0.1)
    gen = Q.lindblad_generator(m)
    grid = Q.propagation_time_grid(1.0, 0.0, dt=2.5e-4)
    field = P.analytic_chirped_gaussian(1.0, 0.0, 0.0, grid)
    dfield = P.analytic_chirped_gaussian_derivative(1.0, 0.0, 0.0, grid)
    traj = Q.propagate(gen, Q.ground_state(), field, stride=1)
    _, dn = T.energy_absorption(traj, field, dfield)
    ne = Q.population(traj.final_state, "excited_surface")
    assert abs(dn - ne) < 1e-8 * ne


def test_adiabatic_energy_per_quantum():
    # light version of the lab-frame run: tau0 = 20, with the off-resonant
    # line pushed far outside the (wider) pulse bandwidth
    carrier, bw = 10.0, 0.05
    m = Q.SystemModel(detuning=0.0, gamma=0.0, mu=MU, omega_e=1.0)
    gen = Q.lindblad_generator(m, frame="lab", carrier=carrier)
    grid = Q.propagation_time_grid(bw, 0.0, dt=0.004)
    field = P.analytic_chirped_gaussian(bw, 0.0, carrier, grid)
    dfield = P.analytic_chirped_gaussian_derivative(bw, 0.0, carrier, grid)
    traj = Q.propagate(gen, Q.ground_state(), field, stride=2)
    de, dn = T.energy_absorption(traj, field, dfield)
    assert abs(de / (carrier * dn) - 1.0) < 1e-3


def test_stride_diagnostic_rejects_coarse_storage():
    m = Q.SystemModel(mu=MU, gamma=0.1)
    gen = Q.lindblad_generator(m)
    grid = Q.propagation_time_grid(1.0, 0.0, dt=0.01)
    field = P.analytic_chirped_gaussian(1.0, 0.0, 0.0, grid)
    traj = Q.propagate(gen, Q.ground_state(), field, stride=200)
    with pytest.raises(ValueError, match="stride"):
        T.energy_absorption(traj, field)


def test_energy_grid_mismatch_rejected():
    m = Q.SystemModel(mu=MU, gamma=0.1)
    gen = Q.lindblad_generator(m)
    grid = Q.propagation_time_grid(1.0, 0.0, dt=0.01)
    field = P.analytic_chirped_gaussian(1.0, 0.0, 0.0, grid)
    traj = Q.propagate(gen, Q.ground_state(), field, stride=10)
    other = P.analytic_chirped_gaussian(1.0, 0.0, 0.0,
                                        P.TimeGrid(-9.0, 9.0, 1001))
    with pytest.raises(ValueError, match="grid"):
        T.energy_absorption(traj, other)


# ---------------------------------------------------------------------------
# adiabaticity
# ---------------------------------------------------------------------------

def test_adiabaticity_gaussian_values():
    # max |t|/tau0^2 over the support where |env| > 1e-6 of peak:
    # |t|max = tau0 sqrt(2 ln 1e6), so the ratio is sqrt(2 ln 1e6)/(tau0 w)
    for tau0, carrier in ((100.0, 10.0), (0.1, 1.0)):
        bw = 1.0 / tau0
        grid = Q.propagation_time_grid(bw, 0.0, dt=min(0.004, tau0 / 400))
        field = P.analytic_chirped_gaussian(bw, 0.0, carrier, grid)
        expected = np.sqrt(2.0 * np.log(1e6)) / (tau0 * carrier)
        got = T.adiabaticity(field)
        assert got == pytest.approx(expected, rel=5e-3)
    assert np.sqrt(2.0 * np.log(1e6)) / (100.0 * 10.0) < 1e-2  # adiabatic
    assert np.sqrt(2.0 * np.log(1e6)) / (0.1 * 1.0) > 1.0      # not adiabatic


def test_adiabaticity_constant_envelope_and_zero_carrier():
    grid = P.TimeGrid(-1.0, 1.0, 101)
    flat = P.TimeField(grid, np.exp(-1j * 3.0 * grid.times), carrier=3.0)
    assert T.adiabaticity(flat) < 1e-12
    with pytest.raises(ValueError, match="carrier"):
        T.adiabaticity(P.TimeField(grid, np.ones(101, complex), carrier=0.0))


def test_transfer_record():
    rec = T.transfer_record("eq17", 1e-5, {"mu": 1e-3}, delta_e=None)
    assert rec["method"] == "eq17" and rec["delta_n"] == 1e-5
    with pytest.raises(ValueError):
        T.transfer_record("eq16", 0.0, {})
