"""Leading-order population transfer computed from the field autocorrelation.

Second-order perturbation theory in Liouville space gives the transfer to
the excited surface as a lag integral of the field ACF against propagated
dipole coherences,

    dN = sum_a P(a) * integral_0^inf  [ C*(tau) <b| U0(tau) Theta_a |theta_b>
                                        + c.c. ]  dtau / hbar^2

with Theta_a = mu_hat|a><a| and |theta_b> = mu_hat|b>.  For purely unitary
field-free dynamics the matrix element collapses to |mu_ab|^2 e^{-i w_ba tau};
any field-free propagator that is time-homogeneous, leaves the initial state
invariant and does not couple the surfaces yields the same ACF-only
structure, which is what makes weak-field transfer phase-blind at this
order.  hbar = 1 throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.linalg import expm

from .pulse import CorrelationTrace, TimeField
from .quantum_core import (EXCITED, GROUND, LindbladGenerator, SystemModel,
                           Trajectory, build_coupling, build_lab_frame_h0,
                           build_rotating_frame_h0, jump_operator, level_index)

#: |C| is integrated out to where it falls below this fraction of its peak.
ACF_TRUNCATION = 1e-12

#: Required decay of |C| at the trace's largest available lag.
ACF_TAIL_LIMIT = 1e-10

AXIOM_TOL = 1e-9


class AxiomViolationError(ValueError):
    """A field-free propagator failed one of the validity conditions."""

    def __init__(self, axiom: str, defect: float):
        self.axiom = axiom
        super().__init__(f"propagator violates {axiom} (defect {defect:.3g})")


# ---------------------------------------------------------------------------
# Transition bookkeeping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Transition:
    ground: int      # level label 1..2
    excited: int     # level label 3..4
    mu_ab: complex   # dipole matrix element (coupling strength included)
    omega_ba: float  # transition frequency, excited minus ground
    p_a: float       # initial weight of the ground level


@dataclass(frozen=True)
class TransitionTable:
    """Dipole-connected level pairs with initial ground-state weights."""

    transitions: tuple[Transition, ...]

    def __post_init__(self):
        weights = {}
        for t in self.transitions:
            if not np.isfinite(t.omega_ba):
                raise ValueError("omega_ba must be finite")
            weights[t.ground] = t.p_a
        total = sum(weights.values())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"ground-level weights sum to {total}, not 1")


def transition_table(model: SystemModel, weights=(0.0, 1.0),
                     frame: str = "rotating", carrier: float = 0.0) -> TransitionTable:
    """All four dipole transitions of the model.

    `weights` are the initial populations of (level 2, level 1).  Frequencies
    come from the same Hamiltonian the propagator uses, so the perturbative
    and exact routes share their spectrum.
    """
    if frame == "rotating":
        h0 = build_rotating_frame_h0(model)
    else:
        h0 = build_lab_frame_h0(model, carrier)
    energies = np.real(np.diag(h0))
    fc = {(1, 4): model.f14, (1, 3): model.f13,
          (2, 4): model.f24, (2, 3): model.f23}
    p = {2: float(weights[0]), 1: float(weights[1])}
    if abs(p[1] + p[2] - 1.0) > 1e-12:
        raise ValueError("weights must sum to 1")
    rows = []
    for (a, b), f in sorted(fc.items()):
        omega = energies[level_index(b)] - energies[level_index(a)]
        rows.append(Transition(a, b, model.mu * f, omega, p[a]))
    return TransitionTable(tuple(rows))


def dipole_operator(model: SystemModel) -> np.ndarray:
    """Full dipole operator mu_hat = mu * Franck-Condon pattern."""
    return model.mu * build_coupling(model)


# ---------------------------------------------------------------------------
# Field-free coherence propagators
# ---------------------------------------------------------------------------

def _liouvillian_matrix(h0: np.ndarray, jumps) -> np.ndarray:
    """16x16 generator of dvec(rho)/dt for row-major vec()."""
    eye = np.eye(4)
    lv = -1j * (np.kron(h0, eye) - np.kron(eye, h0.T))
    for s in jumps:
        sd = s.conj().T
        sds = sd @ s
        lv += (np.kron(s, s.conj())
               - 0.5 * (np.kron(sds, eye) + np.kron(eye, sds.T)))
    return lv


@dataclass(frozen=True)
class CoherencePropagator:
    """Field-free propagator U0(tau) acting on 4x4 matrices.

    kind is 'unitary', 'lgks' or 'external'.  Generator-backed propagators
    evaluate exp(tau * L) through an eigendecomposition (with an expm
    fallback if L is defective); func-backed ones defer to the callable.
    At tau = 0 the map is the identity, and generator-backed maps satisfy
    the semigroup composition property by construction.
    """

    kind: str
    generator: np.ndarray | None = None
    func: Callable[[np.ndarray, float], np.ndarray] | None = None

    def __post_init__(self):
        if (self.generator is None) == (self.func is None):
            raise ValueError("provide exactly one of generator or func")
        if self.generator is not None:
            g = np.ascontiguousarray(self.generator, dtype=complex)
            if g.shape != (16, 16):
                raise ValueError("generator must be 16x16")
            object.__setattr__(self, "generator", g)
            evals, evecs = np.linalg.eig(g)
            try:
                inv = np.linalg.inv(evecs)
                ok = np.linalg.cond(evecs) < 1e10
            except np.linalg.LinAlgError:
                ok = False
                inv = None
            object.__setattr__(self, "_eig", (evals, evecs, inv) if ok else None)

    def __call__(self, theta: np.ndarray, tau: float) -> np.ndarray:
        if self.func is not None:
            return self.func(theta, tau)
        return self.evolve_many(theta, np.array([tau]))[0]

    def evolve_many(self, theta: np.ndarray, taus: np.ndarray) -> np.ndarray:
        """U0(tau) theta for every lag; shape (n_taus, 4, 4)."""
        taus = np.asarray(taus, dtype=float)
        if self.func is not None:
            return np.stack([self.func(theta, t) for t in taus])
        v = np.asarray(theta, dtype=complex).reshape(16)
        eig = getattr(self, "_eig", None)
        if eig is not None:
            evals, evecs, inv = eig
            coeff = inv @ v
            phases = np.exp(np.outer(taus, evals))
            return ((phases * coeff) @ evecs.T).reshape(-1, 4, 4)
        return np.stack([(expm(self.generator * t) @ v).reshape(4, 4)
                         for t in taus])


def hamiltonian_propagator(h0: np.ndarray) -> CoherencePropagator:
    """Purely unitary field-free propagator exp(-i[H0, .] tau)."""
    return CoherencePropagator("unitary", generator=_liouvillian_matrix(h0, ()))


def lgks_propagator(gen: LindbladGenerator) -> CoherencePropagator:
    """Propagator of the model's full field-free generator (jumps included)."""
    lv = _liouvillian_matrix(gen.hamiltonian_static, gen.jump_ops)
    return CoherencePropagator("lgks", generator=lv)


def model_propagator(model: SystemModel, frame: str = "rotating",
                     carrier: float = 0.0) -> CoherencePropagator:
    h0 = (build_rotating_frame_h0(model) if frame == "rotating"
          else build_lab_frame_h0(model, carrier))
    jumps = (jump_operator(model),) if model.gamma > 0 else ()
    kind = "lgks" if jumps else "unitary"
    return CoherencePropagator(kind, generator=_liouvillian_matrix(h0, jumps))


def external_propagator(func: Callable[[np.ndarray, float], np.ndarray]) -> CoherencePropagator:
    """Wrap a user-supplied field-free propagator; validated before use."""
    return CoherencePropagator("external", func=func)


def validate_propagator(prop: CoherencePropagator, rho0: np.ndarray,
                        seed: int = 0, n_checks: int = 8,
                        tau_scale: float = 2.0) -> None:
    """Check the conditions under which the ACF-only expression holds.

    Verifies, on random inputs: identity at tau = 0; time-homogeneity via
    the composition property U0(t1+t2) = U0(t1) U0(t2); invariance of the
    initial state; conservation of the excited-surface trace.  Raises
    AxiomViolationError naming the first failed condition.
    """
    rng = np.random.default_rng(seed)

    def rand_matrix():
        return rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))

    x = rand_matrix()
    defect = float(np.max(np.abs(prop(x, 0.0) - x)))
    if defect > AXIOM_TOL:
        raise AxiomViolationError("identity at zero lag", defect)

    for _ in range(n_checks):
        x = rand_matrix()
        t1, t2 = rng.uniform(0.0, tau_scale, size=2)
        direct = prop(x, t1 + t2)
        composed = prop(prop(x, t2), t1)
        defect = float(np.max(np.abs(direct - composed)) / max(np.max(np.abs(direct)), 1e-30))
        if defect > AXIOM_TOL:
            raise AxiomViolationError("time-homogeneity (composition)", defect)

    for _ in range(n_checks):
        tau = rng.uniform(0.0, tau_scale)
        defect = float(np.max(np.abs(prop(rho0, tau) - rho0)))
        if defect > AXIOM_TOL:
            raise AxiomViolationError("initial-state invariance", defect)

    for _ in range(n_checks):
        rho = rand_matrix()
        rho = rho + rho.conj().T
        tau = rng.uniform(0.0, tau_scale)
        before = np.trace(rho[EXCITED, EXCITED])
        after = np.trace(prop(rho, tau)[EXCITED, EXCITED])
        defect = float(abs(after - before))
        if defect > AXIOM_TOL * max(1.0, abs(before)):
            raise AxiomViolationError("surface-trace conservation", defect)


# ---------------------------------------------------------------------------
# Transfer integrals
# ---------------------------------------------------------------------------

def _acf_quadrature_lags(acf: CorrelationTrace):
    lags, vals = acf.nonnegative_half()
    cmax = float(np.max(np.abs(acf.values)))
    if cmax == 0.0:
        return lags[:1], vals[:1]
    tail = float(np.abs(vals[-1]))
    if tail > ACF_TAIL_LIMIT * cmax:
        raise ValueError(
            f"ACF is truncated: |C| at the largest lag is {tail / cmax:.2e} "
            f"of peak, above {ACF_TAIL_LIMIT:g}")
    keep = np.nonzero(np.abs(vals) >= ACF_TRUNCATION * cmax)[0]
    stop = keep[-1] + 1 if keep.size else 1
    return lags[:stop], vals[:stop]


def delta_n_unitary(table: TransitionTable, acf: CorrelationTrace) -> float:
    """Leading-order transfer for unitary field-free dynamics.

    dN = sum P(a) |mu_ab|^2 * 2 Re integral_0^inf C*(tau) e^{-i w_ba tau} dtau
    """
    lags, vals = _acf_quadrature_lags(acf)
    total = 0.0
    for t in table.transitions:
        kernel = np.exp(-1j * t.omega_ba * lags)
        integral = np.trapezoid(np.conj(vals) * kernel, lags)
        total += t.p_a * abs(t.mu_ab) ** 2 * 2.0 * np.real(integral)
    if total < -1e-9:
        raise RuntimeError(f"negative leading-order transfer {total:g}")
    return float(total)


def _theta_matrices(table: TransitionTable, dipole: np.ndarray):
    """Initial dipole coherences Theta_a = mu_hat |a><a| per ground level."""
    out = []
    seen = set()
    for t in table.transitions:
        if t.ground in seen:
            continue
        seen.add(t.ground)
        ia = level_index(t.ground)
        theta = np.zeros((4, 4), dtype=complex)
        theta[:, ia] = dipole[:, ia]
        out.append((t.p_a, theta))
    return out


def _delta_n_propagated(table: TransitionTable, acf: CorrelationTrace,
                        prop: CoherencePropagator, dipole: np.ndarray) -> float:
    lags, vals = _acf_quadrature_lags(acf)
    dipole = np.asarray(dipole, dtype=complex)
    total = 0.0
    for p_a, theta in _theta_matrices(table, dipole):
        evolved = prop.evolve_many(theta, lags)
        # sum_b <b| U0(tau) Theta_a |theta_b> over excited b
        m = np.einsum("tij,ji->t", evolved[:, EXCITED, :], dipole[:, EXCITED])
        integral = np.trapezoid(np.conj(vals) * m, lags)
        total += p_a * 2.0 * np.real(integral)
    return float(total)


def delta_n_lgks(table: TransitionTable, acf: CorrelationTrace,
                 prop: CoherencePropagator, dipole: np.ndarray) -> float:
    """Leading-order transfer with a dissipative field-free propagator.

    Reduces to delta_n_unitary when the propagator is generated by the bare
    Hamiltonian.  The only field dependence is through the ACF.
    """
    return _delta_n_propagated(table, acf, prop, dipole)


def delta_n_general(acf: CorrelationTrace, prop: CoherencePropagator,
                    table: TransitionTable, dipole: np.ndarray,
                    rho0: np.ndarray | None = None) -> float:
    """Transfer for a general injected propagator.

    External propagators must first pass the validity conditions
    (time-homogeneity, initial-state invariance, surface-trace
    conservation); the initial state defaults to the table's ground
    mixture.

    Raises
    ------
    AxiomViolationError
        If a condition fails, naming it.
    """
    if prop.kind == "external":
        if rho0 is None:
            rho0 = np.zeros((4, 4), dtype=complex)
            seen = set()
            for t in table.transitions:
                if t.ground not in seen:
                    seen.add(t.ground)
                    rho0[level_index(t.ground), level_index(t.ground)] = t.p_a
        validate_propagator(prop, rho0)
    return _delta_n_propagated(table, acf, prop, dipole)


# ---------------------------------------------------------------------------
# Energy absorption and adiabaticity
# ---------------------------------------------------------------------------

class EnergyTransfer(NamedTuple):
    delta_e: float
    delta_n: float


def energy_absorption(traj: Trajectory, field: TimeField,
                      dfield: TimeField | None = None) -> EnergyTransfer:
    """Absorbed energy and transferred population from the stored coherences.

    delta_e = 2 Re integral (d eps/dt) tr(mu_hat rho_c) dt
    delta_n = 2 Im integral eps(t) tr(mu_hat rho_c) dt

    Both are trapezoidal integrals over the trajectory's stored steps.
    `dfield` supplies the exact field derivative; without it a second-order
    finite difference of `field` is used.  A stride diagnostic compares the
    integral against its half-resolution restriction and rejects
    trajectories stored too coarsely.

    Raises
    ------
    ValueError
        If the trajectory and field grids disagree, or the stored stride is
        too coarse for the requested integrals to have converged.
    """
    t = traj.times
    grid = field.grid
    idx = np.round((t - grid.t_min) / grid.spacing).astype(int)
    if (np.max(np.abs(grid.t_min + idx * grid.spacing - t))
            > 1e-9 * max(grid.spacing, 1e-300)):
        raise ValueError("trajectory times do not lie on the field grid")
    eps = field.values[idx]
    if dfield is not None:
        deps = dfield.values[idx]
    else:
        deps = np.gradient(field.values, grid.spacing)[idx]
    coh = traj.coherence

    def integrals(sel):
        de = 2.0 * np.real(np.trapezoid(deps[sel] * coh[sel], t[sel]))
        dn = 2.0 * np.imag(np.trapezoid(eps[sel] * coh[sel], t[sel]))
        return de, dn

    every = np.arange(t.size)
    de_full, dn_full = integrals(every)
    de_half, dn_half = integrals(every[::2])
    scale = max(abs(de_full), abs(dn_full))
    if scale > 0.0:
        drift = max(abs(de_full - de_half), abs(dn_full - dn_half)) / scale
        if drift > 1e-6:
            raise ValueError(
                f"stored stride too coarse: halving the sampling changes the "
                f"integrals by {drift:.2e} (limit 1e-6)")
    return EnergyTransfer(float(de_full), float(dn_full))


def adiabaticity(field: TimeField, floor: float = 1e-6) -> float:
    """max |dLambda/dt / Lambda| / carrier over the supported envelope.

    Lambda is the complex envelope after removing the carrier rotation.
    Values well below 1 indicate the absorbed energy per transferred
    population approaches the carrier frequency.

    Raises
    ------
    ValueError
        If the field has no carrier (ratio undefined) or no support.
    """
    if field.carrier == 0.0:
        raise ValueError("adiabaticity requires a nonzero carrier")
    t = field.grid.times
    envelope = field.values * np.exp(1j * field.carrier * t)
    mag = np.abs(envelope)
    peak = float(mag.max())
    if peak == 0.0:
        raise ValueError("field has no support")
    denv = np.gradient(envelope, field.grid.spacing)
    sel = mag > floor * peak
    ratio = np.abs(denv[sel]) / mag[sel]
    return float(ratio.max() / abs(field.carrier))


def transfer_record(method: str, delta_n: float, params: dict,
                    delta_e: float | None = None) -> dict:
    """JSON-ready record for one transfer computation."""
    if method not in ("eq15", "eq17", "eq22", "full"):
        raise ValueError(f"unknown method tag {method!r}")
    return {"method": method, "delta_n": delta_n, "delta_e": delta_e,
            "params": dict(params)}
