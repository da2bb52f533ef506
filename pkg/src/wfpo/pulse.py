"""Chirped Gaussian pulses and their correlation diagnostics.

Pulses are defined on a frequency grid by a non-negative amplitude and a real
spectral phase.  The time-domain field follows the convention

    eps(t) = integral dw  eps~(w) exp(-i w t)

with no 2*pi prefactor, so Parseval reads  integral |eps(t)|^2 dt
= 2*pi * integral |eps~(w)|^2 dw.  All synthesized pulses are normalized to
unit spectral energy, integral |eps~|^2 dw = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import czt

TWO_PI = 2.0 * np.pi

#: Parseval constant of the adopted transform convention.
PARSEVAL_CONSTANT = TWO_PI

#: Relative level below which the field must have decayed at the grid ends.
BOUNDARY_DECAY = 1e-12

SPECTRAL_NORM_TOL = 1e-8
NORM_DEFICIT_LIMIT = 1e-6


class GridError(ValueError):
    """A frequency or time grid is too narrow/short for the requested pulse."""


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform angular-frequency grid [omega_min, omega_max], endpoints included."""

    omega_min: float
    omega_max: float
    n_points: int

    def __post_init__(self):
        if not self.omega_min < self.omega_max:
            raise ValueError("omega_min must be < omega_max")
        if self.n_points < 2:
            raise ValueError("n_points must be >= 2")

    @property
    def spacing(self) -> float:
        return (self.omega_max - self.omega_min) / (self.n_points - 1)

    @property
    def omegas(self) -> np.ndarray:
        w = np.linspace(self.omega_min, self.omega_max, self.n_points)
        w.setflags(write=False)
        return w


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid [t_min, t_max], endpoints included."""

    t_min: float
    t_max: float
    n_points: int

    def __post_init__(self):
        if not self.t_min < self.t_max:
            raise ValueError("t_min must be < t_max")
        if self.n_points < 2:
            raise ValueError("n_points must be >= 2")

    @property
    def spacing(self) -> float:
        return (self.t_max - self.t_min) / (self.n_points - 1)

    @property
    def times(self) -> np.ndarray:
        t = np.linspace(self.t_min, self.t_max, self.n_points)
        t.setflags(write=False)
        return t


def _next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def default_frequency_grid(bandwidth: float, carrier: float = 0.0, chirp: float = 0.0,
                           halfwidth: float = 10.0, n_points: int | None = None) -> FrequencyGrid:
    """Frequency grid spanning carrier +- halfwidth*bandwidth.

    The point count adapts to the chirp: the discrete synthesis is periodic
    in time with period 2*pi/dw, so dw must be fine enough that the periodic
    images stay well clear of the +-8*tau_ch window used in the time domain.
    """
    span = 2.0 * halfwidth * bandwidth
    if n_points is None:
        t_span = 2.0 * 8.0 * chirped_duration(bandwidth, chirp)
        dw_max = TWO_PI / (2.5 * t_span)
        n_points = _next_pow2(max(4096, int(np.ceil(span / dw_max))))
    return FrequencyGrid(carrier - halfwidth * bandwidth,
                         carrier + halfwidth * bandwidth, n_points)


def default_time_grid(bandwidth: float, chirp: float, halfwidth: float = 8.0,
                      match: FrequencyGrid | None = None,
                      carrier: float = 0.0, padding: float = 0.0) -> TimeGrid:
    """Symmetric time grid covering +- halfwidth chirp-extended durations.

    The sample spacing stays below the Nyquist spacing for spectral content
    out to |carrier| + 12.5*bandwidth.  When `match` is given (or by
    default, matching the default frequency grid) the spacing is tuned so
    that dw*dt divides 2*pi exactly, which lets the discrete transform run
    through an FFT with exact twiddle phases instead of a chirp-z transform.
    `padding` widens the span by an absolute amount (for phase masks that
    add group delay).
    """
    span = halfwidth * chirped_duration(bandwidth, chirp) + padding
    dt_max = np.pi / (abs(carrier) + 12.5 * bandwidth)
    if match is None:
        match = default_frequency_grid(bandwidth, carrier, chirp)
    nfft = _next_pow2(int(np.ceil(TWO_PI / (match.spacing * dt_max))))
    dt = TWO_PI / (nfft * match.spacing)
    half_steps = int(np.ceil(span / dt))
    return TimeGrid(-half_steps * dt, half_steps * dt, 2 * half_steps + 1)


def period_time_grid(wgrid: FrequencyGrid, bandwidth: float) -> TimeGrid:
    """Time grid spanning exactly one synthesis period 2*pi/dw.

    On this window the discrete frequency components are mutually orthogonal
    under the sample sum, which is the discrete counterpart of the
    infinite integration limits assumed by the correlation identities.  The
    single-bin phase-sensitivity probes are evaluated on this grid; shorter
    windows leave an O(amplitude^2 * dw) window artifact in the estimate.
    """
    dt_max = np.pi / (12.5 * bandwidth)
    nfft = _next_pow2(int(np.ceil(TWO_PI / (wgrid.spacing * dt_max))))
    dt = TWO_PI / (nfft * wgrid.spacing)
    half = nfft // 2
    return TimeGrid(-half * dt, (nfft - 1 - half) * dt, nfft)


# ---------------------------------------------------------------------------
# Pulse containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralPulse:
    """Field in the frequency domain: eps~(w) = amplitude(w) * exp(i*phase(w)).

    Immutable after construction; arrays are read-only views.
    """

    grid: FrequencyGrid
    amplitude: np.ndarray
    phase: np.ndarray
    carrier: float
    bandwidth: float
    chirp: float

    def __post_init__(self):
        amp = np.ascontiguousarray(self.amplitude, dtype=float)
        ph = np.ascontiguousarray(self.phase, dtype=float)
        if amp.shape != (self.grid.n_points,) or ph.shape != (self.grid.n_points,):
            raise ValueError("amplitude/phase length must match the grid")
        if not np.all(np.isfinite(amp)) or not np.all(np.isfinite(ph)):
            raise ValueError("amplitude and phase must be finite")
        if np.any(amp < 0):
            raise ValueError("amplitude must be non-negative")
        amp.setflags(write=False)
        ph.setflags(write=False)
        object.__setattr__(self, "amplitude", amp)
        object.__setattr__(self, "phase", ph)

    @property
    def values(self) -> np.ndarray:
        """Complex spectrum amplitude * exp(i*phase)."""
        return self.amplitude * np.exp(1j * self.phase)

    def spectral_norm(self) -> float:
        """integral |eps~(w)|^2 dw by trapezoidal quadrature."""
        return float(np.trapezoid(self.amplitude ** 2, dx=self.grid.spacing))


@dataclass(frozen=True)
class TimeField:
    """Complex field samples on a uniform time grid."""

    grid: TimeGrid
    values: np.ndarray
    carrier: float = 0.0

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=complex)
        if v.shape != (self.grid.n_points,):
            raise ValueError("values length must match the grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def boundary_decay_ok(self, level: float = BOUNDARY_DECAY) -> bool:
        peak = float(np.max(np.abs(self.values)))
        if peak == 0.0:
            return True
        edges = max(abs(self.values[0]), abs(self.values[-1]))
        return edges <= level * peak

    def energy(self) -> float:
        """integral |eps(t)|^2 dt."""
        return float(np.trapezoid(np.abs(self.values) ** 2, dx=self.grid.spacing))


@dataclass(frozen=True)
class CorrelationTrace:
    """Complex correlation values on a symmetric lag grid."""

    lags: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        lags = np.ascontiguousarray(self.lags, dtype=float)
        vals = np.ascontiguousarray(self.values, dtype=complex)
        if lags.shape != vals.shape:
            raise ValueError("lags and values must have equal length")
        lags.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "values", vals)

    @property
    def spacing(self) -> float:
        return float(self.lags[1] - self.lags[0])

    def at_zero(self) -> complex:
        return complex(self.values[np.argmin(np.abs(self.lags))])

    def nonnegative_half(self) -> tuple[np.ndarray, np.ndarray]:
        """(lags, values) restricted to lags >= 0."""
        sel = self.lags >= -0.5 * self.spacing
        return self.lags[sel], self.values[sel]


# ---------------------------------------------------------------------------
# Synthesis
# ---------------------------------------------------------------------------

def unchirped_duration(bandwidth: float) -> float:
    """Duration of the transform-limited pulse, 1/bandwidth."""
    return 1.0 / bandwidth


def chirped_duration(bandwidth: float, chirp: float) -> float:
    """Stretched duration tau_ch = tau_0 * sqrt(1 + 4*chirp^2/tau_0^4)."""
    tau0 = unchirped_duration(bandwidth)
    return tau0 * np.sqrt(1.0 + 4.0 * chirp ** 2 / tau0 ** 4)


def synth_chirped_gaussian(bandwidth: float, chirp: float, carrier: float = 0.0,
                           grid: FrequencyGrid | None = None) -> SpectralPulse:
    """Build a unit-energy Gaussian pulse with quadratic spectral phase.

    amplitude(w) = pi^(-1/4) * bandwidth^(-1/2) * exp(-(w-carrier)^2/(2*bandwidth^2))
    phase(w)     = chirp * (w-carrier)^2

    Parameters
    ----------
    bandwidth : float
        Spectral width (angular frequency units), > 0.
    chirp : float
        Quadratic-phase coefficient (time^2 units); sign orders the frequency
        sweep (negative: high frequencies arrive first).
    carrier : float
        Center frequency of the spectrum.
    grid : FrequencyGrid, optional
        Must span at least carrier +- 8*bandwidth; defaults to
        carrier +- 10*bandwidth with 4096 points.

    Raises
    ------
    GridError
        If the grid is too narrow to hold the spectrum (unit-norm deficit
        above 1e-6).
    """
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    if grid is None:
        grid = default_frequency_grid(bandwidth, carrier, chirp)
    lo_need = carrier - 8.0 * bandwidth
    hi_need = carrier + 8.0 * bandwidth
    if grid.omega_min > lo_need or grid.omega_max < hi_need:
        raise GridError(
            f"frequency grid [{grid.omega_min:g}, {grid.omega_max:g}] too narrow; "
            f"need at least [{lo_need:g}, {hi_need:g}] (carrier +- 8*bandwidth)")
    detune = grid.omegas - carrier
    amplitude = np.pi ** -0.25 * bandwidth ** -0.5 * np.exp(-0.5 * (detune / bandwidth) ** 2)
    phase = chirp * detune ** 2
    pulse = SpectralPulse(grid, amplitude, phase, carrier, bandwidth, chirp)
    norm = pulse.spectral_norm()
    if abs(norm - 1.0) > NORM_DEFICIT_LIMIT:
        raise GridError(
            f"spectral norm {norm:.9f} deviates from 1 by more than {NORM_DEFICIT_LIMIT:g}; "
            f"grid needs span >= carrier +- 8*bandwidth = [{lo_need:g}, {hi_need:g}]")
    return pulse


def to_time_domain(pulse: SpectralPulse, tgrid: TimeGrid | None = None) -> TimeField:
    """Discrete inverse transform eps(t_j) = sum_b dw_b eps~(w_b) exp(-i w_b t_j).

    Trapezoidal weights on the frequency grid; evaluated for all times at once
    with a chirp-z transform (identical to the direct sum to rounding).

    Raises
    ------
    GridError
        If the field has not decayed below 1e-12 of its peak at the grid
        ends (time grid too short for this chirp).
    """
    if tgrid is None:
        tgrid = default_time_grid(pulse.bandwidth, pulse.chirp,
                                  match=pulse.grid, carrier=pulse.carrier)
    values = _discrete_synthesis(pulse.grid, pulse.values, tgrid)
    field = TimeField(tgrid, values, carrier=pulse.carrier)
    if not field.boundary_decay_ok():
        tau_ch = chirped_duration(pulse.bandwidth, pulse.chirp)
        raise GridError(
            f"time grid [{tgrid.t_min:g}, {tgrid.t_max:g}] too short: field has not "
            f"decayed to {BOUNDARY_DECAY:g} of peak at the ends "
            f"(chirp-extended duration is {tau_ch:g})")
    return field


def _discrete_synthesis(wgrid: FrequencyGrid, spectrum: np.ndarray,
                        tgrid: TimeGrid) -> np.ndarray:
    """Trapezoid-weighted sum over the frequency grid for every time sample.

    Evaluates eps(t_j) = sum_b y_b exp(-i w_b t_j) with w_b = w0 + b*dw and
    t_j = t0 + j*dt.  When dw*dt divides 2*pi and the sample times sit on the
    dt lattice, the inner sum is an FFT with integer-indexed (hence exactly
    reduced) phases; otherwise a chirp-z transform is used, whose compounded
    phase error grows to ~1e-9 on the largest grids.
    """
    dw = wgrid.spacing
    weights = np.full(wgrid.n_points, dw)
    weights[0] = weights[-1] = 0.5 * dw
    y = spectrum * weights
    dt = tgrid.spacing

    ratio = TWO_PI / (dw * dt)
    nfft = int(round(ratio))
    shift = tgrid.t_min / dt
    s0 = int(round(shift))
    commensurate = (nfft >= wgrid.n_points
                    and abs(ratio - nfft) < 1e-6
                    and abs(shift - s0) < 1e-6)
    if commensurate:
        base = np.fft.fft(y, nfft)
        idx = (np.arange(tgrid.n_points) + s0) % nfft
        inner = base[idx]
    else:
        x = y * np.exp(-1j * np.arange(wgrid.n_points) * dw * tgrid.t_min)
        inner = czt(x, m=tgrid.n_points, w=np.exp(-1j * dw * dt))
    return np.exp(-1j * wgrid.omega_min * tgrid.times) * inner


def analytic_chirped_gaussian(bandwidth: float, chirp: float, carrier: float,
                              tgrid: TimeGrid) -> TimeField:
    """Closed-form time field of the chirped Gaussian under this convention.

    eps(t) = sqrt(2*pi) / (pi^(1/4) sqrt(tau0 - 2i*chirp/tau0))
             * exp(-(1/2 + i*chirp/tau0^2) (t/tau_ch)^2) * exp(-i*carrier*t)

    The sqrt(2*pi) prefactor is the global constant fixed by the
    no-2*pi transform convention; tests reconcile it against the discrete
    transform rather than trusting the algebra.
    """
    vals = _analytic_values(bandwidth, chirp, carrier, tgrid.times)
    return TimeField(tgrid, vals, carrier=carrier)


def analytic_chirped_gaussian_derivative(bandwidth: float, chirp: float, carrier: float,
                                         tgrid: TimeGrid) -> TimeField:
    """Exact time derivative of the closed-form chirped Gaussian field."""
    t = tgrid.times
    tau0 = unchirped_duration(bandwidth)
    tau_ch = chirped_duration(bandwidth, chirp)
    vals = _analytic_values(bandwidth, chirp, carrier, t)
    a = 0.5 + 1j * chirp / tau0 ** 2
    dvals = (-2.0 * a * t / tau_ch ** 2 - 1j * carrier) * vals
    return TimeField(tgrid, dvals, carrier=carrier)


def _analytic_values(bandwidth: float, chirp: float, carrier: float,
                     t: np.ndarray) -> np.ndarray:
    tau0 = unchirped_duration(bandwidth)
    tau_ch = chirped_duration(bandwidth, chirp)
    pref = np.sqrt(TWO_PI) / (np.pi ** 0.25 * np.sqrt(tau0 - 2j * chirp / tau0 + 0j))
    a = 0.5 + 1j * chirp / tau0 ** 2
    return pref * np.exp(-a * (t / tau_ch) ** 2) * np.exp(-1j * carrier * t)


# ---------------------------------------------------------------------------
# Correlation functions
# ---------------------------------------------------------------------------

def _linear_correlation(left: np.ndarray, right: np.ndarray, dt: float) -> np.ndarray:
    """C_k = dt * sum_j left[j+k] right*[j] for k in [-(N-1), N-1], zero-padded."""
    n = left.size
    nfft = 1
    while nfft < 2 * n - 1:
        nfft *= 2
    lf = np.fft.fft(left, nfft)
    rf = np.fft.fft(right, nfft)
    full = np.fft.ifft(lf * np.conj(rf))
    # lag k >= 0 at index k, lag k < 0 wrapped to nfft + k
    pos = full[:n]
    neg = full[nfft - (n - 1):]
    return dt * np.concatenate([neg, pos])


def _acf_unchecked(field: TimeField) -> CorrelationTrace:
    dt = field.grid.spacing
    vals = _linear_correlation(field.values, field.values, dt)
    lags = np.arange(-(field.grid.n_points - 1), field.grid.n_points) * dt
    return CorrelationTrace(lags, vals)


def _xcf_unchecked(field: TimeField) -> CorrelationTrace:
    dt = field.grid.spacing
    deriv = spectral_derivative(field.values, dt)
    vals = _linear_correlation(deriv, field.values, dt)
    lags = np.arange(-(field.grid.n_points - 1), field.grid.n_points) * dt
    return CorrelationTrace(lags, vals)


def autocorrelation(field: TimeField) -> CorrelationTrace:
    """Discrete field autocorrelation C(tau) = integral eps(t+tau) eps*(t) dt.

    Lags cover the full grid span [-T, T] at the field's sample spacing;
    shifts beyond the overlap are zero-padded, which is exact for fields
    that satisfy the boundary-decay invariant.

    Raises
    ------
    GridError
        If the field violates the boundary-decay invariant.
    """
    if not field.boundary_decay_ok():
        raise GridError("field has not decayed at the grid boundaries; "
                        "autocorrelation on this grid would truncate the integral")
    return _acf_unchecked(field)


def cross_correlation_with_derivative(field: TimeField) -> CorrelationTrace:
    """Cross-correlation D(tau) = integral (d eps/dt)|_(t+tau) eps*(t) dt.

    The derivative is evaluated spectrally (multiplication of the spectrum
    by -i*w), never by finite differences in time.
    """
    if not field.boundary_decay_ok():
        raise GridError("field has not decayed at the grid boundaries; "
                        "cross-correlation on this grid would truncate the integral")
    return _xcf_unchecked(field)


def spectral_derivative(values: np.ndarray, dt: float) -> np.ndarray:
    """Time derivative of samples via the Fourier multiplier."""
    n = values.size
    omega = TWO_PI * np.fft.fftfreq(n, d=dt)
    return np.fft.ifft(1j * omega * np.fft.fft(values))


# ---------------------------------------------------------------------------
# Phase manipulation and sensitivity
# ---------------------------------------------------------------------------

def apply_phase_mask(pulse: SpectralPulse, mask: np.ndarray) -> SpectralPulse:
    """Add a real phase mask to the pulse; amplitude is untouched.

    Raises
    ------
    ValueError
        If the mask length does not match the pulse grid or is not finite.
    """
    mask = np.asarray(mask, dtype=float)
    if mask.shape != (pulse.grid.n_points,):
        raise ValueError("mask must be defined on the pulse's frequency grid")
    if not np.all(np.isfinite(mask)):
        raise ValueError("mask must be finite")
    return SpectralPulse(pulse.grid, pulse.amplitude, pulse.phase + mask,
                         pulse.carrier, pulse.bandwidth, pulse.chirp)


def random_smooth_phase_mask(grid: FrequencyGrid, rng: np.random.Generator,
                             n_harmonics: int = 8, amplitude: float = np.pi) -> np.ndarray:
    """Random smooth spectral phase covering the full [0, 2*pi) range.

    A low-order random Fourier series in w.  Smoothness bounds the group
    delay the mask adds, so masked pulses keep a finite duration and the
    time-domain correlation integrals remain valid on the default grids.
    Values wrap through many multiples of 2*pi across the band.
    """
    u = (grid.omegas - grid.omega_min) / (grid.omega_max - grid.omega_min)
    mask = np.zeros(grid.n_points)
    amps = rng.uniform(0.0, amplitude, size=n_harmonics)
    phases = rng.uniform(0.0, TWO_PI, size=n_harmonics)
    for k in range(n_harmonics):
        mask += amps[k] * np.cos(TWO_PI * (k + 1) * u + phases[k])
    return mask


def mask_group_delay_bound(grid: FrequencyGrid, n_harmonics: int = 8,
                           amplitude: float = np.pi) -> float:
    """Largest group delay random_smooth_phase_mask can add, |d mask/d w|."""
    span = grid.omega_max - grid.omega_min
    return amplitude * TWO_PI * n_harmonics * (n_harmonics + 1) / (2.0 * span)


ACF = "acf"
XCF = "xcf"

MAX_SENSITIVITY_STEP = 1e-3


def phase_sensitivity(pulse: SpectralPulse, functional: str, omega_bin: int,
                      h: float = 1e-4) -> float:
    """Centered finite-difference phase sensitivity of a correlation functional.

    Perturbs the spectral phase by +-h at a single frequency bin and returns

        max_tau |F[phase + h*delta_bin](tau) - F[phase - h*delta_bin](tau)| / (2h)

    where F is the autocorrelation ("acf") or the derivative
    cross-correlation ("xcf").  Dividing by the grid spacing converts the
    result to the continuum functional-derivative estimate; the single-bin
    bump stands in for a delta in frequency.

    Raises
    ------
    ValueError
        If the bin is out of range, h is outside (0, 1e-3], or the
        functional name is unknown.
    """
    if not 0 <= omega_bin < pulse.grid.n_points:
        raise ValueError(f"omega_bin {omega_bin} out of range "
                         f"[0, {pulse.grid.n_points})")
    if not 0.0 < h <= MAX_SENSITIVITY_STEP:
        raise ValueError(f"h must be in (0, {MAX_SENSITIVITY_STEP:g}] rad")
    if functional not in (ACF, XCF):
        raise ValueError(f"functional must be '{ACF}' or '{XCF}'")
    plus = _probe_trace(pulse, omega_bin, +h, functional)
    minus = _probe_trace(pulse, omega_bin, -h, functional)
    return float(np.max(np.abs(plus - minus)) / (2.0 * h))


def field_phase_sensitivity(pulse: SpectralPulse, omega_bin: int, h: float = 1e-4) -> float:
    """Same centered estimate for the time field itself (the control case).

    Unlike the correlation functionals this is nonzero, of order
    amplitude(w_bin) * dw, which confirms the estimator can detect a real
    phase dependence.
    """
    if not 0 <= omega_bin < pulse.grid.n_points:
        raise ValueError(f"omega_bin {omega_bin} out of range")
    if not 0.0 < h <= MAX_SENSITIVITY_STEP:
        raise ValueError(f"h must be in (0, {MAX_SENSITIVITY_STEP:g}] rad")
    fplus = _probe_field(pulse, omega_bin, +h)
    fminus = _probe_field(pulse, omega_bin, -h)
    return float(np.max(np.abs(fplus - fminus)) / (2.0 * h))


def _probe_field(pulse: SpectralPulse, omega_bin: int, h: float) -> np.ndarray:
    """Center-stripped perturbed field on the one-period ring grid.

    The single-bin bump adds a never-decaying monochromatic ripple, which is
    exactly periodic on the ring up to the wrap sign, so this path skips the
    boundary-decay gate.  Stripping the grid-center frequency only removes a
    common unimodular factor per sample and per lag.
    """
    bump = np.zeros(pulse.grid.n_points)
    bump[omega_bin] = h
    masked = apply_phase_mask(pulse, bump)
    grid = pulse.grid
    center = 0.5 * (grid.omega_min + grid.omega_max)
    stripped = FrequencyGrid(grid.omega_min - center, grid.omega_max - center,
                             grid.n_points)
    tgrid = period_time_grid(stripped, pulse.bandwidth)
    return _discrete_synthesis(stripped, masked.values, tgrid)


def _probe_trace(pulse: SpectralPulse, omega_bin: int, h: float,
                 functional: str) -> np.ndarray:
    """Correlation trace of the perturbed probe field on the period ring.

    Uses circular correlation, the exact discrete counterpart of the
    infinite integration limits: the probe ripple wraps with sign
    (-1)^(n_points-1) on the ring, handled by correlating on a doubled ring.
    Zero-padded correlation would instead truncate the ripple and leave an
    O(amplitude^2 * dw) artifact at large lags.
    """
    f = _probe_field(pulse, omega_bin, h)
    dt = TWO_PI / (pulse.grid.spacing * f.size)
    wrap = 1.0 if pulse.grid.n_points % 2 == 1 else -1.0
    ring = np.concatenate([f, wrap * f])
    if functional == ACF:
        return _ring_correlation(ring, ring, dt, f.size // 2)
    omega = TWO_PI * np.fft.fftfreq(ring.size, d=dt)
    dring = np.fft.ifft(1j * omega * np.fft.fft(ring))
    center = 0.5 * (pulse.grid.omega_min + pulse.grid.omega_max)
    acf = _ring_correlation(ring, ring, dt, f.size // 2)
    return _ring_correlation(dring, ring, dt, f.size // 2) - 1j * center * acf


def _ring_correlation(left: np.ndarray, right: np.ndarray, dt: float,
                      n_half: int) -> np.ndarray:
    """Circular correlation on the doubled ring at lags -n_half..n_half."""
    full = np.fft.ifft(np.fft.fft(left) * np.conj(np.fft.fft(right)))
    k = np.arange(-n_half, n_half + 1)
    # the doubled pattern counts every physical sample twice
    return 0.5 * dt * full[k % full.size]
