"""Curve fitting and experiment orchestration.

Holds the decaying-sinusoid fitter, spectroscopy peak finding and pulse
duration optimization, the flip-time ensemble average that turns a
parity-noise realization family into a single dephasing time, dispersion
sweeps over both the ensemble and Monte Carlo pipelines, and CSV ingestion
of externally produced shot records.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import expm
from scipy.optimize import least_squares
from scipy.signal import find_peaks as _scipy_find_peaks
from scipy.signal import hilbert

from .errors import NoOscillationError, NotResolvableError, ShotRecordError
from .lindblad import CollapseSet, liouvillian, PropagatorCache, rotating_frame_hamiltonian
from .montecarlo import (
    CLASS_LABELS,
    ProtocolConfig,
    ShotDataset,
    ShotRecord,
    SHOT_CSV_HEADER,
    classify,
    run_protocol,
)
from .qcore import basis_ket, dm_pure
from .sequences import (
    build_spectroscopy,
    compile_sequence,
    ramsey_readout,
    rotation_matrix,
    run_compiled,
    second_excited_population,
)
from .montecarlo import ParityTrajectory
from .transmon import TWO_PI, DeviceParams, Parity, mhz_to_rad_per_us

MIN_FIT_POINTS = 8


def markovian_t2(t1_us: float, tphi_us: float) -> float:
    """Flip-free transverse time: 1/T2 = 1/(2 T1) + 1/Tphi."""
    return 1.0 / (0.5 / t1_us + 1.0 / tphi_us)


# ---------------------------------------------------------------------------
# decaying-sinusoid fit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    """Parameters of y = A exp(-t/T2) cos(2 pi f t + phi) + C with stderr."""

    amplitude: float
    t2_us: float
    frequency_mhz: float
    phase_rad: float
    offset: float
    amplitude_stderr: float
    t2_stderr_us: float
    frequency_stderr_mhz: float
    phase_stderr_rad: float
    offset_stderr: float
    residual_rms: float
    residual_rms_weighted: float | None
    converged: bool
    n_points: int


def _decay_model(t, amp, t2, freq, phase, offset):
    return amp * np.exp(-t / t2) * np.cos(TWO_PI * freq * t + phase) + offset


def _dominant_frequency(t: np.ndarray, z: np.ndarray) -> tuple[float, float]:
    """Peak of the discrete spectrum of detrended data: (f_mhz, phase)."""
    dt = np.diff(t)
    uniform = np.allclose(dt, dt[0], rtol=1e-6, atol=1e-12)
    if uniform:
        coef = np.fft.rfft(z)
        freqs = np.fft.rfftfreq(len(z), d=dt[0])
    else:
        span = t[-1] - t[0]
        freqs = np.linspace(0.25 / span, 0.5 * len(t) / span, 4 * len(t))
        coef = np.array([np.sum(z * np.exp(-1j * TWO_PI * f * t)) for f in freqs])
        freqs = np.concatenate(([0.0], freqs))
        coef = np.concatenate(([0.0], coef))
    power = np.abs(coef)
    power[0] = 0.0
    k = int(np.argmax(power))
    if power[k] <= len(z) * 1e-12:
        raise NoOscillationError("no spectral peak: data carry no oscillation")
    f0 = freqs[k]
    if uniform and 1 <= k < len(power) - 1:
        # parabolic refinement of the spectral peak
        a, b, c = power[k - 1], power[k], power[k + 1]
        denom = a - 2 * b + c
        if denom != 0:
            f0 = freqs[k] + 0.5 * (a - c) / denom * (freqs[1] - freqs[0])
    phase = float(np.angle(np.sum(z * np.exp(-1j * TWO_PI * f0 * t))))
    return float(f0), phase


def _envelope_t2_guess(t: np.ndarray, z: np.ndarray) -> float:
    """Decay-time guess from the log of the analytic-signal magnitude."""
    span = t[-1] - t[0]
    try:
        env = np.abs(hilbert(z))
    except Exception:
        return span / 3.0
    trim = max(1, len(t) // 10)
    tt, ee = t[trim:-trim], env[trim:-trim]
    keep = ee > 0.05 * ee.max()
    if keep.sum() < 3:
        return span / 3.0
    slope = np.polyfit(tt[keep], np.log(ee[keep]), 1)[0]
    if slope >= -1e-12:
        return span
    return float(min(max(-1.0 / slope, span / 50.0), 50.0 * span))


def fit_decaying_sinusoid(t, y, y_err=None, fix_frequency_mhz: float | None = None) -> FitResult:
    """Least-squares fit of a decaying sinusoid.

    The frequency is seeded from the discrete-spectrum peak of the
    detrended data and the decay time from the log of the analytic-signal
    envelope; the refinement is a damped least-squares descent.  Parameter
    uncertainties come from the residual-scaled inverse normal matrix.
    With ``fix_frequency_mhz`` the oscillation frequency is pinned and only
    the envelope parameters are fit (used for echo data).

    Raises :class:`NoOscillationError` on degenerate (constant) input.
    Non-convergence is reported through ``converged=False`` on the best
    point found rather than an exception.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.ndim != 1 or t.shape != y.shape:
        raise ValueError("t and y must be 1-d arrays of equal length")
    if len(t) < MIN_FIT_POINTS:
        raise ValueError(f"need at least {MIN_FIT_POINTS} points, got {len(t)}")
    order = np.argsort(t)
    t, y = t[order], y[order]
    if y_err is not None:
        y_err = np.asarray(y_err, dtype=float)[order]
        if np.any(y_err <= 0):
            raise ValueError("y_err must be positive")
    if float(np.ptp(y)) < 1e-12:
        raise NoOscillationError("constant data: nothing to fit")

    tail = max(3, len(y) // 5)
    c0 = float(np.mean(y[-tail:]))
    z = y - c0
    if fix_frequency_mhz is None:
        f0, phi0 = _dominant_frequency(t, z)
    else:
        f0 = float(fix_frequency_mhz)
        phi0 = float(np.angle(np.sum(z * np.exp(-1j * TWO_PI * f0 * t))))
    t20 = _envelope_t2_guess(t, z)
    a0 = float(np.max(np.abs(z)))
    if a0 == 0.0:
        a0 = 1e-6

    weights = 1.0 / y_err if y_err is not None else np.ones_like(y)

    if fix_frequency_mhz is None:
        def residuals(p):
            return (_decay_model(t, p[0], p[1], p[2], p[3], p[4]) - y) * weights

        x0 = [a0, t20, f0, phi0, c0]
        lower = [-np.inf, 1e-4, 0.0, -2 * TWO_PI, -np.inf]
        upper = [np.inf, 1e7, np.inf, 2 * TWO_PI, np.inf]
    else:
        def residuals(p):
            return (_decay_model(t, p[0], p[1], f0, p[2], p[3]) - y) * weights

        x0 = [a0, t20, phi0, c0]
        lower = [-np.inf, 1e-4, -2 * TWO_PI, -np.inf]
        upper = [np.inf, 1e7, 2 * TWO_PI, np.inf]

    try:
        res = least_squares(residuals, x0, bounds=(lower, upper), method="trf", max_nfev=2000)
    except Exception:
        res = None

    if res is None:
        params = np.asarray(x0)
        success = False
        jac = None
        resid = residuals(params)
    else:
        params = res.x
        success = bool(res.success)
        jac = res.jac
        resid = res.fun

    n_par = len(params)
    dof = max(len(t) - n_par, 1)
    s2 = float(np.sum(resid**2)) / dof
    if jac is not None:
        cov = np.linalg.pinv(jac.T @ jac) * s2
        perr = np.sqrt(np.clip(np.diag(cov), 0.0, np.inf))
    else:
        perr = np.full(n_par, np.nan)

    if fix_frequency_mhz is None:
        amp, t2, freq, phase, offset = (float(v) for v in params)
        amp_e, t2_e, freq_e, phase_e, off_e = (float(v) for v in perr)
    else:
        amp, t2, phase, offset = (float(v) for v in params)
        amp_e, t2_e, phase_e, off_e = (float(v) for v in perr)
        freq, freq_e = f0, 0.0

    if amp < 0:
        amp, phase = -amp, phase + math.pi
    phase = math.remainder(phase, TWO_PI)

    model = _decay_model(t, amp, t2, freq, phase, offset)
    residual_rms = float(np.sqrt(np.mean((y - model) ** 2)))
    weighted = float(np.sqrt(np.mean(((y - model) * weights) ** 2))) if y_err is not None else None
    converged = success and math.isfinite(t2) and t2 > 0 and all(map(math.isfinite, (amp, freq, phase, offset)))
    return FitResult(
        amplitude=amp,
        t2_us=t2,
        frequency_mhz=freq,
        phase_rad=phase,
        offset=offset,
        amplitude_stderr=amp_e,
        t2_stderr_us=t2_e,
        frequency_stderr_mhz=freq_e,
        phase_stderr_rad=phase_e,
        offset_stderr=off_e,
        residual_rms=residual_rms,
        residual_rms_weighted=weighted,
        converged=converged,
        n_points=len(t),
    )


# ---------------------------------------------------------------------------
# spectroscopy: peak finding and pulse-duration optimization
# ---------------------------------------------------------------------------


def find_peaks(freq_mhz, population, height_floor: float = 0.1, min_separation: int = 2):
    """Local maxima above a height floor on a uniform frequency grid.

    Peaks closer than ``min_separation`` grid points are merged into the
    taller one.  Returned as (frequency, height) pairs in descending height.
    The 0.1 default floor suppresses the sidelobes of a square pulse.
    """
    freq = np.asarray(freq_mhz, dtype=float)
    pop = np.asarray(population, dtype=float)
    if freq.ndim != 1 or freq.shape != pop.shape or len(freq) < 3:
        raise ValueError("need matching 1-d arrays with at least 3 points")
    df = np.diff(freq)
    if not np.allclose(df, df[0], rtol=1e-6, atol=1e-12):
        raise ValueError("frequency grid must be uniform")
    idx, _ = _scipy_find_peaks(pop, height=height_floor, distance=min_separation)
    pairs = sorted(((float(freq[i]), float(pop[i])) for i in idx), key=lambda p: -p[1])
    return pairs


def simulate_spectroscopy_map(
    dev: DeviceParams,
    tau_p_list,
    delta_f_mhz,
    include_decoherence: bool = True,
    cache: PropagatorCache | None = None,
) -> np.ndarray:
    """Two-parity-averaged P(|2>) over a (tau_p, delta_f) grid.

    Each point prepares |1>, applies the square pi-area pulse at the given
    offset from the nominal 1-2 frequency and reads the second-excited
    population, averaged over both equally likely parities.
    """
    if include_decoherence:
        collapse = CollapseSet.from_coherence_times(dev.t1_us, dev.tphi_us, dim=3)
    else:
        collapse = CollapseSet(0.0, 0.0, dim=3)
    cache = cache if cache is not None else PropagatorCache()
    rho0 = dm_pure(basis_ket(3, 0))
    out = np.zeros((len(tau_p_list), len(delta_f_mhz)))
    for i, tau in enumerate(tau_p_list):
        for j, df in enumerate(delta_f_mhz):
            seq = build_spectroscopy(float(tau), float(df))
            total = 0.0
            for parity in (Parity.PLUS, Parity.MINUS):
                traj = ParityTrajectory(parity, (), max(float(tau), 1e-6))
                compiled = compile_sequence(seq, dev, traj, dim=3)
                rho = run_compiled(rho0, compiled, collapse, cache=cache)
                total += second_excited_population(rho)
            out[i, j] = 0.5 * total
    return out


def default_spectroscopy_grid(dev: DeviceParams, points: int = 201) -> np.ndarray:
    half = max(0.5, 3.0 * abs(dev.delta12_mhz))
    return np.linspace(-half, half, points)


def optimize_tau_p(
    dev: DeviceParams,
    tau_p_grid,
    delta_f_mhz=None,
    include_decoherence: bool = True,
) -> float:
    """Pick the pulse duration that resolves both parity peaks at height
    closest to 0.5.

    Among grid entries whose two-parity spectrum shows two peaks, the one
    minimizing |mean peak height - 0.5| wins; ties go to the shorter pulse.
    Raises :class:`NotResolvableError` when nothing in the grid resolves.
    """
    tau_p_grid = [float(tau) for tau in tau_p_grid]
    if not tau_p_grid:
        raise ValueError("tau_p grid must not be empty")
    grid = np.asarray(delta_f_mhz, dtype=float) if delta_f_mhz is not None else default_spectroscopy_grid(dev)
    spectra = simulate_spectroscopy_map(dev, tau_p_grid, grid, include_decoherence=include_decoherence)
    candidates = []
    for tau, row in zip(tau_p_grid, spectra):
        peaks = find_peaks(grid, row)
        if len(peaks) >= 2:
            height = 0.5 * (peaks[0][1] + peaks[1][1])
            candidates.append((abs(height - 0.5), tau))
    if not candidates:
        raise NotResolvableError(
            f"no pulse duration in {tau_p_grid} resolves the parity peaks"
        )
    candidates.sort()
    return candidates[0][1]


# ---------------------------------------------------------------------------
# flip-time ensemble average
# ---------------------------------------------------------------------------


def _step_propagators(delta01_mhz, t1_us, tphi_us, dt_us):
    collapse = CollapseSet.from_coherence_times(t1_us, tphi_us, dim=2)
    props = {}
    for parity in (Parity.PLUS, Parity.MINUS):
        h = rotating_frame_hamiltonian(2, 0.0, parity.sign * mhz_to_rad_per_us(delta01_mhz))
        props[parity] = expm(liouvillian(h, collapse) * dt_us)
    return props


@dataclass(frozen=True)
class RamseyEnsemble:
    """Per-realization phase-method Ramsey signals for a flip-time family.

    Realizations are indexed by starting parity and by a uniform grid of
    flip times covering [0, t_max]; the endpoints double as the two static
    (flip-free) realizations.
    """

    t_us: np.ndarray
    flip_times_us: np.ndarray
    signals: np.ndarray          # shape (2 * n_flip, n_samples + 1)
    start_parities: tuple
    flip_index: np.ndarray       # sample index of each realization's flip
    f_virt_mhz: float

    def static_signal(self, parity: Parity) -> np.ndarray:
        n_flip = len(self.flip_times_us)
        offset = 0 if parity is Parity.PLUS else n_flip
        return self.signals[offset + n_flip - 1]

    def pooled(self, scheme: str = "uniform", rate_per_us: float | None = None) -> np.ndarray:
        if scheme == "uniform":
            return self.signals.mean(axis=0)
        if scheme == "mixture":
            if rate_per_us is None:
                raise ValueError("mixture scheme needs a parity rate")
            t_max = float(self.t_us[-1])
            w = 1.0 - math.exp(-rate_per_us * t_max)
            static = 0.5 * (self.static_signal(Parity.PLUS) + self.static_signal(Parity.MINUS))
            return (1.0 - w) * static + w * self.signals.mean(axis=0)
        raise ValueError(f"unknown scheme {scheme!r}")


def simulate_ramsey_ensemble(
    delta01_mhz: float,
    t1_us: float,
    tphi_us: float,
    f_virt_mhz: float,
    t_max_us: float,
    n_flip_grid: int,
    samples_per_interval: int | None = None,
) -> RamseyEnsemble:
    """Evolve the Ramsey observable for every flip time on a uniform grid.

    For each starting parity and each flip time t_f the generator switches
    sign at t_f; the stored signal is the excited-state probability after
    the virtual-z and final pi/2 readout, sampled on a grid that the flip
    times land on exactly.
    """
    if n_flip_grid < 8:
        raise ValueError("flip grid needs at least 8 points")
    if t_max_us <= 0:
        raise ValueError("t_max must be positive")
    n_int = n_flip_grid - 1
    if samples_per_interval is None:
        wanted = max(512.0, 24.0 * abs(f_virt_mhz) * t_max_us)
        samples_per_interval = max(1, math.ceil(wanted / n_int))
    n_samples = n_int * samples_per_interval
    dt = t_max_us / n_samples
    t_grid = np.linspace(0.0, t_max_us, n_samples + 1)
    flip_times = np.linspace(0.0, t_max_us, n_flip_grid)
    flip_index = np.repeat(np.arange(n_flip_grid) * samples_per_interval, 1)

    props = _step_propagators(delta01_mhz, t1_us, tphi_us, dt)
    p_plus_t = props[Parity.PLUS].T
    p_minus_t = props[Parity.MINUS].T

    starts = [Parity.PLUS] * n_flip_grid + [Parity.MINUS] * n_flip_grid
    flips = np.concatenate([flip_index, flip_index])
    start_sign = np.array([p.sign for p in starts])

    n_real = 2 * n_flip_grid
    state = np.tile(np.array([0.5, 0.5, 0.5, 0.5], dtype=np.complex128), (n_real, 1))
    rho01 = np.empty((n_real, n_samples + 1), dtype=np.complex128)
    rho01[:, 0] = state[:, 1]
    for k in range(n_samples):
        sign = np.where(k < flips, start_sign, -start_sign)
        plus_rows = sign > 0
        if plus_rows.any():
            state[plus_rows] = state[plus_rows] @ p_plus_t
        if (~plus_rows).any():
            state[~plus_rows] = state[~plus_rows] @ p_minus_t
        rho01[:, k + 1] = state[:, 1]

    phase = np.exp(1j * TWO_PI * f_virt_mhz * t_grid)
    signals = 0.5 + (rho01 * phase[None, :]).imag
    return RamseyEnsemble(
        t_us=t_grid,
        flip_times_us=flip_times,
        signals=signals,
        start_parities=tuple(starts),
        flip_index=flips,
        f_virt_mhz=f_virt_mhz,
    )


@dataclass(frozen=True)
class EnsembleT2:
    """Dephasing times from the flip-time ensemble and its flip-free member."""

    t2_star_us: float
    t2_ideal_us: float
    star_fit: FitResult
    ideal_fit: FitResult


def ensemble_average_t2(
    delta01_mhz: float,
    t1_us: float,
    tphi_us: float,
    f_virt_mhz: float,
    t_max_us: float,
    n_flip_grid: int = 64,
    scheme: str = "uniform",
    rate_per_us: float | None = None,
) -> EnsembleT2:
    """Ensemble-averaged Ramsey dephasing time and its flip-free reference.

    scheme="uniform" averages all flip-time realizations (both starting
    parities, equal weight).  scheme="mixture" keeps the static pair at
    weight exp(-rate*t_max) and gives the flip family the remainder, which
    matches telegraph statistics at low rates.  The flip-free plus-parity
    realization is fit separately for the ideal value.
    """
    ens = simulate_ramsey_ensemble(
        delta01_mhz, t1_us, tphi_us, f_virt_mhz, t_max_us, n_flip_grid
    )
    pooled = ens.pooled(scheme=scheme, rate_per_us=rate_per_us)
    star_fit = fit_decaying_sinusoid(ens.t_us, pooled)
    ideal_fit = fit_decaying_sinusoid(ens.t_us, ens.static_signal(Parity.PLUS))
    return EnsembleT2(star_fit.t2_us, ideal_fit.t2_us, star_fit, ideal_fit)


def simulate_echo_ensemble_curve(
    delta01_mhz: float,
    t1_us: float,
    tphi_us: float,
    f_virt_mhz: float,
    delays_us,
    n_flip_grid: int = 64,
    scheme: str = "mixture",
    rate_per_us: float | None = None,
    samples_per_interval: int = 4,
):
    """Pooled spin-echo signal versus total delay under the flip ensemble.

    Each delay T gets its own flip-time grid over [0, T]; the refocusing pi
    sits exactly at T/2.  With the mixture scheme the flip family carries
    weight 1 - exp(-rate*T) per point.
    """
    if n_flip_grid < 8:
        raise ValueError("flip grid needs at least 8 points")
    if scheme == "mixture" and rate_per_us is None:
        raise ValueError("mixture scheme needs a parity rate")
    if samples_per_interval % 2:
        samples_per_interval += 1
    n_int = n_flip_grid - 1
    n_steps = n_int * samples_per_interval
    half_step = n_steps // 2
    pi_x = rotation_matrix(2, "x", math.pi)
    pi_super_t = np.kron(pi_x, pi_x.conj()).T

    flip_index = np.arange(n_flip_grid) * samples_per_interval
    flips = np.concatenate([flip_index, flip_index])
    start_sign = np.array([1.0] * n_flip_grid + [-1.0] * n_flip_grid)
    n_real = 2 * n_flip_grid

    delays = np.asarray(delays_us, dtype=float)
    pooled = np.empty_like(delays)
    for di, total in enumerate(delays):
        state = np.tile(np.array([0.5, 0.5, 0.5, 0.5], dtype=np.complex128), (n_real, 1))
        if total > 0:
            dt = total / n_steps
            props = _step_propagators(delta01_mhz, t1_us, tphi_us, dt)
            p_plus_t = props[Parity.PLUS].T
            p_minus_t = props[Parity.MINUS].T
            for k in range(n_steps):
                if k == half_step:
                    state = state @ pi_super_t
                sign = np.where(k < flips, start_sign, -start_sign)
                plus_rows = sign > 0
                if plus_rows.any():
                    state[plus_rows] = state[plus_rows] @ p_plus_t
                if (~plus_rows).any():
                    state[~plus_rows] = state[~plus_rows] @ p_minus_t
        else:
            state = state @ pi_super_t
        signals = np.array(
            [ramsey_readout(state[r, 1], TWO_PI * f_virt_mhz * total) for r in range(n_real)]
        )
        if scheme == "uniform":
            pooled[di] = signals.mean()
        else:
            w = 1.0 - math.exp(-(rate_per_us or 0.0) * total)
            static = 0.5 * (signals[n_flip_grid - 1] + signals[2 * n_flip_grid - 1])
            pooled[di] = (1.0 - w) * static + w * signals.mean()
    return delays, pooled


def echo_ensemble_t2(
    delta01_mhz: float,
    t1_us: float,
    tphi_us: float,
    f_virt_mhz: float,
    delays_us,
    n_flip_grid: int = 64,
    scheme: str = "mixture",
    rate_per_us: float | None = None,
) -> FitResult:
    """Envelope-only fit (frequency pinned at f_virt) of the ensemble echo."""
    delays, pooled = simulate_echo_ensemble_curve(
        delta01_mhz, t1_us, tphi_us, f_virt_mhz, delays_us,
        n_flip_grid=n_flip_grid, scheme=scheme, rate_per_us=rate_per_us,
    )
    return fit_decaying_sinusoid(delays, pooled, fix_frequency_mhz=f_virt_mhz)


# ---------------------------------------------------------------------------
# dispersion sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepSettings:
    """Shared knobs for `sweep_dispersion`; protocol only matters in
    montecarlo mode and echo_delays_us only for echo experiments."""

    dev: DeviceParams
    f_virt_mhz: float = 0.1
    t_max_us: float = 100.0
    n_flip_grid: int = 64
    scheme: str | None = None
    protocol: ProtocolConfig | None = None
    workers: int = 1


@dataclass(frozen=True)
class SweepResult:
    """Dephasing times versus computational-band dispersion."""

    delta01_mhz: tuple
    t2_pooled_us: tuple | None = None
    t2_pooled_stderr_us: tuple | None = None
    t2_sorted_us: tuple | None = None
    t2_sorted_stderr_us: tuple | None = None
    t2_echo_us: tuple | None = None
    t2_echo_stderr_us: tuple | None = None

    def __post_init__(self):
        n = len(self.delta01_mhz)
        for name in (
            "t2_pooled_us", "t2_pooled_stderr_us", "t2_sorted_us",
            "t2_sorted_stderr_us", "t2_echo_us", "t2_echo_stderr_us",
        ):
            col = getattr(self, name)
            if col is not None and len(col) != n:
                raise ValueError(f"column {name} length {len(col)} != {n}")


def _device_at_delta(dev: DeviceParams, delta01_mhz: float) -> DeviceParams:
    # sweeps are parameterized directly by the half-splitting: ng = 0
    return replace(dev, eps01_mhz=float(delta01_mhz), ng=0.0)


def sweep_dispersion(
    deltas_mhz,
    mode: str,
    experiment: str,
    settings: SweepSettings,
) -> SweepResult:
    """Dephasing time against dispersion for one pipeline.

    mode="ensemble" runs the deterministic flip-time average; the sorted
    column then reports the flip-free value.  mode="montecarlo" runs full
    shot sampling and fits the pooled curve (plus the unflipped-plus class
    for Ramsey).  Echo fits pin the frequency at f_virt.  Ramsey defaults
    to the uniform averaging scheme and echo to the rate-weighted mixture.
    """
    deltas = [float(d) for d in deltas_mhz]
    if sorted(deltas) != deltas:
        raise ValueError("deltas must be sorted ascending")
    if mode not in ("ensemble", "montecarlo"):
        raise ValueError(f"unknown mode {mode!r}")
    if experiment not in ("ramsey", "echo"):
        raise ValueError(f"unknown experiment {experiment!r}")
    scheme = settings.scheme or ("uniform" if experiment == "ramsey" else "mixture")
    dev = settings.dev

    pooled, pooled_err, sorted_, sorted_err, echo, echo_err = [], [], [], [], [], []
    for delta in deltas:
        if mode == "ensemble":
            if experiment == "ramsey":
                ens = ensemble_average_t2(
                    delta, dev.t1_us, dev.tphi_us, settings.f_virt_mhz,
                    settings.t_max_us, settings.n_flip_grid,
                    scheme=scheme, rate_per_us=dev.parity_rate_per_us,
                )
                pooled.append(ens.t2_star_us)
                pooled_err.append(ens.star_fit.t2_stderr_us)
                sorted_.append(ens.t2_ideal_us)
                sorted_err.append(ens.ideal_fit.t2_stderr_us)
            else:
                delays = np.linspace(0.0, settings.t_max_us, 41)
                fit = echo_ensemble_t2(
                    delta, dev.t1_us, dev.tphi_us, settings.f_virt_mhz, delays,
                    n_flip_grid=settings.n_flip_grid, scheme=scheme,
                    rate_per_us=dev.parity_rate_per_us,
                )
                echo.append(fit.t2_us)
                echo_err.append(fit.t2_stderr_us)
        else:
            if settings.protocol is None:
                raise ValueError("montecarlo mode needs a ProtocolConfig")
            protocol = replace(settings.protocol, experiment=experiment)
            dataset = run_protocol(protocol, _device_at_delta(dev, delta), workers=settings.workers)
            tt, yy, ee = dataset.decay_curve("pooled")
            if experiment == "ramsey":
                fit = fit_decaying_sinusoid(tt, yy, ee)
                pooled.append(fit.t2_us)
                pooled_err.append(fit.t2_stderr_us)
                ts, ys, es = dataset.decay_curve("unflipped_plus")
                sfit = fit_decaying_sinusoid(ts, ys, es)
                sorted_.append(sfit.t2_us)
                sorted_err.append(sfit.t2_stderr_us)
            else:
                fit = fit_decaying_sinusoid(tt, yy, ee, fix_frequency_mhz=settings.f_virt_mhz)
                echo.append(fit.t2_us)
                echo_err.append(fit.t2_stderr_us)

    def _col(values):
        return tuple(values) if values else None

    return SweepResult(
        delta01_mhz=tuple(deltas),
        t2_pooled_us=_col(pooled),
        t2_pooled_stderr_us=_col(pooled_err),
        t2_sorted_us=_col(sorted_),
        t2_sorted_stderr_us=_col(sorted_err),
        t2_echo_us=_col(echo),
        t2_echo_stderr_us=_col(echo_err),
    )


# ---------------------------------------------------------------------------
# dephasing-vs-ideal curve family
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CurvePoint:
    delta01_mhz: float
    t2_ideal_target_us: float
    tphi_us: float
    t2_ideal_us: float
    t2_ideal_stderr_us: float
    t2_star_us: float
    t2_star_stderr_us: float


@dataclass(frozen=True)
class CurveFamily:
    """One (t2_ideal -> t2_star) curve per dispersion value."""

    points: tuple

    @property
    def deltas_mhz(self) -> tuple:
        return tuple(sorted({p.delta01_mhz for p in self.points}))

    def curve(self, delta01_mhz: float):
        pts = sorted(
            (p for p in self.points if p.delta01_mhz == delta01_mhz),
            key=lambda p: p.t2_ideal_target_us,
        )
        return (
            np.array([p.t2_ideal_us for p in pts]),
            np.array([p.t2_star_us for p in pts]),
        )


def tphi_for_ideal_t2(t2_ideal_us: float, t1_us: float) -> float:
    """Pure-dephasing time that realizes a target flip-free T2 at fixed T1."""
    inv = 1.0 / t2_ideal_us - 0.5 / t1_us
    if inv <= 0:
        raise ValueError(
            f"target T2 {t2_ideal_us} us is unreachable with T1 = {t1_us} us (needs T2 < 2 T1)"
        )
    return 1.0 / inv


def t2_vs_ideal_curves(
    delta_list_mhz,
    t2_ideal_grid_us,
    t1_us: float,
    f_virt_mhz: float = 0.1,
    t_max_us: float = 100.0,
    n_flip_grid: int = 64,
    scheme: str = "uniform",
    rate_per_us: float | None = None,
) -> CurveFamily:
    """Ensemble dephasing time against its flip-free value, per dispersion.

    The ideal-value axis is realized by varying Tphi at fixed T1.
    """
    points = []
    for delta in delta_list_mhz:
        for target in t2_ideal_grid_us:
            tphi = tphi_for_ideal_t2(float(target), t1_us)
            ens = ensemble_average_t2(
                float(delta), t1_us, tphi, f_virt_mhz, t_max_us,
                n_flip_grid=n_flip_grid, scheme=scheme, rate_per_us=rate_per_us,
            )
            points.append(
                CurvePoint(
                    delta01_mhz=float(delta),
                    t2_ideal_target_us=float(target),
                    tphi_us=tphi,
                    t2_ideal_us=ens.t2_ideal_us,
                    t2_ideal_stderr_us=ens.ideal_fit.t2_stderr_us,
                    t2_star_us=ens.t2_star_us,
                    t2_star_stderr_us=ens.star_fit.t2_stderr_us,
                )
            )
    return CurveFamily(tuple(points))


# ---------------------------------------------------------------------------
# slope statistics and shot-record ingestion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SlopeEstimate:
    slope: float
    stderr: float
    ci_low: float
    ci_high: float

    def contains_zero(self) -> bool:
        return self.ci_low <= 0.0 <= self.ci_high


def weighted_slope_ci(x, y, y_err, z: float = 1.96) -> SlopeEstimate:
    """Weighted linear-regression slope with a normal-theory interval."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = 1.0 / np.asarray(y_err, dtype=float) ** 2
    xb = np.sum(w * x) / np.sum(w)
    yb = np.sum(w * y) / np.sum(w)
    sxx = np.sum(w * (x - xb) ** 2)
    if sxx <= 0:
        raise ValueError("need at least two distinct x values")
    slope = float(np.sum(w * (x - xb) * (y - yb)) / sxx)
    stderr = float(math.sqrt(1.0 / sxx))
    return SlopeEstimate(slope, stderr, slope - z * stderr, slope + z * stderr)


def ingest_shot_records(path) -> ShotDataset:
    """Load a shot-record CSV produced by the Monte Carlo export.

    The header and every field are validated; the first offending column is
    reported with its line number.
    """
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ShotRecordError("empty file: missing header") from None
        for col, (want, got) in enumerate(zip(SHOT_CSV_HEADER, header)):
            if want != got:
                raise ShotRecordError(f"header column {col + 1}: expected {want!r}, got {got!r}")
        if len(header) != len(SHOT_CSV_HEADER):
            raise ShotRecordError(
                f"header has {len(header)} columns, expected {len(SHOT_CSV_HEADER)}"
            )
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(SHOT_CSV_HEADER):
                raise ShotRecordError(f"line {line}: expected {len(SHOT_CSV_HEADER)} fields, got {len(row)}")
            records.append(_parse_record(row, line))
    return ShotDataset(tuple(records))


def _parse_record(row, line: int) -> ShotRecord:
    def fail(column: str, detail: str):
        raise ShotRecordError(f"line {line}: column '{column}' {detail}")

    try:
        delay = float(row[0])
    except ValueError:
        fail("delay_us", f"is not a number: {row[0]!r}")
    if delay < 0 or not math.isfinite(delay):
        fail("delay_us", f"must be finite and >= 0, got {row[0]!r}")
    try:
        p_i = Parity.from_symbol(row[1])
    except ValueError:
        fail("p_i", f"must be '+' or '-', got {row[1]!r}")
    try:
        p_f = Parity.from_symbol(row[2])
    except ValueError:
        fail("p_f", f"must be '+' or '-', got {row[2]!r}")
    if row[3] not in CLASS_LABELS:
        fail("class", f"must be one of {CLASS_LABELS}, got {row[3]!r}")
    if row[3] != classify(p_i, p_f):
        fail("class", f"{row[3]!r} is inconsistent with (p_i, p_f)")
    if row[4] not in ("0", "1"):
        fail("outcome", f"must be 0 or 1, got {row[4]!r}")
    try:
        flips = int(row[5])
    except ValueError:
        fail("true_flips", f"is not an integer: {row[5]!r}")
    if flips < 0:
        fail("true_flips", "must be >= 0")
    try:
        seed_index = int(row[6])
    except ValueError:
        fail("seed_index", f"is not an integer: {row[6]!r}")
    return ShotRecord(delay, p_i, p_f, int(row[4]), flips, seed_index)
