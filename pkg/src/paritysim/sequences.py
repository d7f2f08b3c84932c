"""Pulse protocols as segment lists, compiled into evolvable timelines.

Sequences are built device-independently (phase-method Ramsey, spin echo,
long selective 1-2 spectroscopy pulses, the parity-detection block) and
then compiled against device parameters plus one parity-noise realization.
Compiling turns delays and drives into Hamiltonian segments carrying the
parity-dependent detuning, split at flip times, while the short 0-1 control
pulses stay ideal instantaneous unitaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import CoverageError, DimensionError
from .lindblad import CollapseSet, HamiltonianSegment, PropagatorCache, integrate, propagate
from .qcore import DensityMatrix, Operator, apply_unitary
from .transmon import TWO_PI, DeviceParams, Parity, mhz_to_rad_per_us, parity_detuning

SUBSPACE_LEVELS = {"01": (0, 1), "12": (1, 2)}


@dataclass(frozen=True)
class IdealRotation:
    """Instantaneous rotation on a two-level subspace; zero duration."""

    axis: str
    angle: float
    subspace: str = "01"

    def __post_init__(self):
        if self.axis not in ("x", "y", "z"):
            raise ValueError(f"axis must be x, y or z, got {self.axis!r}")
        if self.subspace not in SUBSPACE_LEVELS:
            raise ValueError(f"unknown subspace {self.subspace!r}")


@dataclass(frozen=True)
class Drive:
    """Square drive on a subspace: Rabi rate omega (rad/us) for a duration.

    delta_f_mhz is the drive offset from the nominal transition frequency;
    None means "track the plus parity band", which is how the parity
    detection pulse is specified.  The parity-resolved frame detuning is
    filled in at compile time.
    """

    omega: float
    duration: float
    delta_f_mhz: float | None = 0.0
    subspace: str = "12"

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("drive duration must be >= 0")
        if self.subspace not in SUBSPACE_LEVELS:
            raise ValueError(f"unknown subspace {self.subspace!r}")


@dataclass(frozen=True)
class Delay:
    duration: float

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("delay must be >= 0")


@dataclass(frozen=True)
class Measure:
    label: str = "readout"


PulseSegment = Union[IdealRotation, Drive, Delay, Measure]


def segment_duration(seg: PulseSegment) -> float:
    if isinstance(seg, (Drive, Delay)):
        return seg.duration
    return 0.0


@dataclass(frozen=True)
class PulseSequence:
    """Ordered segments ending in exactly one measurement."""

    segments: tuple
    name: str
    nominal_delay_us: float = 0.0
    f_virt_mhz: float = 0.0

    def __post_init__(self):
        measures = [s for s in self.segments if isinstance(s, Measure)]
        if len(measures) != 1 or not isinstance(self.segments[-1], Measure):
            raise ValueError("sequence must end in exactly one measure segment")

    @property
    def duration_us(self) -> float:
        return sum(segment_duration(s) for s in self.segments)

    @property
    def measure(self) -> Measure:
        return self.segments[-1]


def build_ramsey(delay: float, f_virt: float) -> PulseSequence:
    """Phase-method Ramsey: pi/2 . delay . virtual-z . pi/2 . measure.

    The control detuning is zero; the oscillation is imposed by the virtual
    z rotation 2*pi*f_virt*delay, so only the parity term detunes the delay
    physically.
    """
    if delay < 0:
        raise ValueError("delay must be >= 0")
    segs = (
        IdealRotation("x", math.pi / 2),
        Delay(delay),
        IdealRotation("z", TWO_PI * f_virt * delay),
        IdealRotation("x", math.pi / 2),
        Measure("ramsey"),
    )
    return PulseSequence(segs, "ramsey", nominal_delay_us=delay, f_virt_mhz=f_virt)


def build_echo(delay: float, f_virt: float) -> PulseSequence:
    """Spin echo: pi/2 . delay/2 . pi . delay/2 . virtual-z . pi/2 . measure."""
    if delay < 0:
        raise ValueError("delay must be >= 0")
    segs = (
        IdealRotation("x", math.pi / 2),
        Delay(delay / 2.0),
        IdealRotation("x", math.pi),
        Delay(delay / 2.0),
        IdealRotation("z", TWO_PI * f_virt * delay),
        IdealRotation("x", math.pi / 2),
        Measure("echo"),
    )
    return PulseSequence(segs, "echo", nominal_delay_us=delay, f_virt_mhz=f_virt)


def build_spectroscopy(tau_p: float, delta_f: float) -> PulseSequence:
    """Selective 1-2 spectroscopy: pi01 prep, square pi-area drive, measure P(|2>).

    The drive amplitude follows the pi-rotation condition omega = pi/tau_p
    and sits at delta_f (MHz) from the nominal 1-2 frequency.
    """
    if tau_p <= 0:
        raise ValueError(f"pulse duration must be positive, got {tau_p}")
    segs = (
        IdealRotation("x", math.pi, "01"),
        Drive(omega=math.pi / tau_p, duration=tau_p, delta_f_mhz=delta_f),
        Measure("p2"),
    )
    return PulseSequence(segs, "spectroscopy", nominal_delay_us=tau_p)


def build_parity_detection(tau_p: float) -> PulseSequence:
    """Parity detection block: pi01, selective drive locked on the plus band.

    Reading |2> classifies the parity as plus, anything else as minus.
    """
    if tau_p <= 0:
        raise ValueError(f"pulse duration must be positive, got {tau_p}")
    segs = (
        IdealRotation("x", math.pi, "01"),
        Drive(omega=math.pi / tau_p, duration=tau_p, delta_f_mhz=None),
        Measure("parity"),
    )
    return PulseSequence(segs, "parity_detection", nominal_delay_us=tau_p)


def rotation_matrix(dim: int, axis: str, angle: float, subspace: str = "01") -> np.ndarray:
    """Unitary for an ideal rotation embedded in a dim-level space.

    x and y follow exp(-i angle sigma/2).  The z rotation is the virtual
    phase: it multiplies rho_ij (i lower, j upper) by exp(+i angle) so a
    positive virtual angle adds to the phase accrued under a positive
    detuning.
    """
    i, j = SUBSPACE_LEVELS[subspace]
    if j >= dim:
        raise DimensionError(f"subspace {subspace} needs dim > {j}, got {dim}")
    u = np.eye(dim, dtype=np.complex128)
    half = 0.5 * angle
    if axis == "x":
        u[i, i] = u[j, j] = math.cos(half)
        u[i, j] = u[j, i] = -1j * math.sin(half)
    elif axis == "y":
        u[i, i] = u[j, j] = math.cos(half)
        u[i, j] = -math.sin(half)
        u[j, i] = math.sin(half)
    elif axis == "z":
        u[i, i] = np.exp(0.5j * angle)
        u[j, j] = np.exp(-0.5j * angle)
    else:
        raise ValueError(f"axis must be x, y or z, got {axis!r}")
    return u


def rabi_excited_fraction(omega: float, detuning: float, duration: float) -> float:
    """Two-level Rabi formula for the upper-level population after a square pulse.

    omega and detuning in rad/us, duration in us:
    P = omega^2/(omega^2 + delta^2) * sin^2(sqrt(omega^2 + delta^2) * t / 2).
    """
    g2 = omega * omega + detuning * detuning
    if g2 == 0.0:
        return 0.0
    return (omega * omega / g2) * math.sin(0.5 * math.sqrt(g2) * duration) ** 2


def ramsey_readout(rho01: complex, virtual_phase: float) -> float:
    """Excited-state probability after virtual-z(theta) plus a final x pi/2.

    Closed form of the two ideal readout rotations acting on a unit-trace
    state: P = 1/2 + Im(rho01 * exp(i theta)).  Verified against the
    explicit unitary route in the tests.
    """
    return 0.5 + (rho01 * np.exp(1j * virtual_phase)).imag


@dataclass(frozen=True)
class CompiledRotation:
    matrix: np.ndarray
    label: str = ""


CompiledStep = Union[CompiledRotation, HamiltonianSegment]


@dataclass(frozen=True)
class CompiledSequence:
    steps: tuple
    duration_us: float
    measure: Measure


def _split_window(trajectory, t0: float, t1: float):
    """(duration, parity) pieces of [t0, t1] between flips, summing exactly."""
    total = t1 - t0
    if total <= 0.0:
        return []
    flips = [t for t in trajectory.flip_times if t0 < t < t1]
    parity = trajectory.parity_at(t0)
    pieces = []
    edges = [t0, *flips, t1]
    used = 0.0
    for idx in range(len(edges) - 1):
        if idx == len(edges) - 2:
            dur = total - used
        else:
            dur = edges[idx + 1] - edges[idx]
        used += dur
        if dur > 0.0:
            pieces.append((dur, parity))
        parity = parity.flipped()
    return pieces


def compile_sequence(
    seq: PulseSequence,
    dev: DeviceParams,
    trajectory,
    dim: int = 2,
    control_detuning: float = 0.0,
    start_time: float = 0.0,
) -> CompiledSequence:
    """Bind a sequence to device parameters and one parity realization.

    Delays become diagonal generators delta_omega_pm * a^dag a, drives
    become (omega/2) sigma_x on their subspace plus the parity-resolved
    frame detuning on the upper level; both are split at flip times.
    Ideal rotations pass through as unitaries.  The trajectory must cover
    [start_time, start_time + sequence duration].
    """
    end_needed = start_time + seq.duration_us
    if trajectory.t_span + 1e-9 < end_needed or start_time < -1e-12:
        raise CoverageError(
            f"trajectory spans {trajectory.t_span:.6g} us but the sequence needs "
            f"[{start_time:.6g}, {end_needed:.6g}] us"
        )
    delta01 = dev.delta01_mhz
    delta12 = dev.delta12_mhz
    n_diag = np.arange(dim, dtype=float)

    steps: list[CompiledStep] = []
    t = start_time
    for seg in seq.segments:
        if isinstance(seg, IdealRotation):
            steps.append(
                CompiledRotation(
                    rotation_matrix(dim, seg.axis, seg.angle, seg.subspace),
                    label=f"{seg.axis}({seg.angle:.6g})@{seg.subspace}",
                )
            )
        elif isinstance(seg, Delay):
            for dur, parity in _split_window(trajectory, t, t + seg.duration):
                domega = parity_detuning(control_detuning, delta01, parity)
                gen = Operator(np.diag((domega * n_diag).astype(np.complex128)))
                steps.append(HamiltonianSegment(dur, gen, label=f"delay{parity.value}"))
            t += seg.duration
        elif isinstance(seg, Drive):
            if dim < 3 and seg.subspace == "12":
                raise DimensionError("a 1-2 drive needs dim >= 3")
            lo, hi = SUBSPACE_LEVELS[seg.subspace]
            delta_f = seg.delta_f_mhz if seg.delta_f_mhz is not None else delta12
            band = delta12 if seg.subspace == "12" else delta01
            for dur, parity in _split_window(trajectory, t, t + seg.duration):
                # drive minus transition frequency; positive means driving high
                detuning = mhz_to_rad_per_us(delta_f - parity.sign * band)
                gen = np.zeros((dim, dim), dtype=np.complex128)
                gen[lo, hi] = gen[hi, lo] = 0.5 * seg.omega
                gen[hi, hi] = -detuning
                steps.append(HamiltonianSegment(dur, Operator(gen), label=f"drive{parity.value}"))
            t += seg.duration
        elif isinstance(seg, Measure):
            break
    return CompiledSequence(tuple(steps), duration_us=t - start_time, measure=seq.measure)


def run_compiled(
    rho0: DensityMatrix,
    compiled: CompiledSequence,
    collapse: CollapseSet,
    cache: PropagatorCache | None = None,
    method: str = "expm",
    dt_max: float = 0.005,
) -> DensityMatrix:
    """Evolve a state through a compiled sequence and return the final state.

    method="expm" uses exact per-segment propagators (optionally cached);
    method="rk4" routes every segment through the fixed-step integrator.
    """
    if method not in ("expm", "rk4"):
        raise ValueError(f"unknown method {method!r}")
    rho = rho0
    for step in compiled.steps:
        if isinstance(step, CompiledRotation):
            rho = apply_unitary(rho, step.matrix)
        elif step.duration > 0.0:
            if method == "expm":
                prop = cache.get(step, collapse) if cache is not None else None
                if prop is None:
                    from .lindblad import segment_propagator

                    prop = segment_propagator(step, collapse)
                rho = propagate(rho, prop)
            else:
                rho = integrate(rho, [step], collapse, dt_max).final
    return rho


def excited_population(rho: DensityMatrix) -> float:
    """Population of the first excited level."""
    return float(rho.entries[1, 1].real)


def second_excited_population(rho: DensityMatrix) -> float:
    """Population of the second excited level (dim >= 3)."""
    if rho.dim < 3:
        raise DimensionError("second excited level needs dim >= 3")
    return float(rho.entries[2, 2].real)
