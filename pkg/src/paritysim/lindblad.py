"""Master-equation evolution for piecewise-constant rotating-frame generators.

Two evolution paths are provided.  ``integrate`` is a deterministic
fixed-step RK4 integrator; it is the reference path and the one the
physical-validity checks run through.  ``segment_propagator`` builds the
exact propagator exp(L * duration) of the (time-independent) Liouvillian
for one segment; the Monte Carlo and ensemble pipelines use it for
throughput. The two paths agree to integrator tolerance and the test suite
cross-checks them.

Dissipation is fixed to the two channels relevant here: relaxation
L1 = sqrt(gamma1) a and pure dephasing L2 = sqrt(gammaphi) a^dag a with
gamma1 = 1/T1 and gammaphi = 2/Tphi, so a flip-free Ramsey decay rate
composes as 1/(2 T1) + 1/Tphi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import DimensionError, IntegratorError, StateError
from .qcore import DensityMatrix, Operator, annihilation_op
from .transmon import mhz_to_rad_per_us

TRACE_DRIFT_TOL = 1e-7
GENERATOR_HERMITICITY_TOL = 1e-12
_TIME_EPS = 1e-12


@dataclass(frozen=True)
class CollapseSet:
    """Relaxation and pure-dephasing rates for a given Hilbert dimension."""

    gamma1: float
    gammaphi: float
    dim: int = 2

    def __post_init__(self):
        if self.gamma1 < 0 or self.gammaphi < 0:
            raise ValueError("collapse rates must be >= 0")
        if self.dim < 2:
            raise DimensionError(f"collapse set needs dim >= 2, got {self.dim}")

    @classmethod
    def from_coherence_times(cls, t1_us: float, tphi_us: float, dim: int = 2) -> "CollapseSet":
        """gamma1 = 1/T1, gammaphi = 2/Tphi."""
        if t1_us <= 0 or tphi_us <= 0:
            raise ValueError("coherence times must be positive")
        return cls(gamma1=1.0 / t1_us, gammaphi=2.0 / tphi_us, dim=dim)

    def operators(self) -> list[np.ndarray]:
        """Collapse operators [sqrt(gamma1) a, sqrt(gammaphi) a^dag a]."""
        a = annihilation_op(self.dim).entries
        ops = []
        if self.gamma1 > 0:
            ops.append(math.sqrt(self.gamma1) * a)
        if self.gammaphi > 0:
            ops.append(math.sqrt(self.gammaphi) * (a.conj().T @ a))
        return ops


@dataclass(frozen=True)
class HamiltonianSegment:
    """A constant rotating-frame generator (rad/us) held for a duration (us)."""

    duration: float
    generator: Operator
    label: str = ""

    def __post_init__(self):
        if not math.isfinite(self.duration) or self.duration < 0:
            raise ValueError(f"segment duration must be finite and >= 0, got {self.duration}")
        if self.generator.hermiticity_defect() > GENERATOR_HERMITICITY_TOL:
            raise ValueError(f"segment generator is not Hermitian (label {self.label!r})")


def rotating_frame_hamiltonian(dim: int, alpha_mhz: float, delta_omega: float) -> Operator:
    """Qubit generator -(alpha/2) a^dag a^dag a a + delta_omega a^dag a.

    alpha is given in MHz and converted here; delta_omega is already
    angular (rad/us).  On a two-level space the anharmonicity term vanishes.
    """
    n = np.arange(dim, dtype=float)
    diag = -0.5 * mhz_to_rad_per_us(alpha_mhz) * n * (n - 1.0) + delta_omega * n
    return Operator(np.diag(diag.astype(np.complex128)))


def _rhs_terms(h: np.ndarray, collapse: CollapseSet):
    ls = collapse.operators()
    if ls:
        k = sum(l.conj().T @ l for l in ls)
    else:
        k = np.zeros_like(h)
    return ls, k


def _rhs(r: np.ndarray, h: np.ndarray, ls: list[np.ndarray], k: np.ndarray) -> np.ndarray:
    out = -1j * (h @ r - r @ h)
    for l in ls:
        out = out + l @ r @ l.conj().T
    out = out - 0.5 * (k @ r + r @ k)
    return out


def lindblad_rhs(rho: DensityMatrix, h: Operator, c: CollapseSet) -> Operator:
    """Right-hand side -i[H, rho] + sum_k (L_k rho L_k^dag - {L_k^dag L_k, rho}/2)."""
    if rho.dim != h.dim or rho.dim != c.dim:
        raise DimensionError(
            f"dimension mismatch: state {rho.dim}, generator {h.dim}, collapse {c.dim}"
        )
    ls, k = _rhs_terms(h.entries, c)
    return Operator(_rhs(rho.entries, h.entries, ls, k))


@dataclass
class Trajectory:
    """Sampled master-equation solution: times (us) and validated states."""

    times: np.ndarray
    states: list[DensityMatrix] = field(default_factory=list)

    @property
    def final(self) -> DensityMatrix:
        return self.states[-1]

    def populations(self, level: int) -> np.ndarray:
        return np.array([s.entries[level, level].real for s in self.states])

    def coherences(self, i: int, j: int) -> np.ndarray:
        return np.array([s.entries[i, j] for s in self.states])


def _rk4_advance(r: np.ndarray, h: np.ndarray, ls, k, span: float, dt_max: float) -> np.ndarray:
    n_steps = max(1, math.ceil(span / dt_max - 1e-12))
    dt = span / n_steps
    for _ in range(n_steps):
        k1 = _rhs(r, h, ls, k)
        k2 = _rhs(r + 0.5 * dt * k1, h, ls, k)
        k3 = _rhs(r + 0.5 * dt * k2, h, ls, k)
        k4 = _rhs(r + dt * k3, h, ls, k)
        r = r + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return r


def _checked_state(r: np.ndarray, label: str, t: float) -> DensityMatrix:
    drift = abs(np.trace(r).real - 1.0) + abs(np.trace(r).imag)
    if drift > TRACE_DRIFT_TOL:
        raise IntegratorError(f"trace drift {drift:.3e} in segment {label!r} at t={t:.6g} us")
    try:
        return DensityMatrix(Operator(r))
    except StateError as exc:
        raise IntegratorError(f"invalid state in segment {label!r} at t={t:.6g} us: {exc}") from exc


def integrate(
    rho0: DensityMatrix,
    segments: list[HamiltonianSegment],
    c: CollapseSet,
    dt_max: float,
    sample_times=None,
) -> Trajectory:
    """Fixed-step RK4 through a list of constant-generator segments.

    The step within each segment is duration/ceil(duration/dt_max), so it
    never exceeds dt_max and always lands exactly on segment boundaries and
    on the caller's sample grid.  Output is emitted at t=0, at every
    segment boundary and at each requested sample time; every emitted state
    is validated and a violation raises :class:`IntegratorError` naming the
    offending segment.  Zero-duration segments are legal and skipped.
    """
    if dt_max <= 0:
        raise ValueError(f"dt_max must be positive, got {dt_max}")
    for seg in segments:
        if seg.generator.dim != rho0.dim or seg.generator.dim != c.dim:
            raise DimensionError(
                f"dimension mismatch in segment {seg.label!r}: "
                f"generator {seg.generator.dim}, state {rho0.dim}, collapse {c.dim}"
            )
    grid = np.sort(np.asarray(sample_times, dtype=float)) if sample_times is not None else np.empty(0)

    times = [0.0]
    states = [rho0]
    r = rho0.entries.copy()
    t = 0.0
    for seg in segments:
        if seg.duration == 0.0:
            continue
        t_end = t + seg.duration
        ls, k = _rhs_terms(seg.generator.entries, c)
        inner = grid[(grid > t + _TIME_EPS) & (grid < t_end - _TIME_EPS)]
        emit_at = np.append(inner, t_end)
        t_cursor = t
        for t_emit in emit_at:
            span = t_emit - t_cursor
            if span > _TIME_EPS:
                r = _rk4_advance(r, seg.generator.entries, ls, k, span, dt_max)
            t_cursor = t_emit
            times.append(t_cursor)
            states.append(_checked_state(r, seg.label, t_cursor))
        t = t_end
    return Trajectory(np.array(times), states)


def integrate_with_flip(
    rho0: DensityMatrix,
    pre_h: Operator,
    post_h: Operator,
    t_flip: float,
    t_total: float,
    c: CollapseSet,
    dt_max: float,
    sample_times=None,
) -> Trajectory:
    """Evolution whose generator switches from pre_h to post_h at t_flip."""
    if not 0.0 <= t_flip <= t_total:
        raise ValueError(f"t_flip={t_flip} must lie within [0, {t_total}]")
    segments = [
        HamiltonianSegment(t_flip, pre_h, label="pre_flip"),
        HamiltonianSegment(t_total - t_flip, post_h, label="post_flip"),
    ]
    return integrate(rho0, segments, c, dt_max, sample_times=sample_times)


def liouvillian(h: Operator, c: CollapseSet) -> np.ndarray:
    """Matrix of the master equation acting on row-major vec(rho)."""
    if h.dim != c.dim:
        raise DimensionError(f"generator dim {h.dim} does not match collapse dim {c.dim}")
    hm = h.entries
    d = h.dim
    eye = np.eye(d)
    mat = -1j * (np.kron(hm, eye) - np.kron(eye, hm.T))
    for l in c.operators():
        k = l.conj().T @ l
        mat = mat + np.kron(l, l.conj()) - 0.5 * (np.kron(k, eye) + np.kron(eye, k.T))
    return mat


def segment_propagator(segment: HamiltonianSegment, c: CollapseSet) -> np.ndarray:
    """Exact propagator exp(L * duration) on vec(rho) for one segment."""
    return expm(liouvillian(segment.generator, c) * segment.duration)


def propagate(rho: DensityMatrix, prop: np.ndarray) -> DensityMatrix:
    """Apply a vectorized propagator and revalidate the state."""
    d = rho.dim
    vec = prop @ rho.entries.reshape(d * d)
    return DensityMatrix(Operator(vec.reshape(d, d)))


class PropagatorCache:
    """Memoizes segment propagators keyed on exact generator/duration/rates."""

    def __init__(self):
        self._cache: dict = {}

    def get(self, segment: HamiltonianSegment, c: CollapseSet) -> np.ndarray:
        key = (
            segment.duration,
            c.gamma1,
            c.gammaphi,
            c.dim,
            segment.generator.entries.tobytes(),
        )
        prop = self._cache.get(key)
        if prop is None:
            prop = segment_propagator(segment, c)
            self._cache[key] = prop
        return prop

    def __len__(self) -> int:
        return len(self._cache)
