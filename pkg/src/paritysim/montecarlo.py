"""Telegraph parity noise and the single-shot experiment engine.

A shot samples one telegraph realization over the whole timeline (detection
blocks, free evolution, readout and reset all advance the parity clock),
classifies the initial/final parity readings, evolves the coherent part of
the sequence under the compiled segments and draws a binary outcome.
Per-shot substreams come from a counter-based generator keyed on
master_seed XOR shot_index, so datasets are reproducible bit-for-bit no
matter how shots are scheduled.
"""

from __future__ import annotations

import csv
import math
from bisect import bisect_right
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np

from .lindblad import CollapseSet, PropagatorCache
from .qcore import basis_ket, dm_pure
from .sequences import (
    build_echo,
    build_ramsey,
    compile_sequence,
    excited_population,
    rabi_excited_fraction,
    run_compiled,
)
from .transmon import DeviceParams, Parity, mhz_to_rad_per_us

UNFLIPPED_PLUS = "unflipped_plus"
UNFLIPPED_MINUS = "unflipped_minus"
FLIPPED = "flipped"
CLASS_LABELS = (UNFLIPPED_PLUS, UNFLIPPED_MINUS, FLIPPED)

SHOT_CSV_HEADER = ("delay_us", "p_i", "p_f", "class", "outcome", "true_flips", "seed_index")

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class ParityTrajectory:
    """One telegraph realization: initial parity and ordered flip times."""

    initial: Parity
    flip_times: tuple
    t_span: float

    def __post_init__(self):
        if self.t_span <= 0:
            raise ValueError(f"trajectory span must be positive, got {self.t_span}")
        last = -math.inf
        for t in self.flip_times:
            if not 0.0 <= t <= self.t_span:
                raise ValueError(f"flip time {t} outside [0, {self.t_span}]")
            if t <= last:
                raise ValueError("flip times must be strictly increasing")
            last = t

    def parity_at(self, t: float) -> Parity:
        """Parity after all flips at times <= t."""
        n = bisect_right(self.flip_times, t)
        return self.initial if n % 2 == 0 else self.initial.flipped()

    def flips_between(self, t0: float, t1: float) -> int:
        """Number of flips in the half-open window (t0, t1]."""
        return bisect_right(self.flip_times, t1) - bisect_right(self.flip_times, t0)


def sample_parity_trajectory(rate: float, t_shot: float, rng: np.random.Generator) -> ParityTrajectory:
    """Poisson flip process of the given intensity with a fair-coin start.

    Draw order is fixed (initial parity, flip count, flip times) so streams
    replay identically.
    """
    if rate < 0:
        raise ValueError(f"flip rate must be >= 0, got {rate}")
    if t_shot <= 0:
        raise ValueError(f"shot span must be positive, got {t_shot}")
    initial = Parity.PLUS if rng.random() < 0.5 else Parity.MINUS
    n_flips = int(rng.poisson(rate * t_shot))
    if n_flips:
        times = np.unique(rng.uniform(0.0, t_shot, size=n_flips))
        flips = tuple(float(t) for t in times if 0.0 < t < t_shot)
    else:
        flips = ()
    return ParityTrajectory(initial, flips, t_shot)


def classify(p_i: Parity, p_f: Parity) -> str:
    """Sort a (p_i, p_f) pair into unflipped_plus / unflipped_minus / flipped."""
    if p_i is not p_f:
        return FLIPPED
    return UNFLIPPED_PLUS if p_i is Parity.PLUS else UNFLIPPED_MINUS


@dataclass(frozen=True)
class ProtocolConfig:
    """Parameters of one embedded-parity-detection run."""

    delays_us: tuple
    shots_per_delay: int
    f_virt_mhz: float
    tau_p_us: float
    master_seed: int
    detection_model: str = "ideal"
    experiment: str = "ramsey"
    readout_error: float = 0.0
    dt_max_us: float = 0.005

    def __post_init__(self):
        object.__setattr__(self, "delays_us", tuple(float(d) for d in self.delays_us))
        if self.shots_per_delay < 1:
            raise ValueError("shots_per_delay must be >= 1")
        if any(d < 0 for d in self.delays_us):
            raise ValueError("delays must be non-negative")
        if self.tau_p_us <= 0:
            raise ValueError("tau_p must be positive")
        if self.detection_model not in ("ideal", "physical"):
            raise ValueError(f"unknown detection model {self.detection_model!r}")
        if self.experiment not in ("ramsey", "echo"):
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if not 0.0 <= self.readout_error < 1.0:
            raise ValueError("readout_error must lie in [0, 1)")
        if not 0 <= self.master_seed <= _SEED_MASK:
            raise ValueError("master_seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class ShotRecord:
    """One simulated single shot with its parity labels."""

    delay_us: float
    p_i: Parity
    p_f: Parity
    outcome: int
    true_flips: int
    seed_index: int

    @property
    def label(self) -> str:
        return classify(self.p_i, self.p_f)


@dataclass(frozen=True)
class ShotTimeline:
    """Absolute instants (us) of one shot; the parity clock spans t_total."""

    detect_i_mid: float
    sequence_start: float
    sequence_end: float
    detect_f_mid: float
    t_total: float

    @property
    def detection_window(self) -> float:
        """Span between the two detection instants; flips inside it are the
        ones classification can see."""
        return self.detect_f_mid - self.detect_i_mid


def shot_timeline(delay: float, cfg: ProtocolConfig, dev: DeviceParams) -> ShotTimeline:
    """Timing of one shot.

    Ramsey shots embed detection: p_i block (tau_p + readout), the free
    sequence, its readout, the p_f block and a final reset.  Flips inside a
    detection block are attributed to the parity at the pulse midpoint.
    Echo shots carry no detection blocks; their parity labels are the true
    parities at the sequence endpoints.
    """
    tau = cfg.tau_p_us
    t_ro = dev.t_readout_us
    if cfg.experiment == "ramsey":
        seq_start = tau + t_ro
        seq_end = seq_start + delay
        detect_f_mid = seq_end + t_ro + 0.5 * tau
        t_total = seq_end + t_ro + tau + t_ro + dev.t_reset_us
        return ShotTimeline(0.5 * tau, seq_start, seq_end, detect_f_mid, t_total)
    t_total = delay + t_ro + dev.t_reset_us
    return ShotTimeline(0.0, 0.0, delay, delay, max(t_total, delay))


def shot_rng(master_seed: int, seed_index: int) -> np.random.Generator:
    """Counter-based per-shot substream of a single 64-bit master seed.

    Each shot starts the Philox counter at seed_index * 2^128, so streams
    are disjoint for any shot count and identical no matter which worker
    draws them.
    """
    if seed_index < 0:
        raise ValueError("seed_index must be >= 0")
    bitgen = np.random.Philox(key=master_seed & _SEED_MASK, counter=[0, 0, seed_index, 0])
    return np.random.Generator(bitgen)


def misclassification_probability(parity: Parity, cfg: ProtocolConfig, dev: DeviceParams) -> float:
    """Probability that the detection block reports the wrong parity.

    The block drives the plus band, so a minus-parity qubit sees the full
    band separation 2*Delta12 and its residual excitation (two-level Rabi
    formula) is read as plus.  A plus-parity qubit is detuned only by the
    control error, taken as zero here.
    """
    if parity is Parity.PLUS:
        return 0.0
    detuning = mhz_to_rad_per_us(2.0 * dev.delta12_mhz)
    omega = math.pi / cfg.tau_p_us
    return rabi_excited_fraction(omega, detuning, cfg.tau_p_us)


class ShotEngine:
    """Runs shots for one (config, device) pair with shared propagators."""

    def __init__(self, cfg: ProtocolConfig, dev: DeviceParams):
        self.cfg = cfg
        self.dev = dev
        self.collapse = CollapseSet.from_coherence_times(dev.t1_us, dev.tphi_us, dim=2)
        self.cache = PropagatorCache()
        self._rho0 = dm_pure(basis_ket(2, 0))
        self._misclass = {
            Parity.PLUS: misclassification_probability(Parity.PLUS, cfg, dev),
            Parity.MINUS: misclassification_probability(Parity.MINUS, cfg, dev),
        }

    def _detect(self, true_parity: Parity, rng: np.random.Generator) -> Parity:
        if self.cfg.detection_model == "ideal":
            return true_parity
        if rng.random() < self._misclass[true_parity]:
            return true_parity.flipped()
        return true_parity

    def run_shot(
        self,
        delay: float,
        rng: np.random.Generator,
        seed_index: int = 0,
        trajectory: ParityTrajectory | None = None,
    ) -> ShotRecord:
        cfg, dev = self.cfg, self.dev
        timeline = shot_timeline(delay, cfg, dev)
        if trajectory is None:
            trajectory = sample_parity_trajectory(dev.parity_rate_per_us, timeline.t_total, rng)
        p_i = self._detect(trajectory.parity_at(timeline.detect_i_mid), rng)
        p_f = self._detect(trajectory.parity_at(timeline.detect_f_mid), rng)

        builder = build_ramsey if cfg.experiment == "ramsey" else build_echo
        seq = builder(delay, cfg.f_virt_mhz)
        compiled = compile_sequence(seq, dev, trajectory, dim=2, start_time=timeline.sequence_start)
        rho = run_compiled(self._rho0, compiled, self.collapse, cache=self.cache)
        p_excited = min(max(excited_population(rho), 0.0), 1.0)
        if cfg.readout_error > 0.0:
            p_excited = p_excited * (1.0 - cfg.readout_error) + (1.0 - p_excited) * cfg.readout_error
        outcome = int(rng.random() < p_excited)
        true_flips = trajectory.flips_between(timeline.detect_i_mid, timeline.detect_f_mid)
        return ShotRecord(delay, p_i, p_f, outcome, true_flips, seed_index)


def run_shot(
    delay: float,
    cfg: ProtocolConfig,
    dev: DeviceParams,
    rng: np.random.Generator,
    seed_index: int = 0,
    trajectory: ParityTrajectory | None = None,
) -> ShotRecord:
    """Single-shot convenience wrapper around :class:`ShotEngine`."""
    return ShotEngine(cfg, dev).run_shot(delay, rng, seed_index=seed_index, trajectory=trajectory)


def _delay_block(cfg: ProtocolConfig, dev: DeviceParams, delay_index: int) -> list:
    engine = ShotEngine(cfg, dev)
    delay = cfg.delays_us[delay_index]
    records = []
    for k in range(cfg.shots_per_delay):
        seed_index = delay_index * cfg.shots_per_delay + k
        rng = shot_rng(cfg.master_seed, seed_index)
        records.append(engine.run_shot(delay, rng, seed_index=seed_index))
    return records


def run_protocol(cfg: ProtocolConfig, dev: DeviceParams, workers: int = 1) -> "ShotDataset":
    """Run every (delay, shot) pair and collect the records.

    Shots are independent; per-shot substreams and an ordered merge make
    the result identical for any worker count.
    """
    indices = range(len(cfg.delays_us))
    if workers <= 1 or len(cfg.delays_us) <= 1:
        engine = ShotEngine(cfg, dev)
        records = []
        for delay_index in indices:
            delay = cfg.delays_us[delay_index]
            for k in range(cfg.shots_per_delay):
                seed_index = delay_index * cfg.shots_per_delay + k
                rng = shot_rng(cfg.master_seed, seed_index)
                records.append(engine.run_shot(delay, rng, seed_index=seed_index))
    else:
        records = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for block in pool.map(partial(_delay_block, cfg, dev), indices):
                records.extend(block)
    return ShotDataset(tuple(records))


@dataclass(frozen=True)
class DelayStats:
    """Shot counts and excited counts for one delay, pooled and per class."""

    delay_us: float
    counts: dict
    excited: dict

    def n(self, key: str = "pooled") -> int:
        return self.counts.get(key, 0)

    def mean(self, key: str = "pooled") -> float:
        n = self.n(key)
        return self.excited.get(key, 0) / n if n else math.nan

    def stderr(self, key: str = "pooled") -> float:
        """Binomial standard error with add-half smoothing.

        The smoothed proportion (x + 1/2)/(n + 1) keeps the variance
        estimate nonzero at empirical 0/1 bins and avoids the weight blowup
        that biases weighted fits at fringe extremes.
        """
        n = self.n(key)
        if not n:
            return math.nan
        p = (self.excited.get(key, 0) + 0.5) / (n + 1.0)
        return math.sqrt(p * (1.0 - p) / n)


@dataclass(frozen=True)
class ShotDataset:
    """Immutable collection of shot records with per-delay aggregation."""

    records: tuple

    def __len__(self) -> int:
        return len(self.records)

    @property
    def delays_us(self) -> tuple:
        return tuple(sorted({r.delay_us for r in self.records}))

    def aggregate(self) -> list:
        by_delay: dict = {}
        for rec in self.records:
            counts, excited = by_delay.setdefault(
                rec.delay_us,
                ({k: 0 for k in ("pooled", *CLASS_LABELS)}, {k: 0 for k in ("pooled", *CLASS_LABELS)}),
            )
            label = rec.label
            counts["pooled"] += 1
            counts[label] += 1
            excited["pooled"] += rec.outcome
            excited[label] += rec.outcome
        return [
            DelayStats(delay, counts, excited)
            for delay, (counts, excited) in sorted(by_delay.items())
        ]

    def decay_curve(self, key: str = "pooled"):
        """(delays, mean, stderr) arrays for one class, dropping empty bins."""
        stats = [s for s in self.aggregate() if s.n(key) > 0]
        t = np.array([s.delay_us for s in stats])
        y = np.array([s.mean(key) for s in stats])
        err = np.array([s.stderr(key) for s in stats])
        return t, y, err

    def class_fraction(self, key: str) -> float:
        if not self.records:
            return math.nan
        return sum(1 for r in self.records if r.label == key) / len(self.records)


def write_shot_records(records, path) -> None:
    """CSV export with the documented column schema."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SHOT_CSV_HEADER)
        for rec in records:
            writer.writerow(
                (
                    f"{rec.delay_us:.9g}",
                    rec.p_i.value,
                    rec.p_f.value,
                    rec.label,
                    rec.outcome,
                    rec.true_flips,
                    rec.seed_index,
                )
            )
