"""Device model: charge dispersion, parity-dependent detunings, time constants.

Unit conventions for the whole package are set here and nowhere else:
ordinary frequencies in MHz, times in us, angular frequencies in rad/us.
``mhz_to_rad_per_us`` is the single conversion point, which keeps factors
of 2*pi from leaking into other modules.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


def mhz_to_rad_per_us(f_mhz: float) -> float:
    """Ordinary frequency (MHz) to angular frequency (rad/us)."""
    return TWO_PI * f_mhz


class Parity(enum.Enum):
    """Quasiparticle-number parity on the qubit island; exactly two values."""

    PLUS = "+"
    MINUS = "-"

    @property
    def sign(self) -> float:
        return 1.0 if self is Parity.PLUS else -1.0

    def flipped(self) -> "Parity":
        return Parity.MINUS if self is Parity.PLUS else Parity.PLUS

    @classmethod
    def from_symbol(cls, symbol: str) -> "Parity":
        if symbol == "+":
            return cls.PLUS
        if symbol == "-":
            return cls.MINUS
        raise ValueError(f"parity symbol must be '+' or '-', got {symbol!r}")


def dispersion(eps_mhz: float, ng: float) -> float:
    """Half the parity-band splitting at gate charge ng: eps * cos(2*pi*ng).

    May be negative for ng near 0.5; callers that want the absolute band
    separation take |.| themselves.
    """
    if eps_mhz < 0:
        raise ValueError(f"dispersion amplitude must be >= 0, got {eps_mhz}")
    return eps_mhz * math.cos(TWO_PI * ng)


def transition_freq(fbar_mhz: float, eps_mhz: float, ng: float, parity: Parity) -> float:
    """Parity-resolved transition frequency fbar +/- eps*cos(2*pi*ng)."""
    return fbar_mhz + parity.sign * dispersion(eps_mhz, ng)


def parity_detuning(delta_omega: float, delta01_mhz: float, parity: Parity) -> float:
    """Parity-dependent rotating-frame detuning (rad/us).

    Adds +/- 2*pi*delta01 to the control detuning delta_omega.
    """
    return delta_omega + parity.sign * mhz_to_rad_per_us(delta01_mhz)


def asymptotic_suppression(ej_over_ec: float) -> float:
    """Relative charge-dispersion suppression factor exp(-sqrt(8 EJ/EC))."""
    if ej_over_ec <= 0:
        raise ValueError(f"EJ/EC ratio must be positive, got {ej_over_ec}")
    return math.exp(-math.sqrt(8.0 * ej_over_ec))


@dataclass(frozen=True)
class DeviceParams:
    """Static device parameters for one experimental configuration.

    fbar01/fbar12 and alpha are bookkeeping only (dynamics run in the
    rotating frame) but have no sensible universal defaults, so they are
    required and normally come from the run configuration file.  The gate
    charge ng is quasi-static within one experiment and measurable only
    modulo e/2, hence the [0, 0.5) range.
    """

    fbar01_mhz: float
    fbar12_mhz: float
    alpha_mhz: float
    t1_us: float
    tphi_us: float
    eps01_mhz: float = 0.006
    eps12_mhz: float = 0.150
    ng: float = 0.0
    parity_rate_per_us: float = 0.001
    ej_over_ec: float = 50.0
    t_readout_us: float = 10.0
    t_reset_us: float = 10.0

    def __post_init__(self):
        if self.eps01_mhz < 0 or self.eps12_mhz < 0:
            raise ValueError("dispersion amplitudes must be >= 0")
        if self.t1_us <= 0 or self.tphi_us <= 0:
            raise ValueError("T1 and Tphi must be positive")
        if self.parity_rate_per_us < 0:
            raise ValueError("parity switch rate must be >= 0")
        if not 0.0 <= self.ng < 0.5:
            raise ValueError(f"ng must lie in [0, 0.5), got {self.ng}")
        if self.ej_over_ec <= 0:
            raise ValueError("EJ/EC must be positive")
        if self.t_readout_us < 0 or self.t_reset_us < 0:
            raise ValueError("readout and reset durations must be >= 0")

    @property
    def delta01_mhz(self) -> float:
        """Computational-band half-splitting at the configured gate charge."""
        return dispersion(self.eps01_mhz, self.ng)

    @property
    def delta12_mhz(self) -> float:
        """1-2 band half-splitting at the configured gate charge."""
        return dispersion(self.eps12_mhz, self.ng)
