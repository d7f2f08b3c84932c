"""Figure rendering for the report path.

Every CLI command writes these PNGs next to its delimited output.  The
figures are rendered headless and with fixed metadata so repeated runs of
the same configuration produce byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KW = dict(dpi=150, metadata={"Software": None})


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def save_spectroscopy_figure(tau_p_list, delta_f_mhz, spectra, peaks_by_tau, path):
    """Spectral map plus line cuts for each pulse duration."""
    fig, (ax_map, ax_lines) = plt.subplots(1, 2, figsize=(10, 4))
    mesh = ax_map.pcolormesh(
        delta_f_mhz, np.arange(len(tau_p_list)), spectra, shading="nearest", cmap="viridis"
    )
    ax_map.set_yticks(np.arange(len(tau_p_list)), [f"{t:g}" for t in tau_p_list])
    ax_map.set_xlabel(r"$\Delta f$ (MHz)")
    ax_map.set_ylabel(r"$\tau_p$ ($\mu$s)")
    fig.colorbar(mesh, ax=ax_map, label=r"$P_{|2\rangle}$")

    for tau, row, peaks in zip(tau_p_list, spectra, peaks_by_tau):
        ax_lines.plot(delta_f_mhz, row, label=rf"$\tau_p$ = {tau:g} $\mu$s")
        if peaks:
            ax_lines.plot(*zip(*((f, h) for f, h in peaks)), "kv", ms=4)
    ax_lines.set_xlabel(r"$\Delta f$ (MHz)")
    ax_lines.set_ylabel(r"$P_{|2\rangle}$")
    ax_lines.set_ylim(0, 1.05)
    ax_lines.legend(fontsize=8)
    return _finish(fig, path)


def save_ramsey_figure(pooled_curve, pooled_fit, sorted_curve, sorted_fit, path):
    """Pooled and parity-sorted decay curves with their fits."""
    from .analysis import _decay_model

    fig, axes = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    for ax, (t, y, err), fit, title in (
        (axes[0], pooled_curve, pooled_fit, "all shots pooled"),
        (axes[1], sorted_curve, sorted_fit, "no flip, started high band"),
    ):
        ax.errorbar(t, y, yerr=err, fmt=".", ms=3, lw=0.8, alpha=0.7, label="simulated shots")
        if fit is not None:
            tt = np.linspace(t.min(), t.max(), 600)
            ax.plot(
                tt,
                _decay_model(tt, fit.amplitude, fit.t2_us, fit.frequency_mhz, fit.phase_rad, fit.offset),
                "r-", lw=1.0,
                label=rf"fit: $T_2^*$ = {fit.t2_us:.1f} $\pm$ {fit.t2_stderr_us:.1f} $\mu$s",
            )
        ax.set_ylabel("P(excited)")
        ax.set_title(title, fontsize=9)
        ax.legend(fontsize=8)
    axes[1].set_xlabel(r"delay ($\mu$s)")
    return _finish(fig, path)


def save_sweep_figure(sweep, path, title=""):
    """Dephasing times against the computational-band dispersion."""
    fig, ax = plt.subplots(figsize=(6, 4))
    x = np.asarray(sweep.delta01_mhz) * 1e3
    series = (
        ("t2_pooled_us", "t2_pooled_stderr_us", "o-", "pooled"),
        ("t2_sorted_us", "t2_sorted_stderr_us", "x--", "no parity flip"),
        ("t2_echo_us", "t2_echo_stderr_us", "s-", "spin echo"),
    )
    for col, err_col, style, label in series:
        y = getattr(sweep, col)
        if y is None:
            continue
        err = getattr(sweep, err_col)
        ax.errorbar(x, y, yerr=err, fmt=style, ms=4, capsize=2, label=label)
    ax.set_xlabel(r"$\Delta_{01}$ (kHz)")
    ax.set_ylabel(r"$T_2$ ($\mu$s)")
    if title:
        ax.set_title(title, fontsize=10)
    ax.legend(fontsize=8)
    return _finish(fig, path)


def save_t2_vs_ideal_figure(family, path):
    """Ensemble dephasing time versus the flip-free value, one curve per
    dispersion, with the identity line dashed."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    hi = 0.0
    for delta in family.deltas_mhz:
        ideal, star = family.curve(delta)
        hi = max(hi, float(ideal.max()))
        ax.plot(ideal, star, "o-", ms=4, label=rf"$\Delta_{{01}}$ = {delta * 1e3:g} kHz")
    edge = np.array([0.0, 1.05 * hi])
    ax.plot(edge, edge, "--", color="0.5", lw=1, label="identity")
    ax.set_xlabel(r"$T_2^{*\,\mathrm{ideal}}$ ($\mu$s)")
    ax.set_ylabel(r"$T_2^*$ ($\mu$s)")
    ax.legend(fontsize=8)
    return _finish(fig, path)
