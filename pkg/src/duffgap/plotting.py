"""Static figures written next to the CSV/JSON outputs (non-interactive backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}  # keeps PNG bytes free of version strings


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)


def plot_eigs(path, fd_values, exact_values=None):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    idx = np.arange(1, len(fd_values) + 1)
    ax.semilogy(idx, fd_values, "o", label="finite differences")
    if exact_values is not None:
        ax.semilogy(idx, exact_values, "x", label="exact beam")
    ax.set_xlabel("index")
    ax.set_ylabel("pencil eigenvalue")
    ax.legend()
    _save(fig, path)


def plot_energies(path, report, sigma0):
    fig, axes = plt.subplots(3, 1, figsize=(6, 7), sharex=True)
    t = report.t
    axes[0].plot(t, report.E, label="E")
    axes[0].plot(t, report.F, label="F")
    axes[0].axhline(-0.25 * sigma0**4, color="gray", lw=0.8, ls="--")
    axes[0].legend()
    axes[1].semilogy(t, np.maximum(report.S_plus, 1e-300), label="S+")
    axes[1].semilogy(t, np.maximum(report.S_minus, 1e-300), label="S-")
    axes[1].legend()
    axes[2].plot(t, report.alpha, label="alpha")
    for s in (-sigma0, 0.0, sigma0):
        axes[2].axhline(s, color="gray", lw=0.8, ls="--")
    axes[2].set_xlabel("t")
    axes[2].legend()
    for v in report.violations[:200]:
        axes[0].axvline(v.t, color="red", lw=0.5)
    _save(fig, path)


def plot_phase(path, report):
    fig, ax = plt.subplots(figsize=(4.5, 4))
    ax.plot(report.alpha, report.normBw, lw=0.7)
    ax.set_xlabel("alpha")
    ax.set_ylabel("|Bw|")
    _save(fig, path)


def plot_sweep(path, data, rows):
    colors = {"+sigma0": "tab:blue", "-sigma0": "tab:orange", "0": "tab:green", "UNRESOLVED": "k", "ERROR": "r"}
    fig, ax = plt.subplots(figsize=(4.5, 4))
    for d, r in zip(data, rows):
        c = d.u_coeffs
        ax.plot(c[0], c[1] if c.size > 1 else 0.0, "o", ms=3, color=colors.get(r.label, "k"))
    ax.set_xlabel("c1")
    ax.set_ylabel("c2")
    ax.set_title("initial position coefficients by basin")
    _save(fig, path)
