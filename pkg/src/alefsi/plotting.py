"""PNG figures of a run's diagnostics series (headless matplotlib)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _semilogy(ax, t, y, label):
    y = np.asarray(y, float)
    ax.semilogy(t, np.where(y > 0, y, np.nan), label=label)


def plot_run(records, directory, prefix: str = "") -> list:
    """Write ``norms.png``, ``interface.png`` and ``conservation.png``; returns the paths."""
    directory = Path(directory)
    t = np.array([r.t for r in records])
    out = []

    fig, ax = plt.subplots(figsize=(7, 4))
    for name, label in (("N", "N"), ("D", "D"), ("v_H2_fluid", "|v|_H2 fluid"), ("vt_H1_fluid", "|v_t|_H1 fluid"),
                        ("vh_H1_solid", "|v^h|_H1 solid"), ("etah_H2_solid", "|eta^h|_H2 solid")):
        _semilogy(ax, t, [getattr(r, name) for r in records], label)
    ax.set_xlabel("t")
    ax.set_title("norms")
    ax.legend(fontsize=7)
    fig.tight_layout()
    p = directory / f"{prefix}norms.png"
    fig.savefig(p, dpi=110)
    plt.close(fig)
    out.append(p)

    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
    _semilogy(a1, t, [r.flatness for r in records], "flatness")
    a1.set_xlabel("t")
    a1.set_title("|eta|_H5/2 on the interface")
    a2.plot(t, [r.crucial_ratio for r in records])
    a2.set_xlabel("t")
    a2.set_title("crucial ratio lhs/rhs")
    fig.tight_layout()
    p = directory / f"{prefix}interface.png"
    fig.savefig(p, dpi=110)
    plt.close(fig)
    out.append(p)

    fig, (a1, a2, a3) = plt.subplots(1, 3, figsize=(12, 3.5))
    a1.plot(t, [r.energy for r in records])
    a1.set_title("energy")
    _semilogy(a2, t, [abs(r.energy_residual) for r in records], "|r|")
    a2.set_title("energy ledger defect")
    _semilogy(a3, t, [r.volume_err for r in records], "volume")
    a3.set_title("relative volume drift")
    for a in (a1, a2, a3):
        a.set_xlabel("t")
    fig.tight_layout()
    p = directory / f"{prefix}conservation.png"
    fig.savefig(p, dpi=110)
    plt.close(fig)
    out.append(p)
    return out
