"""SVG figures rendered from the CSV outputs of a run (never from in-memory state)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .runner import read_columns  # noqa: E402

plt.rcParams["svg.hashsalt"] = "hsfrag"  # stable element ids across runs


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_quench(out: Path) -> list[Path]:
    d = read_columns(out / "quench_mean.csv")
    files = []
    for obs in ("imbalance", "pe", "ee", "ndw", "kdelta", "pe_shots"):
        key = f"{obs}_mean"
        if key not in d:
            continue
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for state in dict.fromkeys(d["state"]):
            sel = d["state"] == state
            ax.plot(d["t_ns"][sel], d[key][sel], label=state)
        ax.set_xlabel("t (ns)")
        ax.set_ylabel(obs)
        ax.legend(fontsize=7)
        files.append(_save(fig, out / f"quench_{obs}.svg"))
    return files


def plot_eigensurvey(out: Path) -> list[Path]:
    files = []
    for path in sorted(out.glob("eigensurvey_r*.csv")):
        d = read_columns(path)
        fig, ax = plt.subplots(figsize=(5, 3.5))
        sc = ax.scatter(d["eps"], d["pe"], c=d["ndw"], s=2, cmap="viridis")
        fig.colorbar(sc, ax=ax, label="n_DW")
        ax.set_xlabel("normalized energy")
        ax.set_ylabel("participation entropy")
        files.append(_save(fig, path.with_suffix(".svg")))
    return files


def plot_fragmentation(out: Path) -> list[Path]:
    files = []
    for path in sorted(out.glob("fragmentation_r*_s*.csv")):
        d = read_columns(path)
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.5))
        t = np.maximum(d["t_ns"], d["t_ns"][d["t_ns"] > 0].min() if (d["t_ns"] > 0).any() else 1)
        a1.semilogx(t, d["dim_k_running"], label="state")
        a1.semilogx(t, d["dim_k_partner_running"], label="partner")
        a1.set_xlabel("t (ns)")
        a1.set_ylabel("dim K_delta")
        a1.legend(fontsize=7)
        a2.semilogx(t, d["eta_running"])
        a2.set_xlabel("t (ns)")
        a2.set_ylabel("eta")
        files.append(_save(fig, path.with_suffix(".svg")))
    return files


def plot_sweep(out: Path) -> list[Path]:
    files = []
    if (out / "sweep_imbalance.csv").exists():
        d = read_columns(out / "sweep_imbalance.csv")
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for state in dict.fromkeys(d["state"]):
            sel = d["state"] == state
            sem = np.nan_to_num(d["sem"][sel])
            ax.errorbar(d["value"][sel], d["late_imbalance"][sel], yerr=sem, marker="o", label=state)
        ax.set_xlabel(str(d["parameter"][0]))
        ax.set_ylabel("late-time imbalance")
        ax.legend(fontsize=7)
        files.append(_save(fig, out / "sweep_imbalance.svg"))
    if (out / "sweep_rstat.csv").exists():
        d = read_columns(out / "sweep_rstat.csv")
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.errorbar(d["value"], d["r_mean"], yerr=np.nan_to_num(d["sem"]), marker="o")
        ax.axhline(0.5307, ls="--", c="gray")
        ax.axhline(0.3863, ls=":", c="gray")
        ax.set_xlabel(str(d["parameter"][0]))
        ax.set_ylabel("<r>")
        files.append(_save(fig, out / "sweep_rstat.svg"))
    return files


PLOTTERS = {
    "quench": plot_quench,
    "eigensurvey": plot_eigensurvey,
    "fragmentation": plot_fragmentation,
    "sweep": plot_sweep,
}
