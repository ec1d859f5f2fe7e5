"""Static figures rendered from the CSV files the CLI has already written."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# deterministic SVG output (no random ids, no timestamps)
matplotlib.rcParams["svg.hashsalt"] = "phaselock-echo"
matplotlib.rcParams["svg.fonttype"] = "none"

_METADATA = {"Date": None, "Creator": None}


def _read_columns(path: Path) -> dict[str, list[float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols: dict[str, list[float]] = {name: [] for name in reader.fieldnames or []}
        for row in reader:
            for name in cols:
                cell = row[name]
                cols[name].append(float(cell) if cell not in ("", None) else math.nan)
    return cols


def plot_signal_csv(csv_path: str | Path, out_path: str | Path, title: str = "",
                    marks: dict[str, float] | None = None) -> Path:
    """Echo intensity |P|^2 vs time, with populations underneath when present."""
    cols = _read_columns(Path(csv_path))
    has_pops = "pop1" in cols
    fig, axes = plt.subplots(2 if has_pops else 1, 1, sharex=True, figsize=(7, 5 if has_pops else 3.2),
                             squeeze=False)
    ax = axes[0, 0]
    ax.plot(cols["t_us"], cols["intensity"], lw=1.0, color="k")
    ax.set_ylabel(r"$|P|^2$")
    for label, t in (marks or {}).items():
        ax.axvline(t, color="tab:red", lw=0.6, ls="--")
        ax.annotate(label, (t, ax.get_ylim()[1]), fontsize=8, ha="center", va="bottom", color="tab:red")
    if title:
        ax.set_title(title, fontsize=10)
    if has_pops:
        ax2 = axes[1, 0]
        for i, color in zip((1, 2, 3), ("tab:blue", "tab:green", "tab:red")):
            ax2.plot(cols["t_us"], cols[f"pop{i}"], lw=1.0, color=color, label=rf"$\rho_{{{i}{i}}}$")
        ax2.set_ylabel("population")
        ax2.legend(fontsize=8, loc="right")
    axes[-1, 0].set_xlabel(r"time ($\mu$s)")
    fig.tight_layout()
    out = Path(out_path)
    fig.savefig(out, metadata=_METADATA)
    plt.close(fig)
    return out


def plot_sweep_csv(csv_path: str | Path, out_path: str | Path, axis_label: str = "value") -> Path:
    """Signed efficiency and echo intensity against the swept value."""
    cols = _read_columns(Path(csv_path))
    fig, (a1, a2) = plt.subplots(2, 1, sharex=True, figsize=(6, 4.5))
    a1.plot(cols["value"], cols["efficiency"], "o-", ms=3, lw=1.0)
    a1.axhline(0, color="0.6", lw=0.5)
    a1.set_ylabel("signed efficiency")
    a2.semilogy(cols["value"], cols["intensity"], "s-", ms=3, lw=1.0, color="tab:red")
    a2.set_ylabel("echo intensity")
    a2.set_xlabel(axis_label)
    fig.tight_layout()
    out = Path(out_path)
    fig.savefig(out, metadata=_METADATA)
    plt.close(fig)
    return out
