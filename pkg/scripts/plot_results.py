#!/usr/bin/env python3
"""Quick-look plots for experiment CSVs; the package itself emits data only.

Usage: python scripts/plot_results.py <csv> [<csv> ...] [--out DIR]
The experiment kind is inferred from the header row.
"""

import argparse
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def read_rows(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return list(reader)


def plot_sweep(rows, x_key, out_path, log_y=True):
    x = np.array([float(r[x_key]) for r in rows])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(x, [float(r["peb_m"]) for r in rows], "k--", label="PEB")
    ax.errorbar(
        x,
        [float(r["rmse_m"]) for r in rows],
        yerr=[float(r["rmse_ci_half_m"]) for r in rows],
        marker="o",
        label="RMSE",
    )
    if log_y:
        ax.set_yscale("log")
    ax.set_xlabel(x_key)
    ax.set_ylabel("meters")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)


def plot_monotone(rows, x_key, out_path):
    x = np.array([float(r[x_key]) for r in rows])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(x, [float(r["worst_peb_m"]) for r in rows], marker="o", label="worst-case PEB")
    ax.plot(x, [float(r["peb_at_ue_m"]) for r in rows], marker="s", label="PEB at UE")
    if "traditional_worst_peb_m" in rows[0]:
        ax.axhline(float(rows[0]["traditional_worst_peb_m"]), color="k", ls=":",
                   label="traditional (worst case)")
    ax.set_xlabel(x_key.upper())
    ax.set_ylabel("meters")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)


def plot_map(rows, out_path):
    xs = sorted({float(r["x_m"]) for r in rows})
    ys = sorted({float(r["y_m"]) for r in rows})
    fig, axes = plt.subplots(1, 2, figsize=(9, 4), sharey=True)
    for ax, key, title in zip(axes, ("peb_uniform_m", "peb_optimal_m"), ("uniform", "optimized")):
        grid = np.full((len(ys), len(xs)), np.nan)
        for r in rows:
            grid[ys.index(float(r["y_m"])), xs.index(float(r["x_m"]))] = float(r[key])
        im = ax.imshow(
            grid, origin="lower", extent=(min(xs), max(xs), min(ys), max(ys)), aspect="auto"
        )
        ax.set_title(f"PEB, {title} shares [m]")
        ax.set_xlabel("x [m]")
        fig.colorbar(im, ax=ax)
    axes[0].set_ylabel("y [m]")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)


def plot_beampattern(rows, out_path):
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    cuts = ("elevation", "azimuth")
    for ax, cut in zip(axes, cuts):
        for ctype in sorted({r["codeword_type"] for r in rows}):
            sel = [r for r in rows if r["cut"] == cut and r["codeword_type"] == ctype]
            ax.plot(
                [float(r["offset_deg"]) for r in sel],
                [float(r["beampattern_db"]) for r in sel],
                label=f"type {ctype}",
            )
        ax.set_xlabel(f"{cut} offset [deg]")
        ax.grid(True, alpha=0.3)
        ax.legend()
    axes[0].set_ylabel("beampattern [dB]")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("csvs", nargs="+")
    parser.add_argument("--out", default=".", help="output directory for PNGs")
    args = parser.parse_args()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for path in args.csvs:
        rows = read_rows(path)
        if not rows:
            print(f"{path}: empty, skipped")
            continue
        header = set(rows[0])
        out_path = out_dir / (Path(path).stem + ".png")
        if "snr_db" in header:
            plot_sweep(rows, "snr_db", out_path)
        elif "lmr_db" in header:
            plot_sweep(rows, "lmr_db", out_path)
        elif "q" in header:
            plot_monotone(rows, "q", out_path)
        elif "s" in header:
            plot_monotone(rows, "s", out_path)
        elif "peb_uniform_m" in header:
            plot_map(rows, out_path)
        elif "beampattern" in header:
            plot_beampattern(rows, out_path)
        else:
            print(f"{path}: unrecognized columns, skipped")
            continue
        print(out_path)


if __name__ == "__main__":
    main()
