"""SVG report plots: per-(regime, kernel-type) mean regret curves with one
standard-deviation bands per policy, and the delay-kernel shapes."""

from __future__ import annotations

import csv
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "banditalloc"
import matplotlib.pyplot as plt  # noqa: E402

import numpy as np  # noqa: E402


def read_regret(path: str):
    """(regime, kernel_type) -> policy -> seed -> list of (round, cum_regret)."""
    table: dict = defaultdict(lambda: defaultdict(lambda: defaultdict(list)))
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"seed", "policy", "regime", "kernel_type", "round", "cum_regret"}
        missing = required - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"regret.csv missing columns: {sorted(missing)}")
        for row in reader:
            key = (row["regime"], row["kernel_type"])
            table[key][row["policy"]][int(row["seed"])].append(
                (int(row["round"]), float(row["cum_regret"]))
            )
    return table


def mean_std_band(per_seed: dict):
    """Rounds, mean curve, and std curve across seeds (ddof=0)."""
    seeds = sorted(per_seed)
    curves = []
    for seed in seeds:
        rows = sorted(per_seed[seed])
        curves.append([v for _, v in rows])
    arr = np.asarray(curves)
    rounds = np.asarray([t for t, _ in sorted(per_seed[seeds[0]])])
    return rounds, arr.mean(axis=0), arr.std(axis=0)


def render_plots(report_dir: str) -> list[str]:
    """Write one regret SVG per (regime, kernel_type) plus the kernel shapes;
    returns the created paths."""
    regret_path = os.path.join(report_dir, "regret.csv")
    table = read_regret(regret_path)
    created = []
    for (regime, kernel_type), by_policy in sorted(table.items()):
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        for policy in sorted(by_policy):
            rounds, mean, std = mean_std_band(by_policy[policy])
            ax.plot(rounds, mean, label=policy, linewidth=1.4)
            ax.fill_between(rounds, mean - std, mean + std, alpha=0.18)
        ax.set_xlabel("round")
        ax.set_ylabel("cumulative regret")
        ax.set_title(f"{regime}, {kernel_type}")
        ax.legend(fontsize=8)
        out = os.path.join(report_dir, f"regret_{regime}_{kernel_type}.svg")
        fig.savefig(out, metadata={"Date": None})
        plt.close(fig)
        created.append(out)

    kernels_path = os.path.join(report_dir, "kernels.csv")
    if os.path.exists(kernels_path):
        series: dict = defaultdict(list)
        with open(kernels_path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                series[(row["kernel_type"], int(row["resource"]))].append(
                    (int(row["tau"]), float(row["weight"]))
                )
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        for (kernel_type, resource), rows in sorted(series.items()):
            rows.sort()
            ax.plot([t for t, _ in rows], [w for _, w in rows],
                    label=f"{kernel_type} r{resource}", linewidth=1.4)
        ax.set_xlabel("delay (rounds)")
        ax.set_ylabel("kernel weight")
        ax.legend(fontsize=8)
        out = os.path.join(report_dir, "kernels.svg")
        fig.savefig(out, metadata={"Date": None})
        plt.close(fig)
        created.append(out)
    return created
