"""Figure-data export: each figure is a flat CSV plus a rendered PNG.

Rendering uses the matplotlib Agg backend so the harness can run headless.
"""

from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

import beamsense as bs
from beamsense.sparse import L1Config, SolverError, build_rss_dictionary, solve_phaseless_l1


def _save(fig, path_png):
    fig.tight_layout()
    fig.savefig(path_png, dpi=150)
    plt.close(fig)


def fig1_sparsity_study(
    cfg=None,
    out_dir=".",
    n_elements=72,
    n_directional=72,
    n_sensing=24,
    gamma=0.01,
    alpha=0.2,
    n_paths_grid=(1, 2, 3, 4),
    n_trials=100,
    seed=2,
):
    """Selection accuracy and residual of the nonnegative L1 program with a
    PN dictionary vs a sparse-beam (QPD) dictionary, over channel sparsity.

    Channels are on-grid: L distinct directional angles with geometrically
    decaying gains and i.i.d. uniform path phases.
    """
    geom = bs.ArrayGeometry(n_elements)
    grid = np.linspace(-45, 45, n_directional)
    directional = bs.pencil_codebook(geom, grid)
    pn = bs.pn_codebook(geom, n_sensing, seed=seed + 1)
    # widened-beam centers evenly spaced in sine (spatial-frequency) space
    sin_lim = np.sin(np.deg2rad(45))
    centers = np.rad2deg(np.arcsin(np.linspace(-sin_lim, sin_lim, n_sensing)))
    qpd = bs.qpd_codebook(geom, [bs.QpdParams(np.pi, a) for a in centers])
    books = {"pn": pn, "sparse": qpd}
    dicts = {k: build_rss_dictionary(v, directional) for k, v in books.items()}
    l1 = L1Config(gamma=gamma)

    rows = []
    for L in n_paths_grid:
        acc = {k: 0 for k in books}
        eps = {k: [] for k in books}
        for t in range(n_trials):
            rng = np.random.default_rng((seed, L, t))
            idx = rng.choice(n_directional, size=L, replace=False)
            gains = np.exp(-alpha * np.arange(1, L + 1))
            phases = np.exp(1j * rng.uniform(0, 2 * np.pi, L))
            h = sum(
                g * p * bs.array_response(geom, grid[i])
                for g, p, i in zip(gains, phases, idx)
            )
            truth = bs.best_beam_label(directional, h)
            for name, cb in books.items():
                y = np.abs(cb.weights.conj().T @ h)
                try:
                    sol = solve_phaseless_l1(dicts[name], y, l1)
                    acc[name] += int(sol.selected == truth)
                    eps[name].append(sol.epsilon)
                except SolverError as e:
                    eps[name].append(e.epsilon)
        for name in books:
            rows.append(
                (L, name, acc[name] / n_trials, float(np.median(eps[name])))
            )

    csv_path = os.path.join(out_dir, "fig1.csv")
    with open(csv_path, "w") as f:
        f.write("L,codebook,accuracy,median_epsilon\n")
        for r in rows:
            f.write(f"{r[0]},{r[1]},{r[2]:.17g},{r[3]:.17g}\n")

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    for name, marker in (("pn", "o"), ("sparse", "s")):
        sub = [r for r in rows if r[1] == name]
        ax1.plot([r[0] for r in sub], [r[2] for r in sub], marker=marker, label=name)
        ax2.semilogy([r[0] for r in sub], [r[3] for r in sub], marker=marker, label=name)
    ax1.set_xlabel("number of paths L")
    ax1.set_ylabel("selection accuracy")
    ax1.set_ylim(0, 1.05)
    ax2.set_xlabel("number of paths L")
    ax2.set_ylabel("median residual")
    ax1.legend()
    ax2.legend()
    png_path = os.path.join(out_dir, "fig1.png")
    _save(fig, png_path)
    return [csv_path, png_path]


def _read_sweep(sweep_csv):
    with open(sweep_csv) as f:
        return list(csv.DictReader(f))


def fig6_loss_vs_alpha(sweep_csv, out_dir):
    """Percentile gain loss vs channel decay alpha, at the largest M."""
    rows = [r for r in _read_sweep(sweep_csv) if r["alpha"] != "all"]
    if not rows:
        return []
    m_max = max(int(r["M"]) for r in rows)
    rows = [r for r in rows if int(r["M"]) == m_max]
    csv_path = os.path.join(out_dir, "fig6.csv")
    with open(csv_path, "w") as f:
        f.write("algorithm,codebook,M,alpha,percentile,loss_db\n")
        for r in rows:
            f.write(",".join(r[c] for c in
                             ("algorithm", "codebook", "M", "alpha",
                              "percentile", "loss_db")) + "\n")
    fig, ax = plt.subplots(figsize=(6, 4))
    for alg in sorted({r["algorithm"] for r in rows}):
        sub = sorted((float(r["alpha"]), float(r["loss_db"]))
                     for r in rows if r["algorithm"] == alg)
        ax.plot([a for a, _ in sub], [l for _, l in sub], marker="o", label=alg)
    ax.set_xlabel("path decay alpha")
    ax.set_ylabel(f"gain loss (dB), M={m_max}")
    ax.legend()
    png_path = os.path.join(out_dir, "fig6.png")
    _save(fig, png_path)
    return [csv_path, png_path]


def fig7_loss_vs_m(sweep_csv, out_dir):
    """Percentile gain loss vs number of measurements, whole test set."""
    rows = [r for r in _read_sweep(sweep_csv) if r["alpha"] == "all"]
    if not rows:
        return []
    csv_path = os.path.join(out_dir, "fig7.csv")
    with open(csv_path, "w") as f:
        f.write("algorithm,codebook,M,percentile,loss_db\n")
        for r in rows:
            f.write(",".join(r[c] for c in
                             ("algorithm", "codebook", "M", "percentile",
                              "loss_db")) + "\n")
    fig, ax = plt.subplots(figsize=(6, 4))
    for alg in sorted({r["algorithm"] for r in rows}):
        sub = sorted((int(r["M"]), float(r["loss_db"]))
                     for r in rows if r["algorithm"] == alg)
        ax.plot([m for m, _ in sub], [l for _, l in sub], marker="o", label=alg)
    ax.set_xlabel("number of measurements M")
    ax.set_ylabel("gain loss (dB)")
    ax.legend()
    png_path = os.path.join(out_dir, "fig7.png")
    _save(fig, png_path)
    return [csv_path, png_path]


def fig9_required_measurements(required_json, out_dir):
    """Bar chart of the minimal M meeting the gain-loss threshold."""
    with open(required_json) as f:
        data = json.load(f)
    req = data["required_measurements"]
    csv_path = os.path.join(out_dir, "fig9.csv")
    with open(csv_path, "w") as f:
        f.write("algorithm,required_measurements\n")
        for alg in sorted(req):
            f.write(f"{alg},{req[alg] if req[alg] is not None else 'unmet'}\n")
    fig, ax = plt.subplots(figsize=(6, 4))
    algs = sorted(req)
    vals = [req[a] if req[a] is not None else 0 for a in algs]
    bars = ax.bar(algs, vals)
    for bar, a in zip(bars, algs):
        if req[a] is None:
            ax.text(bar.get_x() + bar.get_width() / 2, 0.5, "unmet",
                    ha="center", rotation=90)
    ax.set_ylabel(
        f"required M ({data['threshold_db']:g} dB @ {data['percentile']:g}th pct)"
    )
    png_path = os.path.join(out_dir, "fig9.png")
    _save(fig, png_path)
    return [csv_path, png_path]
