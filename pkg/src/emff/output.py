"""Trajectory CSV, summaries, per-figure plot data and rendered figures."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .constraint import full_positions
from .config import SwarmConfig
from .simulate import RunResult

SCHEMA_ID = "emff-trajectory/1"
FIGURE_SCHEMA_ID = "emff-figure/1"


def _fmt(x) -> str:
    return repr(float(x))


def trajectory_columns(n: int):
    cols = ["t"]
    cols += [f"r{j}_{a}" for j in range(2, n + 1) for a in "xyz"]
    cols += [f"sigma{j}_{a}" for j in range(1, n + 1) for a in "123"]
    cols += [f"rdot{j}_{a}" for j in range(2, n + 1) for a in "xyz"]
    cols += [f"omega{j}_{a}" for j in range(1, n + 1) for a in "xyz"]
    cols += ["q_err_norm", "rho", "momentum_norm", "uc_norm", "dither_phase"]
    return cols


def write_trajectory_csv(result: RunResult, path):
    """One row per recorded step; floats written with round-trip precision."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# schema: {SCHEMA_ID}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_columns(result.n))
        for i in range(result.t.size):
            row = [result.t[i], *result.q[i], *result.zeta[i], result.err_norm[i],
                   result.rho[i], result.momentum[i], result.uc_norm[i], result.phase[i]]
            w.writerow([_fmt(x) for x in row])
    return path


def read_trajectory_csv(path):
    """(column names, 2-D array) from a trajectory file."""
    with Path(path).open() as fh:
        first = fh.readline()
        if not first.startswith("# schema:"):
            raise ValueError("missing schema header")
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(x) for x in row] for row in reader])
    return header, data


def write_summary(result: RunResult, path):
    path = Path(path)
    lines = [f"{k}: {v}" for k, v in result.summary().items()]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_allocation_csv(result: RunResult, path):
    lg = result.allocation
    n = result.n
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# schema: {SCHEMA_ID}-allocation\n")
        w = csv.writer(fh, lineterminator="\n")
        cols = ["t", "residual", "iterations", "status"]
        cols += [f"mu{j}_{ch}_{a}" for j in range(1, n + 1) for ch in ("sin", "cos")
                 for a in "xyz"]
        w.writerow(cols)
        for i in range(len(lg.t)):
            w.writerow([_fmt(lg.t[i]), _fmt(lg.residual[i]), lg.iterations[i], lg.status[i]]
                       + [_fmt(x) for x in lg.dipoles[i]])
    return path


def _write_table(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        fh.write(f"# schema: {FIGURE_SCHEMA_ID}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def write_figure_data(result: RunResult, swarm: SwarmConfig, out_dir):
    """fig1 relative positions r_j - r_1, fig2 MRPs, fig3 inertial position triples."""
    out = Path(out_dir)
    n = result.n
    k = 3 * (n - 1)
    pos = np.array([full_positions(q, swarm) for q in result.q])
    rel = pos[:, 1:] - pos[:, :1]
    _write_table(out / "fig1_relative_positions.csv",
                 ["t"] + [f"r{j}_minus_r1_{a}" for j in range(2, n + 1) for a in "xyz"],
                 np.column_stack([result.t, rel.reshape(len(result.t), -1)]))
    _write_table(out / "fig2_mrps.csv",
                 ["t"] + [f"sigma{j}_{a}" for j in range(1, n + 1) for a in "123"],
                 np.column_stack([result.t, result.q[:, k:]]))
    _write_table(out / "fig3_positions_3d.csv",
                 ["t"] + [f"r{j}_{a}" for j in range(1, n + 1) for a in "xyz"],
                 np.column_stack([result.t, pos.reshape(len(result.t), -1)]))
    return pos


def render_figures(result: RunResult, swarm: SwarmConfig, out_dir):
    """PNG versions of the three figure tables."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    n = result.n
    k = 3 * (n - 1)
    pos = np.array([full_positions(q, swarm) for q in result.q])
    rel = pos[:, 1:] - pos[:, :1]
    t = result.t
    paths = []

    fig, axes = plt.subplots(3, 1, sharex=True, figsize=(7, 6))
    for a, ax in enumerate(axes):
        for j in range(n - 1):
            ax.plot(t, rel[:, j, a], label=f"r{j + 2} - r1")
        ax.set_ylabel(f"{'xyz'[a]} [m]")
    axes[0].legend(loc="upper right", fontsize=8)
    axes[-1].set_xlabel("t [s]")
    fig.suptitle("Relative positions")
    paths.append(out / "fig1_relative_positions.png")
    fig.savefig(paths[-1], dpi=110)
    plt.close(fig)

    fig, axes = plt.subplots(3, 1, sharex=True, figsize=(7, 6))
    for a, ax in enumerate(axes):
        for j in range(n):
            ax.plot(t, result.q[:, k + 3 * j + a], label=f"sat {j + 1}")
        ax.set_ylabel(f"sigma_{a + 1}")
    axes[0].legend(loc="upper right", fontsize=8)
    axes[-1].set_xlabel("t [s]")
    fig.suptitle("Modified Rodrigues parameters")
    paths.append(out / "fig2_mrps.png")
    fig.savefig(paths[-1], dpi=110)
    plt.close(fig)

    fig = plt.figure(figsize=(6, 6))
    ax = fig.add_subplot(projection="3d")
    for j in range(n):
        ax.plot(pos[:, j, 0], pos[:, j, 1], pos[:, j, 2], label=f"sat {j + 1}")
        ax.scatter(*pos[0, j], marker="o")
        ax.scatter(*pos[-1, j], marker="x")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_zlabel("z [m]")
    ax.legend(fontsize=8)
    fig.suptitle("Positions (o start, x end)")
    paths.append(out / "fig3_positions_3d.png")
    fig.savefig(paths[-1], dpi=110)
    plt.close(fig)
    return paths


def write_run_outputs(result: RunResult, swarm: SwarmConfig, out_dir, figures=True):
    """Everything a run produces, in one directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = [write_trajectory_csv(result, out / "trajectory.csv"),
             write_summary(result, out / "summary.txt")]
    write_figure_data(result, swarm, out)
    if result.allocation is not None:
        files.append(write_allocation_csv(result, out / "allocation.csv"))
    if figures:
        files += render_figures(result, swarm, out)
    return files
