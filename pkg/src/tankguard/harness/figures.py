"""PNG renderings of the comparison artifacts."""
from __future__ import annotations

from pathlib import Path

import numpy as np


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_all(out: Path, table, traj, traces, dt=1e-3):
    plt = _plt()
    files = []

    fig, ax = plt.subplots(figsize=(7, 3.5))
    labels = [r["config"] for r in table]
    x = np.arange(len(labels))
    metrics = (("success", "success"), ("violated_force", "force"), ("violated_tank", "tank"),
               ("violated_flow", "flow"))
    w = 0.8 / len(metrics)
    for i, (m, name) in enumerate(metrics):
        ax.bar(x + (i - 1.5) * w, [r[f"{m}_mean"] for r in table], w, yerr=[r[f"{m}_std"] for r in table],
               label=name, capsize=2)
    ax.set_xticks(x, labels, rotation=20, ha="right")
    ax.set_ylabel("episodes")
    ax.legend(fontsize=8)
    fig.tight_layout()
    files.append(out / "table.png")
    fig.savefig(files[-1], dpi=120)
    plt.close(fig)

    if traj:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        for label, (t, mean, std) in traj.items():
            ax.plot(t * dt, mean, label=label)
            ax.fill_between(t * dt, mean - std, mean + std, alpha=0.2)
        ax.set_xlabel("time [s]")
        ax.set_ylabel("tank energy [J]")
        ax.legend(fontsize=8)
        fig.tight_layout()
        files.append(out / "energy_trajectory.png")
        fig.savefig(files[-1], dpi=120)
        plt.close(fig)

    if traces:
        fig, axes = plt.subplots(3, 1, figsize=(6, 6), sharex=True)
        for label, rows in traces.items():
            t = np.array([r["tick"] for r in rows]) * dt
            axes[0].plot(t, [r["k_eig2"] for r in rows], label=label)
            axes[1].plot(t, [r["flow_applied"] for r in rows])
            axes[2].plot(t, [r["e"] for r in rows])
        axes[0].set_ylabel("max stiffness [N/m]")
        axes[1].set_ylabel("flow [W]")
        axes[2].set_ylabel("tank [J]")
        axes[2].set_xlabel("time [s]")
        axes[0].legend(fontsize=8)
        fig.tight_layout()
        files.append(out / "trace.png")
        fig.savefig(files[-1], dpi=120)
        plt.close(fig)
    return files
