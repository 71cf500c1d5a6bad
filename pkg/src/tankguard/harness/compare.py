"""Aggregate evaluation directories into tables, trajectories and figures."""
from __future__ import annotations

import json
from collections import OrderedDict
from pathlib import Path

import numpy as np

from ..records import read_csv, write_csv

TABLE_METRICS = ("success", "violated_force", "violated_tank", "violated_flow", "tank_end", "energy_spent")


class CompareError(ValueError):
    pass


def load_eval_dir(d):
    d = Path(d)
    summary = d / "summary.json"
    episodes = d / "episodes.csv"
    if not summary.is_file() or not episodes.is_file():
        raise CompareError(f"{d}: not a completed evaluation (summary.json/episodes.csv missing)")
    info = json.loads(summary.read_text())
    _, rows = read_csv(episodes)
    if not rows:
        raise CompareError(f"{d}: no episodes")
    return info, rows


def per_seed_metrics(rows):
    """Per-seed values: counts for flags, means for energies."""
    out = {}
    for m in TABLE_METRICS:
        vals = np.array([float(r[m]) for r in rows])
        out[m] = float(vals.sum()) if m.startswith(("success", "violated")) else float(vals.mean())
    return out


def _trajectory_matrix(path):
    """Episodes x sampled-ticks matrix, shorter episodes held at their last value."""
    _, rows = read_csv(path)
    eps: dict[int, list] = {}
    for r in rows:
        eps.setdefault(int(r["episode"]), []).append((int(r["tick"]), float(r["e"])))
    return eps


def collect(dirs):
    groups: OrderedDict[str, list] = OrderedDict()
    mazes = set()
    for d in dirs:
        info, rows = load_eval_dir(d)
        mazes.add(info["maze"])
        groups.setdefault(info["label"], []).append((Path(d), info, rows))
    if len(mazes) > 1:
        raise CompareError(f"evaluations from different mazes cannot be compared: {sorted(mazes)}")
    return groups, mazes.pop()


def compare(dirs, out_dir, figures=True, trace_stride=10):
    """Write table.csv, energy_trajectory.csv, trace.csv (and PNGs) to ``out_dir``.

    All inputs are validated before anything is written.
    """
    if not dirs:
        raise CompareError("no evaluation directories given")
    groups, maze = collect(dirs)
    out = Path(out_dir)
    hashes = sorted({i["config_hash"] for g in groups.values() for _, i, _ in g})
    seeds = sorted({i["seed"] for g in groups.values() for _, i, _ in g})
    meta = {"config_hash": ",".join(hashes), "seeds": ",".join(map(str, seeds)), "maze": maze}

    table = []
    for label, members in groups.items():
        per = [per_seed_metrics(rows) for _, _, rows in members]
        row = {"config": label, "n_seeds": len(per), "episodes": len(members[0][2]),
               "seeds": " ".join(str(i["seed"]) for _, i, _ in members)}
        for m in TABLE_METRICS:
            v = np.array([p[m] for p in per])
            row[f"{m}_mean"] = float(v.mean())
            row[f"{m}_std"] = float(v.std())
        table.append(row)
    cols = ["config", "n_seeds", "seeds", "episodes"] + [f"{m}_{s}" for m in TABLE_METRICS for s in ("mean", "std")]

    traj_rows, traj = [], {}
    for label, members in groups.items():
        series = []
        for d, _, _ in members:
            p = d / "tank_traces.csv"
            if p.is_file():
                for pts in _trajectory_matrix(p).values():
                    series.append(pts)
        if not series:
            continue
        grid = sorted({t for pts in series for t, _ in pts})
        mat = np.empty((len(series), len(grid)))
        for i, pts in enumerate(series):
            ticks = np.array([t for t, _ in pts])
            es = np.array([e for _, e in pts])
            idx = np.searchsorted(ticks, grid, side="right") - 1
            mat[i] = es[np.clip(idx, 0, None)]
        mean, std = mat.mean(axis=0), mat.std(axis=0)
        traj[label] = (np.array(grid), mean, std)
        traj_rows.extend({"config": label, "tick": t, "e_mean": float(m), "e_std": float(s)}
                         for t, m, s in zip(grid, mean, std))

    trace_rows, traces = [], {}
    for label, members in groups.items():
        d = members[0][0]
        p = d / "episode_000.csv"
        if not p.is_file():
            continue
        _, rows = read_csv(p)
        sel = [r for i, r in enumerate(rows) if i % trace_stride == 0 or i == len(rows) - 1]
        for r in sel:
            trace_rows.append({"config": label, "seed": members[0][1]["seed"], "tick": int(r["tick"]),
                               "kxx": float(r["kxx"]), "kxy": float(r["kxy"]), "kyy": float(r["kyy"]),
                               "k_eig1": float(r["k_eig1"]), "k_eig2": float(r["k_eig2"]),
                               "e": float(r["e"]), "flow_applied": float(r["flow_applied"])})
        traces[label] = [trace_rows[i] for i in range(len(trace_rows) - len(sel), len(trace_rows))]

    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "table.csv", cols, table, meta)
    write_csv(out / "energy_trajectory.csv", ("config", "tick", "e_mean", "e_std"), traj_rows, meta)
    write_csv(out / "trace.csv", ("config", "seed", "tick", "kxx", "kxy", "kyy", "k_eig1", "k_eig2", "e",
                                  "flow_applied"), trace_rows, meta)
    written = [out / "table.csv", out / "energy_trajectory.csv", out / "trace.csv"]
    if figures:
        from .figures import render_all

        written += render_all(out, table, traj, traces, dt=1e-3)
    return written
