"""Campaign reports: per-trial CSV, JSON summary and SVG grid heatmaps."""
import csv
import json
import os

import numpy as np

from regrasp.graph.search import PHASES

ID_COLUMNS = ("object", "initial", "goal", "trial", "mode", "seed", "init_yaw", "goal_yaw",
              "identity", "shared_grasps")
RESULT_COLUMNS = ("success", "failure_phase", "reason", "re_searches", "rotations_tried",
                  "graphs_built", "graph_violations", "plan_length", "revalidated")
TIME_COLUMNS = tuple(f"t_{p}" for p in PHASES) + ("t_other", "t_total")
COLUMNS = ID_COLUMNS + RESULT_COLUMNS + TIME_COLUMNS

_INT = {"initial", "goal", "trial", "seed", "identity", "shared_grasps", "success",
        "re_searches", "rotations_tried", "graphs_built", "graph_violations", "plan_length"}
_FLOAT = {"init_yaw", "goal_yaw"} | set(TIME_COLUMNS)


def annotate(rows, meta):
    """Add cell classification columns from the per-object grasp sets."""
    out = []
    for r in rows:
        v = meta[r["object"]]["valid"]
        a, b = v[str(r["initial"])]["master"], v[str(r["goal"])]["master"]
        out.append({**r, "identity": int(r["initial"] == r["goal"]),
                    "shared_grasps": len(set(a) & set(b))})
    return out


def write_csv(rows, path):
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\n")
        wr.writeheader()
        for r in rows:
            wr.writerow({k: r.get(k, "") for k in COLUMNS})


def read_csv(path):
    rows = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            for k in r:
                if k in _INT:
                    r[k] = int(r[k])
                elif k in _FLOAT:
                    r[k] = float(r[k])
                elif k == "revalidated":
                    r[k] = "" if r[k] == "" else int(r[k])
            rows.append(r)
    return rows


def _mean(xs):
    return sum(xs) / len(xs) if xs else None


def _mode_stats(rs):
    n = len(rs)
    ok = [r for r in rs if r["success"] == 1]
    return {"trials": n, "successes": len(ok),
            "success_rate": len(ok) / n if n else None,
            "mean_time": _mean([r["t_total"] for r in rs]),
            "mean_time_success": _mean([r["t_total"] for r in ok]),
            "timeouts": sum(r["failure_phase"] == "timeout" for r in rs)}


def aggregate(rows):
    """Summary dictionary computed from CSV-level rows only."""
    objs = {}
    for r in rows:
        o = objs.setdefault(r["object"], {})
        o.setdefault((r["initial"], r["goal"]), []).append(r)
    modes = sorted({r["mode"] for r in rows})
    summary = {"modes": modes, "trials": len(rows), "objects": {}, "phases": {}}
    for name in sorted(objs):
        cells = []
        for (i, j) in sorted(objs[name]):
            rs = objs[name][(i, j)]
            cell = {"initial": i, "goal": j, "identity": rs[0]["identity"],
                    "shared_grasps": rs[0]["shared_grasps"],
                    "trials": len({r["trial"] for r in rs})}
            for m in modes:
                cell[m] = _mode_stats([r for r in rs if r["mode"] == m])
            cells.append(cell)
        n = 1 + max(max(i, j) for i, j in objs[name])
        summary["objects"][name] = {"placements": n, "cells": cells}
    for m in modes:
        rs = [r for r in rows if r["mode"] == m]
        ok = [r for r in rs if r["success"] == 1]
        summary["phases"][m] = {
            **{c: _mean([r[c] for r in rs]) for c in TIME_COLUMNS},
            "re_searches": _mean([r["re_searches"] for r in rs]),
            "rotations_tried": _mean([r["rotations_tried"] for r in rs]),
            "plan_length": _mean([r["plan_length"] for r in ok]),
            "success_rate": len(ok) / len(rs) if rs else None,
            "revalidated": sum(r["revalidated"] == 1 for r in ok),
            "successes": len(ok),
            "graph_violations": sum(r["graph_violations"] for r in rs),
            "timeouts": sum(r["failure_phase"] == "timeout" for r in rs),
            "max_time": max([r["t_total"] for r in rs], default=None),
        }
    return summary


def write_summary(summary, path):
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _grid(summary, name, mode, key):
    o = summary["objects"][name]
    n = o["placements"]
    G = np.full((n, n), np.nan)
    for c in o["cells"]:
        v = c.get(mode, {}).get(key)
        if v is not None:
            G[c["initial"], c["goal"]] = v
    return G


def write_heatmaps(summary, out_dir):
    """success.svg and time.svg: one (initial x goal) grid per object and mode."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "regrasp"
    names = sorted(summary["objects"])
    modes = summary["modes"] or ["single", "dual"]
    paths = {}
    for fname, key, label, cmap, vmax in (("success.svg", "success_rate", "success rate",
                                           "viridis", 1.0),
                                          ("time.svg", "mean_time", "mean time [s]",
                                           "magma", None)):
        rows = max(1, len(names))
        fig, axes = plt.subplots(rows, len(modes), figsize=(3.2 * len(modes), 3.0 * rows),
                                 squeeze=False)
        for a, name in enumerate(names):
            for b, m in enumerate(modes):
                ax = axes[a, b]
                G = _grid(summary, name, m, key)
                im = ax.imshow(G, cmap=cmap, vmin=0.0, vmax=vmax, origin="upper")
                for (i, j), v in np.ndenumerate(G):
                    if np.isfinite(v):
                        ax.text(j, i, f"{v:.2f}", ha="center", va="center", fontsize=6,
                                color="w" if v < (vmax or np.nanmax(G)) * 0.5 else "k")
                ax.set_title(f"{name} / {m}", fontsize=8)
                ax.set_xlabel("goal placement", fontsize=7)
                ax.set_ylabel("initial placement", fontsize=7)
                ax.set_xticks(range(G.shape[1]))
                ax.set_yticks(range(G.shape[0]))
                fig.colorbar(im, ax=ax, shrink=0.8, label=label)
        if not names:
            for ax in axes.ravel():
                ax.set_title("no trials", fontsize=8)
                ax.set_xticks([])
                ax.set_yticks([])
        fig.tight_layout()
        p = os.path.join(out_dir, fname)
        fig.savefig(p, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths[fname] = p
    return paths


def emit_reports(rows, out_dir):
    """Write trials.csv, summary.json, success.svg and time.svg into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    write_csv(rows, os.path.join(out_dir, "trials.csv"))
    # aggregate what was written, so the summary is reproducible from the CSV
    summary = aggregate(read_csv(os.path.join(out_dir, "trials.csv")))
    write_summary(summary, os.path.join(out_dir, "summary.json"))
    write_heatmaps(summary, out_dir)
    return summary
