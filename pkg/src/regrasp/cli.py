"""Command-line entry point: grasps, placements, single regrasp queries, comparisons."""
import argparse
import json
import logging
import os
import platform
import sys
import time

import numpy as np

from regrasp.config import load_config

log = logging.getLogger("regrasp")


def _dump(obj, path):
    text = json.dumps(obj, indent=1)
    if path in (None, "-"):
        print(text)
    else:
        d = os.path.dirname(path)
        if d:
            os.makedirs(d, exist_ok=True)
        with open(path, "w") as fh:
            fh.write(text + "\n")


def _object(args, cfg):
    from regrasp.bench.objects import load_object
    from regrasp.task import ObjectModel
    name, mesh, boxes = load_object(args.object)
    return ObjectModel.build(name, mesh, boxes, cfg)


def cmd_plan_grasps(args, cfg):
    obj = _object(args, cfg)
    _dump({"object": obj.name, "grasps": [g.to_dict() for g in obj.grasps]}, args.out)
    log.info("%d grasps", len(obj.grasps))
    return 0


def cmd_plan_placements(args, cfg):
    obj = _object(args, cfg)
    _dump({"object": obj.name, "placements": [p.to_dict() for p in obj.placements]}, args.out)
    log.info("%d placements", len(obj.placements))
    return 0


def cmd_build_cache(args, cfg):
    from regrasp.task import World
    w = World(cfg)
    p = w.ensure_handover(args.cache_dir or cfg.cache_dir, args.rebuild_cache)
    print(json.dumps({"handover_point": [float(x) for x in p]}))
    return 0


def cmd_plan_regrasp(args, cfg):
    from regrasp.bench.run import TrialSpec, build_context, run_trial
    ctx = build_context(args.object, cfg, args.cache_dir, args.rebuild_cache)
    spec = TrialSpec(ctx.obj.name, args.initial, args.init_yaw % (2 * np.pi), args.goal,
                     args.goal_yaw % (2 * np.pi), args.mode, args.seed)
    row, plan = run_trial(ctx, spec)
    out = {"result": row, "plan": None if plan is None else plan.to_dict()}
    _dump(out, args.out)
    if args.trajectories and plan is not None:
        _dump([{"label": s["label"], "arm": s["arm"], "waypoints": s["waypoints"]}
               for s in plan.segments], args.trajectories)
    log.info("success=%s time=%.2fs", row["success"], row["t_total"])
    return 0 if row["success"] else 1


def cmd_compare(args, cfg):
    from regrasp.bench.report import emit_reports
    from regrasp.bench.run import run_campaign
    modes = tuple(m.strip() for m in args.modes.split(",") if m.strip())
    objects = args.object.split(",") if args.object else None
    t0 = time.perf_counter()
    rows, _ = run_campaign(cfg, objects, args.trials, args.seed, modes, args.cache_dir,
                           args.workers, progress=args.verbose)
    summary = emit_reports(rows, args.out)
    _dump({"wall_time_s": time.perf_counter() - t0, "trials_run": len(rows),
           "objects": objects or list(cfg.bench.objects),
           "trials": cfg.bench.trials if args.trials is None else args.trials,
           "seed": cfg.bench.seed if args.seed is None else args.seed, "modes": list(modes),
           "workers": args.workers, "cpus": os.cpu_count(), "python": platform.python_version(),
           "numpy": np.__version__}, os.path.join(args.out, "run.json"))
    for m, v in summary["phases"].items():
        log.info("%s: success %.3f, mean time %.2fs", m, v["success_rate"] or 0.0,
                 v["t_total"] or 0.0)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="regrasp", description=__doc__)
    p.add_argument("--config", help="YAML configuration file")
    p.add_argument("--cache-dir", help="approach-map cache directory")
    p.add_argument("--rebuild-cache", action="store_true",
                   help="recompute the approach maps even if a cache file exists")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("plan-grasps", help="antipodal grasps of an object")
    g.add_argument("--object", required=True, help="builtin id or mesh path")
    g.add_argument("--out", default="-")
    g.set_defaults(fn=cmd_plan_grasps)

    g = sub.add_parser("plan-placements", help="stable placements with associated grasps")
    g.add_argument("--object", required=True)
    g.add_argument("--out", default="-")
    g.set_defaults(fn=cmd_plan_placements)

    g = sub.add_parser("build-cache", help="build or load the handover approach maps")
    g.set_defaults(fn=cmd_build_cache)

    g = sub.add_parser("plan-regrasp", help="plan one reorientation task")
    g.add_argument("--object", required=True)
    g.add_argument("--initial", type=int, required=True)
    g.add_argument("--goal", type=int, required=True)
    g.add_argument("--init-yaw", type=float, default=0.0)
    g.add_argument("--goal-yaw", type=float, default=0.0)
    g.add_argument("--mode", choices=("single", "dual"), default="single")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="-", help="plan JSON")
    g.add_argument("--trajectories", help="optional trajectory JSON")
    g.set_defaults(fn=cmd_plan_regrasp)

    g = sub.add_parser("compare", help="paired single-arm vs dual-arm campaign")
    g.add_argument("--object", help="comma-separated builtin ids or mesh paths")
    g.add_argument("--trials", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--modes", default="single,dual")
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_compare)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    cfg = load_config(args.config)
    if args.rebuild_cache and args.cmd not in ("build-cache", "plan-regrasp"):
        from regrasp.task import World
        World(cfg).ensure_handover(args.cache_dir or cfg.cache_dir, True)
    try:
        return args.fn(args, cfg)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
