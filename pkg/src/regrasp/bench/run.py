"""Paired Monte Carlo comparison of single-arm and dual-arm regrasp."""
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from regrasp.bench.objects import load_object
from regrasp.bench.report import annotate
from regrasp.graph.search import (PHASES, Infeasible, Metrics, Timeout, dual_arm_plan,
                                  single_arm_plan)
from regrasp.graph.structure import EmptyState
from regrasp.replay import replay_plan
from regrasp.task import ObjectContext, ObjectModel, World


@dataclass(frozen=True)
class TrialSpec:
    object: str
    initial: int
    init_yaw: float
    goal: int
    goal_yaw: float
    mode: str
    seed: int = 0
    trial: int = 0

    def __post_init__(self):
        for y in (self.init_yaw, self.goal_yaw):
            if not 0.0 <= y < 2 * np.pi:
                raise ValueError("yaws must lie in [0, 2*pi)")
        if self.mode not in ("single", "dual"):
            raise ValueError(f"unknown mode {self.mode!r}")


def cell_yaws(seed, obj_index, initial, goal, trials):
    """(trials, 2) initial and goal yaws shared by both modes of a cell."""
    rng = np.random.default_rng([seed, obj_index, initial, goal])
    return rng.uniform(0.0, 2 * np.pi, size=(trials, 2))


def _hands(world, mode):
    r = world.robot
    return (r.master, r.master) if mode == "single" else (r.master, r.slave)


def run_trial(ctx, spec, revalidate=True):
    """Run one trial; failures are recorded, never raised. Returns (row, plan)."""
    w = ctx.world
    cfg = w.config
    met = Metrics()
    ph = met.phases
    deadline = time.perf_counter() + cfg.scene.timeout
    row = {"object": spec.object, "initial": spec.initial, "goal": spec.goal,
           "trial": spec.trial, "mode": spec.mode, "seed": spec.seed,
           "init_yaw": spec.init_yaw, "goal_yaw": spec.goal_yaw,
           "success": 0, "failure_phase": "", "reason": ""}
    rng = np.random.default_rng([spec.seed, spec.trial]) if cfg.search.random_ends else None
    plan = None
    try:
        with ph("placement_validation"):
            places = {p.id: p for p in ctx.obj.placements}
            if spec.initial not in places or spec.goal not in places:
                raise Infeasible("unknown placement", "placement_validation")
            h0, h1 = _hands(w, spec.mode)
            if not places[spec.initial].valid_grasps(h0):
                raise Infeasible("initial placement has no table-valid grasp",
                                 "placement_validation")
            if not places[spec.goal].valid_grasps(h1):
                raise Infeasible("goal placement has no table-valid grasp",
                                 "placement_validation")
        fn = single_arm_plan if spec.mode == "single" else dual_arm_plan
        plan = fn(ctx, spec.initial, spec.init_yaw, spec.goal, spec.goal_yaw, met,
                  deadline=deadline, rng=rng)
        row["success"] = 1
    except Infeasible as exc:
        row["failure_phase"], row["reason"] = exc.phase, exc.reason
    except EmptyState as exc:
        row["failure_phase"], row["reason"] = "graph_build", str(exc)
    except Timeout as exc:
        row["failure_phase"], row["reason"] = "timeout", str(exc)
    total = ph.total()
    row.update({"re_searches": met.re_searches, "rotations_tried": met.rotations_tried,
                "graphs_built": met.graphs_built, "graph_violations": met.graph_violations,
                "plan_length": len(plan.steps) if plan else 0})
    row["revalidated"] = ""
    if plan is not None and revalidate:
        rep = replay_plan(json.loads(json.dumps(plan.to_dict())), w, ctx.obj)
        row["revalidated"] = int(rep.ok)
        if not rep.ok:
            row["reason"] = "; ".join(rep.errors[:3])
    for p in PHASES:
        row[f"t_{p}"] = ph.t[p]
    row["t_other"] = max(0.0, total - sum(ph.t.values()))
    row["t_total"] = total
    return row, plan


def build_context(ident, config, cache_dir=None, rebuild=False, world=None):
    world = world or World(config)
    world.ensure_handover(cache_dir or config.cache_dir, rebuild)
    name, mesh, boxes = load_object(ident)
    return ObjectContext(world, ObjectModel.build(name, mesh, boxes, config))


def object_specs(ctx, obj_index, trials, seed, modes):
    n = len(ctx.obj.placements)
    specs = []
    for i in range(n):
        for j in range(n):
            yaws = cell_yaws(seed, obj_index, i, j, trials)
            for t in range(trials):
                for m in modes:
                    specs.append(TrialSpec(ctx.obj.name, i, float(yaws[t, 0]), j,
                                           float(yaws[t, 1]), m, seed, t))
    return specs


def _run_object(args):
    ident, obj_index, config, trials, seed, modes, cache_dir, progress = args
    ctx = build_context(ident, config, cache_dir)
    rows = []
    for k, spec in enumerate(object_specs(ctx, obj_index, trials, seed, modes)):
        row, _ = run_trial(ctx, spec)
        rows.append(row)
        if progress:
            print(f"[{ctx.obj.name}] {k + 1} {spec.mode} {spec.initial}->{spec.goal} "
                  f"ok={row['success']} t={row['t_total']:.2f}s", flush=True)
    return {"object": ctx.obj.name, "rows": rows, "meta": object_meta(ctx)}


def object_meta(ctx):
    """Per-placement grasp sets used to classify cells."""
    r = ctx.world.robot
    return {"placements": len(ctx.obj.placements), "grasps": len(ctx.obj.grasps),
            "valid": {str(p.id): {"master": list(map(int, p.valid_grasps(r.master))),
                                  "slave": list(map(int, p.valid_grasps(r.slave)))}
                      for p in ctx.obj.placements}}


def run_campaign(config, objects=None, trials=None, seed=None, modes=None, cache_dir=None,
                 workers=1, progress=False):
    """Run every (initial, goal) cell of every object in both modes.

    Objects are independent; with ``workers > 1`` they run in separate
    processes. Rows are ordered by (object, cell, trial, mode).
    """
    b = config.bench
    objects = list(objects or b.objects)
    trials = b.trials if trials is None else trials
    if trials < 1:
        raise ValueError("trials per cell must be >= 1")
    seed = b.seed if seed is None else seed
    modes = tuple(modes or b.modes)
    World(config).ensure_handover(cache_dir or config.cache_dir)    # build the cache once
    jobs = [(o, k, config, trials, seed, modes, cache_dir, progress)
            for k, o in enumerate(objects)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            res = list(ex.map(_run_object, jobs))
    else:
        res = [_run_object(j) for j in jobs]
    meta = {x["object"]: x["meta"] for x in res}
    rows = annotate([r for x in res for r in x["rows"]], meta)
    return rows, meta
