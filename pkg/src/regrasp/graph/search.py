"""Trim-and-research planning over single-arm and dual-arm regrasp graphs."""
import time
from dataclasses import dataclass, field

import numpy as np

from regrasp.graph.structure import (TRANSIT, build_dual_arm, build_single_arm,
                                     check_invariants, dijkstra, shortest_tree)
from regrasp.handover import rate_rotations
from regrasp.motion import Failure, interpolate, plan_motion, segment_valid
from regrasp.task import desc_key, scene_desc


class Infeasible(RuntimeError):
    def __init__(self, reason, phase="graph_search"):
        super().__init__(reason)
        self.reason = reason
        self.phase = phase


class Timeout(RuntimeError):
    pass


PHASES = ("placement_validation", "ik_ends", "handover_validation", "graph_build",
          "graph_search", "master_search", "slave_search", "node_validation",
          "motion_planning")


class Phases:
    """Wall-time accumulator keyed by phase (monotonic clock)."""

    def __init__(self):
        self.t = {p: 0.0 for p in PHASES}
        self._start = time.perf_counter()

    def __call__(self, name):
        return _Timer(self, name)

    def total(self):
        return time.perf_counter() - self._start


class _Timer:
    def __init__(self, acc, name):
        self.acc, self.name = acc, name

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.acc.t[self.name] += time.perf_counter() - self.t0
        return False


@dataclass
class Metrics:
    re_searches: int = 0
    rotations_tried: int = 0
    graph_violations: int = 0
    graphs_built: int = 0
    phases: Phases = field(default_factory=Phases)


@dataclass
class RegraspPlan:
    mode: str
    steps: list
    segments: list
    nodes: list
    metrics: dict = field(default_factory=dict)
    task: dict = field(default_factory=dict)

    def to_dict(self):
        return {"mode": self.mode, "task": self.task, "steps": self.steps, "nodes": self.nodes,
                "segments": self.segments, "metrics": self.metrics}


def _ranked(ids, rng=None):
    ids = list(ids)
    if rng is not None:
        ids = [ids[i] for i in rng.permutation(len(ids))]
    return ids


def _check_deadline(deadline):
    if deadline is not None and time.perf_counter() > deadline:
        raise Timeout("wall-clock budget exceeded")


class _Recorder:
    """Collects motion segments; plans or validates them through a cache."""

    def __init__(self, ctx, metrics):
        self.ctx = ctx
        self.metrics = metrics
        self.segments = []

    def _key(self, kind, a, b, desc):
        return (kind, tuple(np.round(a, 10)), tuple(np.round(b, 10)), desc_key(desc))

    def plan(self, label, desc, a, b):
        """Planned motion (T-RRT); raises Failure."""
        ctx = self.ctx
        cfg = ctx.world.config.motion
        key = self._key("plan", a, b, desc)
        with self.metrics.phases("motion_planning"):
            res = ctx.motion_cache.get(key)
            if res is None:
                try:
                    res = plan_motion(ctx.scene_from(desc), a, b, cfg, label).waypoints
                except Failure as exc:
                    res = exc
                ctx.motion_cache[key] = res
        if isinstance(res, Failure):
            raise res
        self.segments.append({"label": label, "arm": desc["arm"], "scene": desc,
                              "waypoints": np.asarray(res).tolist()})

    def straight(self, label, desc, a, b):
        """Straight joint-space segment, validated at planner resolution."""
        ctx = self.ctx
        step = ctx.world.config.motion.step
        key = self._key("line", a, b, desc)
        with self.metrics.phases("motion_planning"):
            ok = ctx.motion_cache.get(key)
            if ok is None:
                ok = segment_valid(ctx.scene_from(desc), a, b, step)
                ctx.motion_cache[key] = ok
        if not ok:
            raise Failure(f"{label} segment in collision")
        self.segments.append({"label": label, "arm": desc["arm"], "scene": desc,
                              "waypoints": interpolate(a, b, step).tolist()})


# ------------------------------------------------------------ single arm

def _visits(G, path):
    """Group consecutive path nodes that share a circle."""
    out = []
    for n in path:
        c = G.nodes[n].circle
        if out and out[-1][0] == c:
            out[-1][1].append(n)
        else:
            out.append((c, [n]))
    return out


def bind_yaw(ctx, arm, placement, gids):
    """First sampled yaw at which every grasp in ``gids`` has a valid node.

    Returns (yaw index, {gid: NodeConfigs}); raises Infeasible listing the
    grasps that are infeasible at every yaw (empty when only the combination
    fails).
    """
    n = len(ctx.world.yaw_samples())
    # IK is batched over every yaw; collision checks run lazily, yaw by yaw
    ctx.sampled_ik(arm, [(placement, k, g) for k in range(n) for g in gids])
    for k in range(n):
        if all(ctx.sampled_node(arm, placement, k, g).ok for g in gids):
            return k, {g: ctx.sampled_node(arm, placement, k, g) for g in gids}
    dead = [g for g in gids if not any(ctx.sampled_node(arm, placement, k, g).ok
                                       for k in range(n))]
    exc = Infeasible(f"no yaw binds grasps {list(gids)} at placement {placement.id}")
    exc.dead = dead
    raise exc


def single_arm_plan(ctx, initial, init_yaw, goal, goal_yaw, metrics=None, deadline=None,
                    graph=None, rng=None):
    """Single-arm trim-and-research. Returns a RegraspPlan or raises."""
    w = ctx.world
    cfg = w.config
    arm = w.robot.master
    other = w.robot.slave
    metrics = metrics or Metrics()
    ph = metrics.phases
    places = {p.id: p for p in ctx.obj.placements}
    if graph is None:
        with ph("graph_build"):
            graph = build_single_arm(list(ctx.obj.placements), initial, goal, arm,
                                     (cfg.search.transit_cost, cfg.search.transfer_cost))
        metrics.graph_violations += sum(check_invariants(graph).values())
        metrics.graphs_built += 1
    G = graph
    eps = cfg.search.rank_eps
    init_ids = _ranked(G.circles["init"], rng)
    goal_circle = f"P{goal}"
    goal_ids = _ranked(G.circles[goal_circle], rng)
    sources = {n: eps * r for r, n in enumerate(init_ids)}
    targets = {n: eps * r for r, n in enumerate(goal_ids)}
    banned_nodes, banned_edges = set(), set()
    fixed = {}        # (circle, gid) -> NodeConfigs at task yaws
    home_other = w.robot.home(other)
    home = w.robot.home(arm)

    ik_fixed = {}     # circle -> IK-only NodeConfigs of the whole circle

    def fixed_nodes(circle, pid, yaw, gids):
        need = [g for g in gids if (circle, g) not in fixed]
        if need:
            if circle not in ik_fixed:
                # IK is batched over the circle; collisions stay lazy
                ik_fixed[circle] = ctx.table_ik(arm, places[pid], yaw,
                                                [G.nodes[n].grasp for n in G.circles[circle]])
            r = ctx.check_table_nodes(arm, places[pid], yaw,
                                      {g: ik_fixed[circle][g] for g in need})
            for g in need:
                fixed[(circle, g)] = r[g]
        return {g: fixed[(circle, g)] for g in gids}

    first = True
    while True:
        _check_deadline(deadline)
        if not first:
            metrics.re_searches += 1
        first = False
        with ph("graph_search"):
            cost, path = dijkstra(G, sources, targets, banned_nodes, banned_edges,
                                  alternate=True)
        if path is None:
            raise Infeasible("regrasp graph disconnected")
        # -- nodes: bind yaws, IK and collisions
        bound = []        # (circle, pid, yaw, [(node, NodeConfigs)])
        trimmed = False
        with ph("node_validation"):
            for circle, nodes in _visits(G, path):
                pid = G.nodes[nodes[0]].state[1]
                gids = [G.nodes[n].grasp for n in nodes]
                if circle == "init" or circle == goal_circle:
                    yaw = init_yaw if circle == "init" else goal_yaw
                    confs = fixed_nodes(circle, pid, yaw, gids)
                    bad = [n for n, g in zip(nodes, gids) if not confs[g].ok]
                    if bad:
                        banned_nodes.update(bad)
                        trimmed = True
                        continue
                else:
                    try:
                        k, confs = bind_yaw(ctx, arm, places[pid], gids)
                        yaw = w.yaw_samples()[k]
                    except Infeasible as exc:
                        trimmed = True
                        if exc.dead:
                            banned_nodes.update(n for n, g in zip(nodes, gids) if g in exc.dead)
                        else:
                            for a, b in zip(nodes, nodes[1:]):
                                banned_edges.add((min(a, b), max(a, b)))
                        continue
                bound.append((circle, pid, yaw, [(n, confs[G.nodes[n].grasp]) for n in nodes]))
        if trimmed:
            continue
        # -- edges: motions in execution order
        rec = _Recorder(ctx, metrics)
        steps = []
        try:
            _single_arm_motions(ctx, G, bound, rec, steps, arm, home, home_other)
        except _EdgeFailure as ef:
            if ef.edge is None:
                sources.pop(ef.node, None)
                if not sources:
                    raise Infeasible("no start grasp reachable from home")
            else:
                banned_edges.add(ef.edge)
            continue
        nodes = [_node_record(ctx, G, n, c, w.placement_pose(places[pid], yaw), yaw)
                 for circle, pid, yaw, ncs in bound for n, c in ncs]
        return RegraspPlan("single", steps, rec.segments, nodes,
                           {"cost": cost, "path": list(map(int, path))},
                           _task(ctx, initial, init_yaw, goal, goal_yaw))


def _task(ctx, initial, init_yaw, goal, goal_yaw):
    return {"object": ctx.obj.name, "initial": int(initial), "init_yaw": float(init_yaw),
            "goal": int(goal), "goal_yaw": float(goal_yaw)}


class _EdgeFailure(Exception):
    def __init__(self, edge=None, node=None, reason=""):
        super().__init__(reason)
        self.edge, self.node = edge, node


def _node_record(ctx, G, n, c, T_obj, yaw):
    nd = G.nodes[n]
    return {"id": int(n), "circle": nd.circle, "grasp": int(nd.grasp), "hand": nd.hand,
            "state": [nd.state[0], int(nd.state[1])], "yaw": None if yaw is None else float(yaw),
            "object_pose": np.asarray(T_obj).tolist(),
            "frame": (T_obj @ ctx.obj.grasp(nd.grasp).frame).tolist(),
            "q_grasp": c.grasp.tolist(), "q_pre": c.pre.tolist(),
            "q_lift": None if c.lift is None else c.lift.tolist()}


def _single_arm_motions(ctx, G, bound, rec, steps, arm, home, home_other):
    w = ctx.world
    allow = w.config.scene.set_down_allow
    places = {p.id: p for p in ctx.obj.placements}
    seq = [(w.placement_pose(places[pid], yaw), pid, yaw, n, c)
           for circle, pid, yaw, ncs in bound for n, c in ncs]
    c0 = seq[0]
    g0 = G.nodes[c0[3]].grasp
    try:
        rec.plan("home_to_pregrasp", scene_desc(arm, home_other, c0[0], jaw=g0),
                 home, c0[4].pre)
    except Failure:
        raise _EdgeFailure(node=c0[3])
    for (ca, pa, ya, na, qa), (cb, pb, yb, nb, qb) in zip(seq, seq[1:]):
        edge = (min(na, nb), max(na, nb))
        ga, gb = G.nodes[na].grasp, G.nodes[nb].grasp
        start = len(rec.segments)
        try:
            if G.edge_kind(na, nb) == TRANSIT:
                jaw = ga if ctx.obj.grasp(ga).jaw_width >= ctx.obj.grasp(gb).jaw_width else gb
                rec.plan("transit", scene_desc(arm, home_other, ca, jaw=jaw),
                         qa.pre, qb.pre)
                kind = "transit"
            else:
                rec.straight("approach", scene_desc(arm, home_other, ca, jaw=ga),
                             qa.pre, qa.grasp)
                rec.straight("lift", scene_desc(arm, home_other, held=ga, allow=allow),
                             qa.grasp, qa.lift)
                rec.plan("transfer", scene_desc(arm, home_other, held=ga), qa.lift, qb.lift)
                rec.straight("set_down", scene_desc(arm, home_other, held=ga, allow=allow),
                             qb.lift, qb.grasp)
                rec.straight("retract", scene_desc(arm, home_other, cb, jaw=gb),
                             qb.grasp, qb.pre)
                kind = "transfer"
        except Failure:
            raise _EdgeFailure(edge=edge)
        steps.append({"kind": kind, "hand": arm, "start": int(na), "end": int(nb),
                      "grasps": [int(ga), int(gb)], "yaws": [float(ya), float(yb)],
                      "segments": list(range(start, len(rec.segments)))})


# --------------------------------------------------------------- dual arm

def _dijkstra_all(G, sources, allowed, banned_nodes, banned_edges):
    """Distances from weighted sources within the ``allowed`` node set."""
    n = len(G.nodes)
    dist, pred, _ = shortest_tree(G, sources, None, banned_nodes, banned_edges, allowed)
    reached = np.flatnonzero(np.isfinite(dist[:n]))
    d = {int(i): float(dist[i]) - 1.0 for i in reached}
    prev = {int(i): None if pred[i] == n else int(pred[i]) for i in reached}
    return d, prev


def _trace(prev, n):
    out = []
    while n is not None:
        out.append(n)
        n = prev[n]
    return out[::-1]


def bridge_clear(ctx, k, gm, qm, gs, qs):
    """Both arms at the handover (object held by the master) are collision-free."""
    key = (k, gm, gs)
    if key not in ctx._bridge:
        r = ctx.world.robot
        sc = ctx.scene(r.slave, other_q=qm, other_held=ctx.obj.grasp(gm),
                       jaw_grasp=ctx.obj.grasp(gs))
        ctx._bridge[key] = bool(sc.valid(qs)[0])
    return ctx._bridge[key]


def dual_arm_plan(ctx, initial, init_yaw, goal, goal_yaw, metrics=None, deadline=None,
                  rng=None):
    """Loop over rated handover rotations; per rotation build, bridge and trim."""
    w = ctx.world
    cfg = w.config
    r = w.robot
    master, slave = r.master, r.slave
    metrics = metrics or Metrics()
    ph = metrics.phases
    places = {p.id: p for p in ctx.obj.placements}
    pi, pg = places[initial], places[goal]
    eps = cfg.search.rank_eps
    with ph("ik_ends"):
        ini = ctx.table_nodes(master, pi, init_yaw, pi.valid_grasps(master))
        gol = ctx.table_nodes(slave, pg, goal_yaw, pg.valid_grasps(slave))
    init_ok = [g for g in pi.valid_grasps(master) if ini[g].ok]
    goal_ok = [g for g in pg.valid_grasps(slave) if gol[g].ok]
    if not init_ok:
        raise Infeasible("no IK-feasible master grasp at the initial placement", "ik_ends")
    if not goal_ok:
        raise Infeasible("no IK-feasible slave grasp at the goal placement", "ik_ends")
    T_init = w.placement_pose(pi, init_yaw)
    T_goal = w.placement_pose(pg, goal_yaw)
    order, rating = rate_rotations(w.rotations, w.buckets, T_goal[:3, :3])
    compat = ctx.compatibility()
    for k in order[:cfg.search.max_rotations]:
        _check_deadline(deadline)
        metrics.rotations_tried += 1
        with ph("handover_validation"):
            hmn = ctx.handover_nodes(master, k, init_ok)
            hsn = ctx.handover_nodes(slave, k, goal_ok)
        m_ok = [g for g in init_ok if hmn[g].ok]
        s_ok = [g for g in goal_ok if hsn[g].ok]
        pairs = [(a, b) for a in m_ok for b in s_ok if compat[a, b]]
        if not pairs:
            continue
        with ph("graph_build"):
            G = build_dual_arm(initial, goal, int(k), init_ok, goal_ok, m_ok, s_ok, pairs,
                               (cfg.search.transit_cost, cfg.search.transfer_cost,
                                cfg.search.bridge_cost))
        metrics.graph_violations += sum(check_invariants(G).values())
        metrics.graphs_built += 1
        plan = _dual_search(ctx, G, k, ini, gol, hmn, hsn, (T_init, init_yaw),
                            (T_goal, goal_yaw), metrics, deadline, rng, eps)
        if plan is not None:
            plan.metrics.update({"rotation": int(k), "rating": float(rating[k])})
            plan.task = _task(ctx, initial, init_yaw, goal, goal_yaw)
            return plan
    raise Infeasible("all handover rotations exhausted")


def _dual_search(ctx, G, k, ini, gol, hmn, hsn, init, goal, metrics, deadline, rng, eps):
    (T_init, init_yaw), (T_goal, goal_yaw) = init, goal
    w = ctx.world
    r = w.robot
    master, slave = r.master, r.slave
    ph = metrics.phases
    allow = w.config.scene.set_down_allow
    bridge_w = w.config.search.bridge_cost
    msub = set(G.circles.get("init", [])) | set(G.circles.get("HM", []))
    ssub = set(G.circles.get("goal", [])) | set(G.circles.get("HS", []))
    m_src = {n: eps * i for i, n in enumerate(_ranked(G.circles["init"], rng))}
    s_src = {n: eps * i for i, n in enumerate(_ranked(G.circles["goal"], rng))}
    banned_nodes, banned_edges = set(), set()
    bridges = sorted((e.u, e.v) if G.nodes[e.u].circle == "HM" else (e.v, e.u)
                     for e in G.edges() if e.bridge)
    hm_home, hs_home = r.home(master), r.home(slave)
    first = True
    while True:
        _check_deadline(deadline)
        if not first:
            metrics.re_searches += 1
        first = False
        with ph("master_search"):
            dm, pm = _dijkstra_all(G, m_src, msub, banned_nodes, banned_edges)
        with ph("slave_search"):
            ds, ps = _dijkstra_all(G, s_src, ssub, banned_nodes, banned_edges)
        best = None
        for a, b in bridges:
            if (min(a, b), max(a, b)) in banned_edges or a not in dm or b not in ds:
                continue
            c = dm[a] + bridge_w + ds[b]
            if best is None or c < best[0]:
                best = (c, a, b)
        if best is None:
            return None
        cost, a, b = best
        path = _trace(pm, a) + _trace(ps, b)[::-1]
        na, nb = G.nodes[a], G.nodes[b]
        gm, gs = na.grasp, nb.grasp
        qm, qs = hmn[gm], hsn[gs]
        bedge = (min(a, b), max(a, b))
        with ph("node_validation"):
            clear = bridge_clear(ctx, k, gm, qm.grasp, gs, qs.grasp)
        if not clear:
            banned_edges.add(bedge)
            continue
        rec = _Recorder(ctx, metrics)
        steps = []

        def conf(n):
            nd = G.nodes[n]
            return {"init": ini, "goal": gol, "HM": hmn, "HS": hsn}[nd.circle][nd.grasp]

        try:
            # master side: home, transits on the initial circle, transfer to the handover
            mpath = _trace(pm, a)
            n0 = mpath[0]
            try:
                rec.plan("home_to_pregrasp",
                         scene_desc(master, hs_home, T_init, jaw=G.nodes[n0].grasp),
                         hm_home, conf(n0).pre)
            except Failure:
                m_src.pop(n0, None)
                if not m_src:
                    return None
                continue
            for u, v in zip(mpath, mpath[1:]):
                e = (min(u, v), max(u, v))
                gu, gv = G.nodes[u].grasp, G.nodes[v].grasp
                start = len(rec.segments)
                try:
                    if G.edge_kind(u, v) == TRANSIT:
                        rec.plan("transit", scene_desc(master, hs_home, T_init, jaw=gu),
                                 conf(u).pre, conf(v).pre)
                        kind = "transit"
                    else:
                        cu = conf(u)
                        rec.straight("approach", scene_desc(master, hs_home, T_init, jaw=gu),
                                     cu.pre, cu.grasp)
                        rec.straight("lift", scene_desc(master, hs_home, held=gu, allow=allow),
                                     cu.grasp, cu.lift)
                        rec.plan("transfer", scene_desc(master, hs_home, held=gu),
                                 cu.lift, conf(v).grasp)
                        kind = "transfer"
                except Failure:
                    raise _EdgeFailure(edge=e)
                steps.append({"kind": kind, "hand": master, "start": int(u), "end": int(v),
                              "grasps": [int(gu), int(gv)],
                              "segments": list(range(start, len(rec.segments)))})
            # bridge: slave comes in, master lets go and leaves
            start = len(rec.segments)
            try:
                rec.plan("slave_to_pregrasp",
                         scene_desc(slave, qm.grasp, other_held=gm, jaw=gs), hs_home, qs.pre)
                rec.straight("slave_approach",
                             scene_desc(slave, qm.grasp, other_held=gm, jaw=gs),
                             qs.pre, qs.grasp)
                rec.straight("master_retract",
                             scene_desc(master, qs.grasp, other_held=gs, jaw=gm),
                             qm.grasp, qm.pre)
                rec.plan("master_to_home",
                         scene_desc(master, qs.grasp, other_held=gs, jaw=gm), qm.pre, hm_home)
            except Failure:
                raise _EdgeFailure(edge=bedge)
            steps.append({"kind": "handover", "hand": "both", "start": int(a), "end": int(b),
                          "grasps": [int(gm), int(gs)], "rotation": int(k),
                          "segments": list(range(start, len(rec.segments)))})
            # slave side: transfer to the goal and any transits there
            spath = _trace(ps, b)[::-1]
            for u, v in zip(spath, spath[1:]):
                e = (min(u, v), max(u, v))
                gu, gv = G.nodes[u].grasp, G.nodes[v].grasp
                start = len(rec.segments)
                try:
                    if G.edge_kind(u, v) == TRANSIT:
                        rec.plan("transit", scene_desc(slave, hm_home, T_goal, jaw=gv),
                                 conf(u).pre, conf(v).pre)
                        kind = "transit"
                    else:
                        cv = conf(v)
                        rec.plan("transfer", scene_desc(slave, hm_home, held=gu),
                                 conf(u).grasp, cv.lift)
                        rec.straight("set_down", scene_desc(slave, hm_home, held=gu,
                                                            allow=allow), cv.lift, cv.grasp)
                        rec.straight("retract", scene_desc(slave, hm_home, T_goal, jaw=gv),
                                     cv.grasp, cv.pre)
                        kind = "transfer"
                except Failure:
                    raise _EdgeFailure(edge=e)
                steps.append({"kind": kind, "hand": slave, "start": int(u), "end": int(v),
                              "grasps": [int(gu), int(gv)],
                              "segments": list(range(start, len(rec.segments)))})
        except _EdgeFailure as ef:
            banned_edges.add(ef.edge)
            continue
        nodes = []
        for n in path:
            nd = G.nodes[n]
            y = None
            if nd.circle == "init":
                y = init_yaw
            elif nd.circle == "goal":
                y = goal_yaw
            T = {"init": T_init, "goal": T_goal}.get(nd.circle)
            if T is None:
                T = w.handover_pose(ctx.obj, k)
            nodes.append(_node_record(ctx, G, n, conf(n), T, y))
        return RegraspPlan("dual", steps, rec.segments, nodes,
                           {"cost": cost, "path": list(map(int, path))})

