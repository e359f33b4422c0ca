"""Regrasp graph containers, builders and structural checks.

Nodes are (state, grasp) pairs arranged on per-state circles. A circle is
named by a short label: ``init`` (upper layer), ``P<k>`` (lower layer,
placement k) in single-arm graphs; ``init``, ``goal``, ``HM`` and ``HS`` in
dual-arm graphs.
"""
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
from scipy.sparse import csgraph, csr_matrix


class EmptyState(ValueError):
    pass


TRANSIT, TRANSFER = "transit", "transfer"


@dataclass(frozen=True)
class GraphNode:
    id: int
    circle: str
    grasp: int
    hand: str              # "single", "master" or "slave"
    layer: str             # "upper" or "lower"
    state: tuple           # ("placement", id) or ("handover", rotation index)


@dataclass(frozen=True)
class GraphEdge:
    u: int
    v: int
    kind: str              # transit or transfer
    bridge: bool = False   # transit between the two handover circles


@dataclass(eq=False)
class RegraspGraph:
    mode: str
    nodes: list = field(default_factory=list)
    circles: dict = field(default_factory=dict)      # label -> [node ids]
    g: nx.Graph = field(default_factory=nx.Graph)
    _csr: dict = field(default=None, repr=False)

    def add_node(self, circle, grasp, hand, layer, state):
        n = GraphNode(len(self.nodes), circle, grasp, hand, layer, state)
        self.nodes.append(n)
        self.circles.setdefault(circle, []).append(n.id)
        self.g.add_node(n.id)
        self._csr = None
        return n.id

    def add_edge(self, u, v, kind, weight, bridge=False):
        a, b = min(u, v), max(u, v)
        self.g.add_edge(a, b, kind=kind, weight=float(weight), bridge=bridge)
        self._csr = None

    def edge_kind(self, u, v):
        return self.g.edges[u, v]["kind"]

    def edges(self, kind=None):
        for u, v, d in self.g.edges(data=True):
            if kind is None or d["kind"] == kind:
                yield GraphEdge(min(u, v), max(u, v), d["kind"], d.get("bridge", False))

    def is_bridge(self, u, v):
        return self.g.edges[u, v].get("bridge", False)

    def node_of(self, circle, grasp):
        for i in self.circles.get(circle, ()):
            if self.nodes[i].grasp == grasp:
                return i
        return None

    def summary(self):
        kinds = {}
        for e in self.edges():
            k = "bridge" if e.bridge else e.kind
            kinds[k] = kinds.get(k, 0) + 1
        return {"nodes": len(self.nodes), "circles": len(self.circles), **kinds}


def _clique(G, ids, weight):
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            G.add_edge(ids[i], ids[j], TRANSIT, weight)


def build_single_arm(placements, initial, goal, hand="right", costs=(1.0, 2.0)):
    """Two-layer graph: upper initial circle, lower circle per placement.

    ``placements`` maps placement id to its valid grasp ids (or Placement
    objects carrying per-hand validity).
    """
    valid = _valid_map(placements, hand)
    if not valid.get(initial):
        raise EmptyState(f"initial placement {initial} has no valid grasp")
    if not valid.get(goal):
        raise EmptyState(f"goal placement {goal} has no valid grasp")
    transit, transfer = costs
    G = RegraspGraph("single")
    up = [G.add_node("init", gid, "single", "upper", ("placement", initial))
          for gid in valid[initial]]
    _clique(G, up, transit)
    lower = {}
    for pid in sorted(valid):
        ids = [G.add_node(f"P{pid}", gid, "single", "lower", ("placement", pid))
               for gid in valid[pid]]
        _clique(G, ids, transit)
        lower[pid] = ids
    circles = [up] + [lower[p] for p in sorted(lower)]
    for a in range(len(circles)):
        ga = {G.nodes[i].grasp: i for i in circles[a]}
        for b in range(a + 1, len(circles)):
            for j in circles[b]:
                i = ga.get(G.nodes[j].grasp)
                if i is not None:
                    G.add_edge(i, j, TRANSFER, transfer)
    return G


def build_dual_arm(initial, goal, handover, init_grasps, goal_grasps, master_grasps,
                   slave_grasps, pairs, costs=(1.0, 2.0, 2.0)):
    """Master sub-graph (initial + HM) and slave sub-graph (goal + HS), bridged.

    ``pairs`` lists compatible (master grasp, slave grasp) at the handover.
    Handover circles get no intra-circle edges.
    """
    if not init_grasps:
        raise EmptyState(f"initial placement {initial} has no usable master grasp")
    if not goal_grasps:
        raise EmptyState(f"goal placement {goal} has no usable slave grasp")
    transit, transfer, bridge = costs
    G = RegraspGraph("dual")
    ini = [G.add_node("init", gid, "master", "upper", ("placement", initial))
           for gid in init_grasps]
    hm = [G.add_node("HM", gid, "master", "lower", ("handover", handover))
          for gid in master_grasps]
    gol = [G.add_node("goal", gid, "slave", "upper", ("placement", goal))
           for gid in goal_grasps]
    hs = [G.add_node("HS", gid, "slave", "lower", ("handover", handover))
          for gid in slave_grasps]
    _clique(G, ini, transit)
    _clique(G, gol, transit)
    for up, low in ((ini, hm), (gol, hs)):
        by = {G.nodes[i].grasp: i for i in low}
        for i in up:
            j = by.get(G.nodes[i].grasp)
            if j is not None:
                G.add_edge(i, j, TRANSFER, transfer)
    m_by = {G.nodes[i].grasp: i for i in hm}
    s_by = {G.nodes[i].grasp: i for i in hs}
    for gm, gs in pairs:
        if gm in m_by and gs in s_by:
            G.add_edge(m_by[gm], s_by[gs], TRANSIT, bridge, bridge=True)
    return G


def _valid_map(placements, hand):
    if isinstance(placements, dict):
        return {int(k): list(v) for k, v in placements.items()}
    return {p.id: p.valid_grasps(hand) for p in placements}


def check_invariants(G):
    """Count structural violations; returns a dict of zero-or-more counts."""
    v = {"transfer_grasp": 0, "transit_state": 0, "handover_intra": 0, "layers": 0}
    for e in G.edges():
        a, b = G.nodes[e.u], G.nodes[e.v]
        if e.kind == TRANSFER:
            if a.grasp != b.grasp or a.state == b.state and a.circle == b.circle:
                v["transfer_grasp"] += 1
            if G.mode == "dual" and a.hand != b.hand:
                v["transfer_grasp"] += 1
        elif e.kind == TRANSIT and e.bridge:
            if G.mode != "dual" or {a.circle, b.circle} != {"HM", "HS"}:
                v["transit_state"] += 1
        elif e.kind == TRANSIT:
            if a.circle != b.circle or a.state != b.state:
                v["transit_state"] += 1
            if a.circle in ("HM", "HS") and a.circle == b.circle:
                v["handover_intra"] += 1
        else:
            v["transit_state"] += 1
    upper = {n.circle for n in G.nodes if n.layer == "upper"}
    lower = {n.circle for n in G.nodes if n.layer == "lower"}
    if G.mode == "single":
        if upper != {"init"} or "init" in lower or any(n.hand != "single" for n in G.nodes):
            v["layers"] += 1
    else:
        if not upper <= {"init", "goal"} or not lower <= {"HM", "HS"}:
            v["layers"] += 1
        states = {n.state for n in G.nodes if n.circle in ("HM", "HS")}
        if len(states) > 1:
            v["layers"] += 1
    return v


def _layout(G, alternate):
    """CSR layout of the search graph plus a virtual source and sink.

    With ``alternate`` every node gets a second copy that can only be entered
    by a transit edge and only left by a transfer edge, so paths alternate
    transit and transfer (no two transits in a row). Node ``c * n`` is the
    source (edges to every first copy), ``c * n + 1`` the sink (edges from
    every copy). Only the edge weights change between searches.
    """
    n, m = len(G.nodes), G.g.number_of_edges()
    key = (n, m, alternate)
    if G._csr is not None and G._csr["key"] == key:
        return G._csr
    E = [(min(u, v), max(u, v), d["weight"], d["kind"] == TRANSIT)
         for u, v, d in G.g.edges(data=True)]
    u = np.array([e[0] for e in E], dtype=np.int64)
    v = np.array([e[1] for e in E], dtype=np.int64)
    w = np.array([e[2] for e in E], dtype=float)
    tr = np.array([e[3] for e in E], dtype=bool)
    c = 2 if alternate else 1
    S, T = c * n, c * n + 1
    ids = np.arange(c * n)
    if alternate:
        # transfer: from either copy into the first copy; transit: first -> second
        rows = [u, v, np.where(tr, -1, u + n), np.where(tr, -1, v + n)]
        cols = [np.where(tr, v + n, v), np.where(tr, u + n, u), v, u]
    else:
        rows, cols = [u, v], [v, u]
    eidx = np.concatenate([np.arange(len(E))] * len(rows))
    rows = np.concatenate(rows + [np.full(n, S), ids])
    cols = np.concatenate(cols + [np.arange(n), np.full(c * n, T)])
    keep = rows >= 0
    order = np.lexsort((cols[keep], rows[keep]))
    indptr = np.searchsorted(rows[keep][order], np.arange(c * n + 3))
    G._csr = {"key": key, "n": n, "c": c, "u": u, "v": v, "w": w, "edge_id": u * n + v,
              "eidx": eidx[keep[:len(eidx)]], "order": order,
              "indices": cols[keep][order].astype(np.int32),
              "indptr": indptr.astype(np.int32)}
    return G._csr


def shortest_tree(G, sources, targets=None, banned_nodes=(), banned_edges=(), allowed=None,
                  alternate=False):
    """Single Dijkstra pass from weighted virtual sources (scipy csgraph).

    Returns (dist, pred, layout); layout node ``i`` maps to graph node
    ``i % n``, the virtual source is ``c * n`` and the sink ``c * n + 1``.
    """
    L = _layout(G, alternate)
    n, c = L["n"], L["c"]
    ok = np.ones(n, dtype=bool)
    if allowed is not None:
        ok[:] = False
        ok[list(allowed)] = True
    if banned_nodes:
        ok[list(banned_nodes)] = False
    w = np.where(ok[L["u"]] & ok[L["v"]], L["w"], np.inf)
    if banned_edges:
        keys = np.fromiter((a * n + b for a, b in banned_edges), dtype=np.int64)
        w[np.isin(L["edge_id"], keys)] = np.inf
    src = np.full(n, np.inf)
    for s, x in sources.items():
        if ok[s]:
            src[s] = min(src[s], x)
    dst = np.full(n, np.inf)
    for t, x in (targets or {}).items():
        if ok[t]:
            dst[t] = x
    # virtual edges carry a unit offset so zero weights stay explicit edges
    data = np.concatenate([w[L["eidx"]], src + 1.0, np.tile(dst, c) + 1.0])[L["order"]]
    M = csr_matrix((data, L["indices"], L["indptr"]), shape=(c * n + 2, c * n + 2))
    dist, pred = csgraph.dijkstra(M, directed=True, indices=c * n, return_predecessors=True)
    return dist, pred, L


def dijkstra(G, sources, targets, banned_nodes=(), banned_edges=(), alternate=False):
    """Shortest path from weighted virtual sources to weighted virtual targets.

    ``sources`` and ``targets`` map node id -> extra weight. With
    ``alternate`` no two transit edges follow each other. Returns
    (cost, path) or (inf, None); results are deterministic.
    """
    dist, pred, L = shortest_tree(G, sources, targets, banned_nodes, banned_edges,
                                  alternate=alternate)
    n, S, T = L["n"], L["c"] * L["n"], L["c"] * L["n"] + 1
    if not np.isfinite(dist[T]):
        return float("inf"), None
    path = []
    u = int(pred[T])
    while u != S:
        path.append(u % n)
        u = int(pred[u])
    return float(dist[T]) - 2.0, path[::-1]
