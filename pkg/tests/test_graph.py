import itertools

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regrasp.graph import (TRANSFER, TRANSIT, EmptyState, build_dual_arm, build_single_arm,
                           check_invariants, dijkstra)

valid_maps = st.dictionaries(st.integers(0, 5), st.sets(st.integers(0, 12), min_size=1,
                                                        max_size=8), min_size=2, max_size=6)


def _zero(v):
    return all(x == 0 for x in v.values())


def test_single_arm_set_intersection_oracle(lblock_ctx):
    obj = lblock_ctx.obj
    ps = obj.placements
    a, b = ps[0].id, ps[-1].id
    G = build_single_arm(ps, a, b)
    assert _zero(check_invariants(G))
    valid = {p.id: set(p.valid_grasps()) for p in ps}
    circles = ["init"] + [f"P{p}" for p in sorted(valid)]
    sets = {"init": valid[a], **{f"P{p}": valid[p] for p in valid}}
    for c in circles:
        k = len(sets[c])
        assert len(G.circles[c]) == k
        transit = [e for e in G.edges(TRANSIT)
                   if G.nodes[e.u].circle == c and G.nodes[e.v].circle == c]
        assert len(transit) == k * (k - 1) // 2
    for c1, c2 in itertools.combinations(circles, 2):
        n = sum(1 for e in G.edges(TRANSFER)
                if {G.nodes[e.u].circle, G.nodes[e.v].circle} == {c1, c2})
        assert n == len(sets[c1] & sets[c2])


def test_disjoint_placements_have_no_transfer():
    G = build_single_arm({0: [1, 2], 1: [3, 4]}, 0, 1)
    cross = [e for e in G.edges(TRANSFER)
             if {G.nodes[e.u].circle, G.nodes[e.v].circle} == {"P0", "P1"}]
    assert cross == []
    # the upper circle shares grasps with its own placement only
    assert len(list(G.edges(TRANSFER))) == 2


def test_empty_state_raises():
    with pytest.raises(EmptyState):
        build_single_arm({0: [], 1: [3]}, 0, 1)
    with pytest.raises(EmptyState):
        build_dual_arm(0, 1, 5, [1], [], [1], [2], [(1, 2)])


def test_dual_structure():
    G = build_dual_arm(0, 1, 7, [1, 2, 3], [4, 5], [1, 2, 9], [4, 6], [(1, 4), (2, 6), (9, 4)])
    assert _zero(check_invariants(G))
    s = G.summary()
    assert s["bridge"] == 3
    for c in ("HM", "HS"):
        ids = set(G.circles[c])
        assert not any(e.u in ids and e.v in ids for e in G.edges())
    # grasp 3 of the initial circle has no handover counterpart
    n3 = G.node_of("init", 3)
    assert all(G.edge_kind(n3, v) == TRANSIT for v in G.g.adj[n3])


def test_no_pairs_disconnects():
    G = build_dual_arm(0, 1, 7, [1], [4], [1], [4], [])
    ini, gol = G.node_of("init", 1), G.node_of("goal", 4)
    assert not nx.has_path(G.g, ini, gol)
    assert dijkstra(G, {ini: 0}, {gol: 0}) == (float("inf"), None)


def test_invariant_checker_detects_violations():
    G = build_single_arm({0: [1, 2], 1: [1, 3]}, 0, 1)
    a, b = G.node_of("P0", 2), G.node_of("P1", 3)
    G.add_edge(a, b, TRANSFER, 2.0)
    G.add_edge(G.node_of("P0", 1), G.node_of("P1", 3), TRANSIT, 1.0)
    v = check_invariants(G)
    assert v["transfer_grasp"] == 1 and v["transit_state"] == 1
    D = build_dual_arm(0, 1, 7, [1], [4], [1, 2], [4], [(1, 4)])
    D.add_edge(D.node_of("HM", 1), D.node_of("HM", 2), TRANSIT, 1.0)
    assert check_invariants(D)["handover_intra"] == 1


def _nx_cost(g, sources, targets):
    H = g.copy()
    H.add_node("s")
    H.add_node("t")
    for s, w in sources.items():
        H.add_edge("s", s, weight=w)
    for t, w in targets.items():
        H.add_edge(t, "t", weight=w)
    try:
        return nx.dijkstra_path_length(H, "s", "t")
    except nx.NetworkXNoPath:
        return float("inf")


@settings(max_examples=80, deadline=None)
@given(valid_maps, st.data())
def test_single_arm_invariants_and_dijkstra(valid, data):
    keys = sorted(valid)
    a = data.draw(st.sampled_from(keys))
    b = data.draw(st.sampled_from(keys))
    G = build_single_arm({k: sorted(v) for k, v in valid.items()}, a, b)
    assert _zero(check_invariants(G))
    src = {i: 0.01 * r for r, i in enumerate(G.circles["init"])}
    dst = {i: 0.01 * r for r, i in enumerate(G.circles[f"P{b}"])}
    cost, path = dijkstra(G, src, dst)
    ref = _nx_cost(G.g, src, dst)
    assert cost == pytest.approx(ref)
    if path is not None:
        w = sum(G.g.edges[u, v]["weight"] for u, v in zip(path, path[1:]))
        assert cost == pytest.approx(src[path[0]] + w + dst[path[-1]])
        assert dijkstra(G, src, dst) == (cost, path)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_dijkstra_with_bans(data):
    valid = data.draw(valid_maps)
    G = build_single_arm({k: sorted(v) for k, v in valid.items()}, min(valid), max(valid))
    nodes = list(range(len(G.nodes)))
    banned = set(data.draw(st.lists(st.sampled_from(nodes), max_size=4)))
    src = {i: 0.0 for i in G.circles["init"]}
    dst = {i: 0.0 for i in G.circles[f"P{max(valid)}"]}
    cost, path = dijkstra(G, src, dst, banned_nodes=banned)
    H = G.g.copy()
    H.remove_nodes_from(banned)
    ref = _nx_cost(H, {s: w for s, w in src.items() if s not in banned},
                   {t: w for t, w in dst.items() if t not in banned})
    assert cost == pytest.approx(ref)
    if path is not None:
        assert not banned & set(path)


@settings(max_examples=60, deadline=None)
@given(st.sets(st.integers(0, 9), min_size=1, max_size=6),
       st.sets(st.integers(0, 9), min_size=1, max_size=6),
       st.sets(st.integers(0, 9), max_size=8), st.sets(st.integers(0, 9), max_size=8),
       st.sets(st.tuples(st.integers(0, 9), st.integers(0, 9)), max_size=15))
def test_dual_invariants(ini, gol, hm, hs, pairs):
    G = build_dual_arm(0, 1, 3, sorted(ini), sorted(gol), sorted(hm), sorted(hs), sorted(pairs))
    assert _zero(check_invariants(G))
    n_bridge = sum(1 for e in G.edges() if e.bridge)
    assert n_bridge == len({(m, s) for m, s in pairs if m in hm and s in hs})
    n_tr = len(list(G.edges(TRANSFER)))
    assert n_tr == len(ini & hm) + len(gol & hs)


def _nx_alternating(G, sources, targets, banned_edges):
    # state (node, entered by transit); a transit may not follow a transit
    H = nx.DiGraph()
    for u, v, d in G.g.edges(data=True):
        if (min(u, v), max(u, v)) in banned_edges:
            continue
        t = d["kind"] == TRANSIT
        for a, b in ((u, v), (v, u)):
            H.add_edge((a, False), (b, t), weight=d["weight"])
            if not t:
                H.add_edge((a, True), (b, False), weight=d["weight"])
    for s, w in sources.items():
        H.add_edge("s", (s, False), weight=w)
    for t, w in targets.items():
        H.add_edge((t, False), "t", weight=w)
        H.add_edge((t, True), "t", weight=w)
    try:
        return nx.dijkstra_path_length(H, "s", "t")
    except (nx.NetworkXNoPath, nx.NodeNotFound):
        return float("inf")


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_alternating_dijkstra(data):
    valid = data.draw(valid_maps)
    G = build_single_arm({k: sorted(v) for k, v in valid.items()}, min(valid), max(valid))
    edges = sorted((min(e.u, e.v), max(e.u, e.v)) for e in G.edges())
    banned = set(data.draw(st.lists(st.sampled_from(edges), max_size=6)))
    src = {i: 0.01 * r for r, i in enumerate(G.circles["init"])}
    dst = {i: 0.01 * r for r, i in enumerate(G.circles[f"P{max(valid)}"])}
    cost, path = dijkstra(G, src, dst, banned_edges=banned, alternate=True)
    assert cost == pytest.approx(_nx_alternating(G, src, dst, banned))
    if path is not None:
        kinds = [G.edge_kind(u, v) for u, v in zip(path, path[1:])]
        assert not any(a == b == TRANSIT for a, b in zip(kinds, kinds[1:]))
        assert not banned & {(min(u, v), max(u, v)) for u, v in zip(path, path[1:])}
