import json

import numpy as np
import pytest

from graphwatch.graph import (
    AttributedGraph,
    GraphError,
    NoPathError,
    Topology,
    TopologyFormatError,
    dump_topology,
    line_graph,
    load_topology,
    nearest_free_ambulance,
    parse_topology,
    shortest_path,
)

from .conftest import brute_force_cost, random_simple_graph


def test_source_equals_target():
    g = line_graph([1.0, 2.0])
    assert shortest_path(g, 1, 1) == ([1], 0.0)


def test_line_graph_path():
    path, cost = shortest_path(line_graph([1.0, 2.0]), 0, 2)
    assert path == [0, 1, 2]
    assert cost == 3.0


def test_unreachable_raises():
    g = AttributedGraph(3, [(0, 1)], np.zeros((3, 2)), [[1.0, 0]])
    with pytest.raises(NoPathError):
        shortest_path(g, 0, 2)


def test_path_cost_matches_edges():
    rng = np.random.default_rng(3)
    for _ in range(50):
        g, edges, weights = random_simple_graph(rng)
        w = {frozenset(e): c for e, c in zip(edges, weights)}
        try:
            path, cost = shortest_path(g, 0, g.node_count - 1)
        except NoPathError:
            continue
        assert cost == pytest.approx(sum(w[frozenset(p)] for p in zip(path, path[1:])))


def test_reference_topology_enumeration_by_dfs():
    # 18 vertices is too many for permutations, so enumerate simple paths by DFS
    topo = load_topology()
    adj = {v: [] for v in range(topo.node_count)}
    for (u, v), c in zip(topo.edges.tolist(), topo.edge_class.tolist()):
        adj[u].append((v, float(c)))
        adj[v].append((u, float(c)))

    def best_from(s):
        best = np.full(topo.node_count, np.inf)
        stack = [(s, 0.0, 1 << s)]
        while stack:
            v, cost, seen = stack.pop()
            best[v] = min(best[v], cost)
            for w, c in adj[v]:
                if not seen >> w & 1:
                    stack.append((w, cost + c, seen | 1 << w))
        return best

    g = topo.nominal_graph()
    for s in topo.ambulance_nodes:
        oracle = best_from(s)
        for p in topo.patients:
            assert shortest_path(g, s, int(p))[1] == pytest.approx(oracle[p], rel=0, abs=1e-12)


def _station_graph(busy=(), weights=(1.0, 1.0, 1.0, 1.0)):
    # stations at 0 and 4, patient at 1: 0-1 adjacent, 4-3-2-1 three hops
    x = np.zeros((5, 2))
    x[[0, 4], 0] = 1
    for b in busy:
        x[b, 1] = 1
    edges = [(0, 1), (1, 2), (2, 3), (3, 4)]
    return AttributedGraph(5, edges, x, np.column_stack([weights, np.zeros(4)]))


def test_nearest_free_ambulance_adjacent_wins():
    assert nearest_free_ambulance(_station_graph(), 1) == (0, 1.0)


def test_nearest_free_ambulance_skips_busy():
    assert nearest_free_ambulance(_station_graph(busy=[0]), 1) == (4, 3.0)


def test_nearest_free_ambulance_all_busy():
    assert nearest_free_ambulance(_station_graph(busy=[0, 4]), 1) is None


def test_nearest_free_ambulance_tie_goes_to_lower_index():
    # patient 2 sits two hops from either station
    g = _station_graph()
    assert nearest_free_ambulance(g, 2) == (0, 2.0)
    mirrored = AttributedGraph(5, g.edges, g.node_attrs, g.edge_attrs[::-1])
    assert nearest_free_ambulance(mirrored, 2)[0] == 0


def test_nearest_free_ambulance_rejects_station():
    with pytest.raises(GraphError):
        nearest_free_ambulance(_station_graph(), 0)


@pytest.mark.parametrize("edges, attrs", [
    ([(0, 0)], [[1.0, 0]]),          # self-loop
    ([(0, 1), (1, 0)], [[1.0, 0], [1.0, 0]]),  # duplicate
    ([(0, 3)], [[1.0, 0]]),          # out of range
    ([(0, 1)], [[0.0, 0]]),          # zero travel time
    ([(0, 1)], [[1.0, 4]]),          # bad blocking level
])
def test_invalid_graph_rejected(edges, attrs):
    with pytest.raises(GraphError):
        AttributedGraph(3, edges, np.zeros((3, 2)), attrs)


def test_graph_arrays_are_read_only():
    g = line_graph([1.0])
    with pytest.raises(ValueError):
        g.edge_attrs[0, 0] = 5.0


def test_topology_roundtrip():
    topo = load_topology()
    again = parse_topology(dump_topology(topo))
    assert again.node_count == topo.node_count
    np.testing.assert_array_equal(again.edges, topo.edges)
    np.testing.assert_array_equal(again.edge_class, topo.edge_class)
    assert again.ambulance_nodes == topo.ambulance_nodes


def test_reference_topology_shape():
    topo = load_topology()
    assert topo.node_count == 18
    assert len(topo.ambulance_nodes) == 2
    assert set(np.unique(topo.edge_class)) == {1, 2, 3, 5}


def test_topology_error_reports_line():
    text = dump_topology(load_topology()).replace("[0, 1, 3]", "[0, 1, 4]")
    with pytest.raises(TopologyFormatError) as err:
        parse_topology(text)
    assert err.value.line == 5


def test_topology_bad_json():
    with pytest.raises(TopologyFormatError):
        parse_topology("{nodes: 3")


def test_topology_wrong_version():
    d = json.loads(dump_topology(load_topology()))
    d["version"] = 2
    with pytest.raises(TopologyFormatError):
        parse_topology(json.dumps(d))


def test_topology_needs_station():
    with pytest.raises(GraphError):
        Topology(3, [(0, 1), (1, 2)], [1, 1], ())
