"""Attributed road graph, topology config and shortest-path routing."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import kernels

ROLE_PATIENT = 0
ROLE_AMBULANCE = 1

EDGE_CLASSES = (1, 2, 3, 5)
BLOCKING_LEVELS = (0, 1, 2, 3)
TOPOLOGY_VERSION = 1


class GraphError(ValueError):
    pass


class NoPathError(LookupError):
    """Raised when the target is not reachable from the source."""


class TopologyFormatError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _readonly(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _check_edge_list(node_count, edges):
    seen = set()
    for k, (u, v) in enumerate(edges):
        if not (0 <= u < node_count and 0 <= v < node_count):
            raise GraphError(f"edge {k} ({u}, {v}) references a vertex outside 0..{node_count - 1}")
        if u == v:
            raise GraphError(f"edge {k} is a self-loop on vertex {u}")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise GraphError(f"edge {k} duplicates ({key[0]}, {key[1]})")
        seen.add(key)


@dataclass(frozen=True, eq=False)
class AttributedGraph:
    """Undirected graph with node attributes (role, involvement) and
    edge attributes (travel time in minutes, road-blocking level).

    Arrays are copied and frozen on construction.
    """

    node_count: int
    edges: np.ndarray
    node_attrs: np.ndarray
    edge_attrs: np.ndarray
    ambulance_count: Optional[int] = field(default=None, compare=False)

    def __post_init__(self):
        if int(self.node_count) < 1:
            raise GraphError("node_count must be positive")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        node_attrs = np.asarray(self.node_attrs, dtype=np.int64)
        edge_attrs = np.asarray(self.edge_attrs, dtype=np.float64).reshape(-1, 2)
        n = int(self.node_count)
        _check_edge_list(n, edges.tolist())
        if node_attrs.shape != (n, 2):
            raise GraphError(f"node_attrs must have shape ({n}, 2), got {node_attrs.shape}")
        if edge_attrs.shape != (len(edges), 2):
            raise GraphError(f"edge_attrs must have shape ({len(edges)}, 2), got {edge_attrs.shape}")
        if not np.isin(node_attrs, (0, 1)).all():
            raise GraphError("node attributes must be 0 or 1")
        times = edge_attrs[:, 0]
        if not (np.isfinite(times).all() and (times > 0).all()):
            raise GraphError("travel times must be strictly positive and finite")
        if not np.isin(edge_attrs[:, 1], BLOCKING_LEVELS).all():
            raise GraphError("blocking levels must be in {0, 1, 2, 3}")
        if self.ambulance_count is not None and int(node_attrs[:, 0].sum()) != self.ambulance_count:
            raise GraphError(
                f"expected {self.ambulance_count} ambulance vertices, found {int(node_attrs[:, 0].sum())}"
            )
        object.__setattr__(self, "node_count", n)
        object.__setattr__(self, "edges", _readonly(edges))
        object.__setattr__(self, "node_attrs", _readonly(node_attrs))
        object.__setattr__(self, "edge_attrs", _readonly(edge_attrs))

    @property
    def travel_times(self):
        return self.edge_attrs[:, 0]

    @property
    def blocking(self):
        return self.edge_attrs[:, 1]

    @property
    def stations(self):
        return np.flatnonzero(self.node_attrs[:, 0] == ROLE_AMBULANCE)

    @property
    def patients(self):
        return np.flatnonzero(self.node_attrs[:, 0] == ROLE_PATIENT)

    @cached_property
    def csr(self):
        """(indptr, indices, edge_index) of the symmetric adjacency, neighbours sorted."""
        return build_csr(self.node_count, self.edges)

    def sssp(self, source):
        """Single-source Dijkstra distances and predecessors over travel times."""
        indptr, indices, eidx = self.csr
        return kernels.dijkstra(indptr, indices, self.travel_times[eidx], source)

    def with_attrs(self, node_attrs=None, edge_attrs=None):
        return AttributedGraph(
            self.node_count,
            self.edges,
            self.node_attrs if node_attrs is None else node_attrs,
            self.edge_attrs if edge_attrs is None else edge_attrs,
        )


def build_csr(node_count, edges):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    eid = np.arange(len(edges))
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    eidx = np.concatenate([eid, eid])
    order = np.lexsort((dst, src))
    src, dst, eidx = src[order], dst[order], eidx[order]
    indptr = np.zeros(node_count + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, dst, eidx


def _walk_back(pred, source, target):
    path = [target]
    while path[-1] != source:
        path.append(int(pred[path[-1]]))
    path.reverse()
    return path


def shortest_path(g: AttributedGraph, source: int, target: int):
    """Minimum travel-time route from ``source`` to ``target``.

    Returns ``(path, cost)`` with ``path`` a vertex list from source to
    target. Raises :class:`NoPathError` if the target is unreachable.
    """
    for v in (source, target):
        if not 0 <= v < g.node_count:
            raise GraphError(f"vertex {v} out of range")
    if source == target:
        return [int(source)], 0.0
    dist, pred = g.sssp(source)
    if not np.isfinite(dist[target]):
        raise NoPathError(f"no path from {source} to {target}")
    return _walk_back(pred, int(source), int(target)), float(dist[target])


def nearest_free_ambulance(g: AttributedGraph, patient: int):
    """Closest free station (Role=1, Involvement=0) to ``patient``.

    Returns ``(station, cost)``, or ``None`` when every station is busy or
    none can reach the patient. Equal costs go to the lower station index.
    """
    if g.node_attrs[patient, 0] != ROLE_PATIENT:
        raise GraphError(f"vertex {patient} is not a patient node")
    best = None
    for s in g.stations:
        if g.node_attrs[s, 1] != 0:
            continue
        try:
            _, cost = shortest_path(g, int(s), int(patient))
        except NoPathError:
            continue
        if best is None or cost < best[1]:
            best = (int(s), cost)
    return best


@dataclass(frozen=True, eq=False)
class Topology:
    """Road layout: edges with their nominal travel-time class and the station vertices."""

    node_count: int
    edges: np.ndarray
    edge_class: np.ndarray
    ambulance_nodes: tuple

    def __post_init__(self):
        n = int(self.node_count)
        if n < 1:
            raise GraphError("node_count must be positive")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        cls = np.asarray(self.edge_class, dtype=np.int64)
        _check_edge_list(n, edges.tolist())
        if cls.shape != (len(edges),):
            raise GraphError("edge_class must have one entry per edge")
        if not np.isin(cls, EDGE_CLASSES).all():
            raise GraphError(f"edge classes must be in {EDGE_CLASSES}")
        amb = tuple(sorted(int(a) for a in self.ambulance_nodes))
        if not amb:
            raise GraphError("at least one ambulance vertex is required")
        if len(set(amb)) != len(amb) or not all(0 <= a < n for a in amb):
            raise GraphError("ambulance vertices must be distinct valid indices")
        object.__setattr__(self, "node_count", n)
        object.__setattr__(self, "edges", _readonly(edges))
        object.__setattr__(self, "edge_class", _readonly(cls))
        object.__setattr__(self, "ambulance_nodes", amb)

    @property
    def edge_count(self):
        return len(self.edges)

    @cached_property
    def patients(self):
        mask = np.ones(self.node_count, dtype=bool)
        mask[list(self.ambulance_nodes)] = False
        return np.flatnonzero(mask)

    def base_node_attrs(self):
        x = np.zeros((self.node_count, 2), dtype=np.int64)
        x[list(self.ambulance_nodes), 0] = ROLE_AMBULANCE
        return x

    def graph(self, travel_times, blocking=None, node_attrs=None):
        """Attributed graph for this layout with the given realised edge attributes."""
        blocking = np.zeros(self.edge_count) if blocking is None else blocking
        return AttributedGraph(
            self.node_count,
            self.edges,
            self.base_node_attrs() if node_attrs is None else node_attrs,
            np.column_stack([travel_times, blocking]),
            ambulance_count=len(self.ambulance_nodes),
        )

    def nominal_graph(self):
        return self.graph(self.edge_class.astype(float))

    def to_dict(self):
        return {
            "version": TOPOLOGY_VERSION,
            "nodes": self.node_count,
            "edges": [[int(u), int(v), int(c)] for (u, v), c in zip(self.edges, self.edge_class)],
            "ambulances": list(self.ambulance_nodes),
        }


def _lines_of_keys(text):
    """Map top-level keys and edge entries to source line numbers for error messages."""
    key_lines = {}
    edge_lines = []
    in_edges = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        for key in ("nodes", "edges", "ambulances", "version"):
            if s.startswith(f'"{key}"'):
                key_lines[key] = lineno
                in_edges = key == "edges"
                s = s.split(":", 1)[1].strip()
                if key == "edges" and s.startswith("["):
                    s = s[1:].strip()
        if in_edges:
            edge_lines.extend([lineno] * s.count("["))
            if s.count("]") > s.count("["):
                in_edges = False
    return key_lines, edge_lines


def parse_topology(text: str) -> Topology:
    """Parse the JSON topology format (``nodes``, ``edges: [[u, v, class], ...]``, ``ambulances``).

    Errors carry the line number of the offending entry.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TopologyFormatError(exc.msg, exc.lineno) from None
    key_lines, edge_lines = _lines_of_keys(text)
    if not isinstance(raw, dict):
        raise TopologyFormatError("top level must be an object", 1)
    for key in ("nodes", "edges", "ambulances"):
        if key not in raw:
            raise TopologyFormatError(f"missing field {key!r}", 1)
    if raw.get("version", TOPOLOGY_VERSION) != TOPOLOGY_VERSION:
        raise TopologyFormatError(f"unsupported topology version {raw['version']!r}", key_lines.get("version"))
    n = raw["nodes"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise TopologyFormatError("'nodes' must be a positive integer", key_lines.get("nodes"))
    if not isinstance(raw["edges"], list):
        raise TopologyFormatError("'edges' must be a list", key_lines.get("edges"))
    seen = set()
    edges, classes = [], []
    for k, entry in enumerate(raw["edges"]):
        line = edge_lines[k] if k < len(edge_lines) else key_lines.get("edges")
        if (
            not isinstance(entry, list)
            or len(entry) != 3
            or not all(isinstance(x, int) and not isinstance(x, bool) for x in entry)
        ):
            raise TopologyFormatError(f"edge {k}: expected [u, v, class] integers, got {entry!r}", line)
        u, v, c = entry
        if not (0 <= u < n and 0 <= v < n):
            raise TopologyFormatError(f"edge {k}: vertex out of range 0..{n - 1}", line)
        if u == v:
            raise TopologyFormatError(f"edge {k}: self-loop on vertex {u}", line)
        if (min(u, v), max(u, v)) in seen:
            raise TopologyFormatError(f"edge {k}: duplicate edge ({u}, {v})", line)
        if c not in EDGE_CLASSES:
            raise TopologyFormatError(f"edge {k}: class {c} not in {EDGE_CLASSES}", line)
        seen.add((min(u, v), max(u, v)))
        edges.append((u, v))
        classes.append(c)
    amb = raw["ambulances"]
    if (
        not isinstance(amb, list)
        or not amb
        or not all(isinstance(a, int) and not isinstance(a, bool) and 0 <= a < n for a in amb)
        or len(set(amb)) != len(amb)
    ):
        raise TopologyFormatError("'ambulances' must be a non-empty list of distinct vertex indices",
                                  key_lines.get("ambulances"))
    return Topology(n, np.array(edges, dtype=np.int64).reshape(-1, 2), np.array(classes), tuple(amb))


def load_topology(path: Optional[str | Path] = None) -> Topology:
    """Load a topology file; ``None`` gives the bundled 18-vertex reference layout."""
    if path is None:
        text = resources.files("graphwatch").joinpath("data/reference_topology.json").read_text()
    else:
        text = Path(path).read_text()
    return parse_topology(text)


def dump_topology(topology: Topology) -> str:
    d = topology.to_dict()
    edges = ",\n".join(f"    {json.dumps(e)}" for e in d["edges"])
    return (
        "{\n"
        f'  "version": {d["version"]},\n'
        f'  "nodes": {d["nodes"]},\n'
        f'  "edges": [\n{edges}\n  ],\n'
        f'  "ambulances": {json.dumps(d["ambulances"])}\n'
        "}\n"
    )


def line_graph(weights: Sequence[float]) -> AttributedGraph:
    """Path graph 0-1-...-n with the given travel times and no stations."""
    n = len(weights) + 1
    edges = [(i, i + 1) for i in range(len(weights))]
    return AttributedGraph(n, edges, np.zeros((n, 2)), np.column_stack([weights, np.zeros(len(weights))]))
