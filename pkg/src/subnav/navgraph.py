"""Viewpoint graphs: 3-D positions, navigability edges, geodesic queries.

Edges are undirected and weighted by the Euclidean distance between their
endpoints.  Disconnected queries return ``math.inf`` rather than raising:
real scans contain isolated viewpoints and the metrics treat an unreachable
goal as a failure, not a crash.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

Position = tuple[float, float, float]


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Viewpoint:
    id: str
    position: Position


@dataclass(frozen=True)
class DirectionFeature:
    """(sin/cos of heading, sin/cos of elevation) for a displacement."""

    sin_heading: float
    cos_heading: float
    sin_elevation: float
    cos_elevation: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.sin_heading, self.cos_heading,
                self.sin_elevation, self.cos_elevation)


def direction_features(source: Position, target: Position) -> DirectionFeature:
    """Heading/elevation encoding of the displacement from source to target.

    Heading is measured in the horizontal plane from the +y axis, clockwise
    (so +x is a heading of pi/2); elevation is the angle above the plane.
    """
    dx = target[0] - source[0]
    dy = target[1] - source[1]
    dz = target[2] - source[2]
    horizontal = math.hypot(dx, dy)
    if horizontal == 0.0 and dz == 0.0:
        raise GraphError("direction undefined for zero displacement")
    heading = math.atan2(dx, dy)
    elevation = math.atan2(dz, horizontal)
    return DirectionFeature(
        sin_heading=math.sin(heading),
        cos_heading=math.cos(heading),
        sin_elevation=math.sin(elevation),
        cos_elevation=math.cos(elevation),
    )


@dataclass
class EnvGraph:
    """Immutable-after-construction navigation graph for one scan."""

    scan: str
    nodes: dict[str, Viewpoint]
    adjacency: dict[str, dict[str, float]] = field(default_factory=dict)
    _dist_cache: dict[str, dict[str, float]] = field(
        default_factory=dict, repr=False, compare=False)

    @classmethod
    def build(cls, scan: str, viewpoints: list[Viewpoint],
              edges: list[tuple[str, str]]) -> "EnvGraph":
        nodes: dict[str, Viewpoint] = {}
        for vp in viewpoints:
            if vp.id in nodes:
                raise GraphError(f"duplicate node id {vp.id!r}")
            if not all(math.isfinite(c) for c in vp.position):
                raise GraphError(f"non-finite coordinate on node {vp.id!r}")
            nodes[vp.id] = vp
        adjacency: dict[str, dict[str, float]] = {vid: {} for vid in nodes}
        for a, b in edges:
            for endpoint in (a, b):
                if endpoint not in nodes:
                    raise GraphError(f"edge references unknown node {endpoint!r}")
            if a == b:
                raise GraphError(f"self-loop on node {a!r}")
            weight = euclidean(nodes[a].position, nodes[b].position)
            if weight <= 0.0:
                raise GraphError(
                    f"edge {a!r}-{b!r} has zero length (coincident nodes)")
            adjacency[a][b] = weight
            adjacency[b][a] = weight
        return cls(scan=scan, nodes=nodes, adjacency=adjacency)

    def __contains__(self, viewpoint_id: str) -> bool:
        return viewpoint_id in self.nodes

    def position(self, viewpoint_id: str) -> Position:
        self._require(viewpoint_id)
        return self.nodes[viewpoint_id].position

    def neighbors(self, viewpoint_id: str) -> list[str]:
        self._require(viewpoint_id)
        return sorted(self.adjacency[viewpoint_id])

    def edge_weight(self, a: str, b: str) -> float:
        self._require(a)
        self._require(b)
        try:
            return self.adjacency[a][b]
        except KeyError:
            raise GraphError(f"viewpoints {a!r} and {b!r} are not adjacent") from None

    def _require(self, viewpoint_id: str) -> None:
        if viewpoint_id not in self.nodes:
            raise GraphError(f"unknown viewpoint {viewpoint_id!r}")

    def _dijkstra(self, source: str) -> dict[str, float]:
        dist = {source: 0.0}
        frontier: list[tuple[float, str]] = [(0.0, source)]
        done: set[str] = set()
        while frontier:
            d, node = heapq.heappop(frontier)
            if node in done:
                continue
            done.add(node)
            for nb, w in self.adjacency[node].items():
                nd = d + w
                if nd < dist.get(nb, math.inf):
                    dist[nb] = nd
                    heapq.heappush(frontier, (nd, nb))
        return dist

    def shortest_dist(self, a: str, b: str) -> float:
        """Geodesic distance in meters; ``inf`` when unreachable."""
        self._require(a)
        self._require(b)
        if a not in self._dist_cache:
            self._dist_cache[a] = self._dijkstra(a)
        return self._dist_cache[a].get(b, math.inf)

    def shortest_path(self, a: str, b: str) -> list[str]:
        """Minimal-weight viewpoint sequence from a to b, inclusive."""
        self._require(a)
        self._require(b)
        dist = {a: 0.0}
        prev: dict[str, str] = {}
        frontier: list[tuple[float, str]] = [(0.0, a)]
        done: set[str] = set()
        while frontier:
            d, node = heapq.heappop(frontier)
            if node in done:
                continue
            if node == b:
                break
            done.add(node)
            for nb, w in self.adjacency[node].items():
                nd = d + w
                if nd < dist.get(nb, math.inf):
                    dist[nb] = nd
                    prev[nb] = node
                    heapq.heappush(frontier, (nd, nb))
        if b not in dist:
            raise GraphError(f"no path from {a!r} to {b!r}")
        path = [b]
        while path[-1] != a:
            path.append(prev[path[-1]])
        return path[::-1]

    def path_length(self, path: list[str]) -> float:
        """Sum of edge weights along a viewpoint sequence."""
        if not path:
            raise GraphError("empty path")
        total = 0.0
        for a, b in zip(path, path[1:]):
            total += self.edge_weight(a, b)
        return total

    def direction(self, a: str, b: str) -> DirectionFeature:
        return direction_features(self.position(a), self.position(b))


def euclidean(p: Position, q: Position) -> float:
    return math.dist(p, q)


def graph_to_dict(graph: EnvGraph) -> dict:
    seen = set()
    edges = []
    for a in sorted(graph.adjacency):
        for b in sorted(graph.adjacency[a]):
            if (b, a) not in seen:
                seen.add((a, b))
                edges.append([a, b])
    return {
        "scan": graph.scan,
        "nodes": [
            {"id": vp.id, "x": vp.position[0], "y": vp.position[1],
             "z": vp.position[2]}
            for vp in sorted(graph.nodes.values(), key=lambda v: v.id)
        ],
        "edges": edges,
    }


def graph_from_dict(data: dict) -> EnvGraph:
    try:
        scan = data["scan"]
        raw_nodes = data["nodes"]
        raw_edges = data["edges"]
    except KeyError as exc:
        raise GraphError(f"graph object missing key {exc}") from None
    viewpoints = []
    for entry in raw_nodes:
        try:
            viewpoints.append(Viewpoint(
                id=str(entry["id"]),
                position=(float(entry["x"]), float(entry["y"]), float(entry["z"])),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise GraphError(f"bad node entry {entry!r}: {exc}") from None
    edges = [(str(a), str(b)) for a, b in raw_edges]
    return EnvGraph.build(scan=scan, viewpoints=viewpoints, edges=edges)


def load_graph(path: str | Path) -> EnvGraph:
    """Load a canonical graph file (see graph_to_dict for the layout)."""
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    return graph_from_dict(data)


def save_graph(graph: EnvGraph, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(graph_to_dict(graph), f, indent=1)
        f.write("\n")


def graph_from_connectivity(scan: str, entries: list[dict]) -> EnvGraph:
    """Adapter for Matterport-style connectivity records.

    Each entry carries ``image_id``, a 4x4 row-major ``pose`` whose
    translation sits at offsets 3, 7 and 11, an ``included`` flag and a
    per-target ``unobstructed`` boolean list.  An edge is added when both
    endpoints are included and either direction is unobstructed.  This
    adapter is a convenience, not a contract; the canonical format above is.
    """
    viewpoints = []
    included = []
    for entry in entries:
        ok = bool(entry.get("included", True))
        included.append(ok)
        if not ok:
            continue
        pose = entry["pose"]
        viewpoints.append(Viewpoint(
            id=str(entry["image_id"]),
            position=(float(pose[3]), float(pose[7]), float(pose[11])),
        ))
    edges: set[tuple[str, str]] = set()
    for i, entry in enumerate(entries):
        if not included[i]:
            continue
        for j, reachable in enumerate(entry.get("unobstructed", [])):
            if not reachable or j == i or j >= len(entries) or not included[j]:
                continue
            a = str(entry["image_id"])
            b = str(entries[j]["image_id"])
            edges.add((min(a, b), max(a, b)))
    return EnvGraph.build(scan=scan, viewpoints=viewpoints, edges=sorted(edges))


def load_graph_dir(graph_dir: str | Path, scans: set[str] | None = None
                   ) -> dict[str, EnvGraph]:
    """Load every canonical graph under a directory.

    JSON files without the graph keys (episode files, manifests) are
    skipped, so a mixed world directory works as a --graph-dir.
    """
    graphs = {}
    for path in sorted(Path(graph_dir).glob("*.json")):
        if scans is not None and path.stem not in scans:
            continue
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
        if not (isinstance(data, dict)
                and {"scan", "nodes", "edges"} <= set(data)):
            continue
        graph = graph_from_dict(data)
        graphs[graph.scan] = graph
    return graphs
