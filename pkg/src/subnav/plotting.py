"""Self-contained SVG rendering of an episode and an agent trajectory.

Top-down projection of the scan graph with the ground-truth path, the
agent's trajectory, sub-path boundary viewpoints and predicted-shift
markers.  The output is a deterministic function of the inputs; no display
server or plotting backend is involved.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET

from .dataset import Episode
from .navgraph import EnvGraph

CANVAS = 640.0
MARGIN = 40.0

COLORS = {
    "edge": "#cccccc",
    "node": "#9999aa",
    "reference": "#2e7d32",
    "trajectory": "#c62828",
    "boundary": "#1565c0",
    "shift": "#ef6c00",
    "text": "#333333",
}


def _projector(graph: EnvGraph):
    xs = [vp.position[0] for vp in graph.nodes.values()]
    ys = [vp.position[1] for vp in graph.nodes.values()]
    min_x, max_x = min(xs), max(xs)
    min_y, max_y = min(ys), max(ys)
    span = max(max_x - min_x, max_y - min_y, 1e-9)
    scale = (CANVAS - 2 * MARGIN) / span

    def project(viewpoint_id: str) -> tuple[float, float]:
        x, y, _ = graph.nodes[viewpoint_id].position
        # flip y so "up" on the page is +y in the world
        return (MARGIN + (x - min_x) * scale,
                CANVAS - MARGIN - (y - min_y) * scale)

    return project


def _polyline(parent, points, color, width, dash=None):
    attrs = {
        "points": " ".join(f"{x:.2f},{y:.2f}" for x, y in points),
        "fill": "none",
        "stroke": color,
        "stroke-width": str(width),
        "stroke-linecap": "round",
        "stroke-linejoin": "round",
    }
    if dash:
        attrs["stroke-dasharray"] = dash
    ET.SubElement(parent, "polyline", attrs)


def render_trajectory_svg(graph: EnvGraph, episode: Episode,
                          trajectory: list[str],
                          shift_events: list[dict] | None = None) -> str:
    """Build the SVG document as a string.

    ``shift_events`` entries need ``step`` (1-based) and ``predicted``;
    markers are drawn where predicted shifts fired.
    """
    for vp in trajectory:
        if vp not in graph.nodes:
            raise KeyError(f"unknown viewpoint {vp!r} in trajectory")
    project = _projector(graph)
    svg = ET.Element("svg", {
        "xmlns": "http://www.w3.org/2000/svg",
        "width": str(int(CANVAS)),
        "height": str(int(CANVAS)),
        "viewBox": f"0 0 {int(CANVAS)} {int(CANVAS)}",
    })
    title = ET.SubElement(svg, "title")
    title.text = f"episode {episode.path_id}"

    edges = ET.SubElement(svg, "g", {"id": "edges"})
    drawn = set()
    for a in sorted(graph.adjacency):
        for b in sorted(graph.adjacency[a]):
            if (b, a) in drawn:
                continue
            drawn.add((a, b))
            (x1, y1), (x2, y2) = project(a), project(b)
            ET.SubElement(edges, "line", {
                "x1": f"{x1:.2f}", "y1": f"{y1:.2f}",
                "x2": f"{x2:.2f}", "y2": f"{y2:.2f}",
                "stroke": COLORS["edge"], "stroke-width": "1",
            })

    nodes = ET.SubElement(svg, "g", {"id": "nodes"})
    for vid in sorted(graph.nodes):
        x, y = project(vid)
        ET.SubElement(nodes, "circle", {
            "cx": f"{x:.2f}", "cy": f"{y:.2f}", "r": "3.5",
            "fill": COLORS["node"],
        })

    _polyline(ET.SubElement(svg, "g", {"id": "reference"}),
              [project(v) for v in episode.path], COLORS["reference"], 4)

    boundaries = ET.SubElement(svg, "g", {"id": "sub-path-boundaries"})
    if episode.sub_paths:
        for sp in episode.sub_paths:
            x, y = project(episode.path[sp.end_idx])
            ET.SubElement(boundaries, "circle", {
                "cx": f"{x:.2f}", "cy": f"{y:.2f}", "r": "8",
                "fill": "none", "stroke": COLORS["boundary"],
                "stroke-width": "2",
            })

    _polyline(ET.SubElement(svg, "g", {"id": "trajectory"}),
              [project(v) for v in trajectory], COLORS["trajectory"], 2,
              dash="6 4")

    markers = ET.SubElement(svg, "g", {"id": "shift-events"})
    for event in shift_events or []:
        if not event.get("predicted"):
            continue
        step = int(event["step"])
        position = trajectory[min(step, len(trajectory) - 1)]
        x, y = project(position)
        ET.SubElement(markers, "path", {
            "d": f"M {x:.2f} {y - 7:.2f} L {x + 6:.2f} {y + 5:.2f} "
                 f"L {x - 6:.2f} {y + 5:.2f} Z",
            "fill": COLORS["shift"],
        })

    start_x, start_y = project(episode.start)
    goal_x, goal_y = project(episode.goal)
    ET.SubElement(svg, "rect", {
        "x": f"{start_x - 5:.2f}", "y": f"{start_y - 5:.2f}",
        "width": "10", "height": "10", "fill": COLORS["reference"],
    })
    ET.SubElement(svg, "circle", {
        "cx": f"{goal_x:.2f}", "cy": f"{goal_y:.2f}", "r": "6",
        "fill": COLORS["reference"],
    })
    label = ET.SubElement(svg, "text", {
        "x": str(int(MARGIN)), "y": "24", "fill": COLORS["text"],
        "font-family": "sans-serif", "font-size": "14",
    })
    label.text = (f"{episode.path_id} | reference {len(episode.path)} "
                  f"viewpoints | trajectory {len(trajectory)} viewpoints")

    return ET.tostring(svg, encoding="unicode", xml_declaration=True) + "\n"


def plot_trajectory(graph: EnvGraph, episode: Episode, trajectory: list[str],
                    shift_events: list[dict] | None, out_path) -> None:
    """Write the rendered document to disk."""
    document = render_trajectory_svg(graph, episode, trajectory, shift_events)
    with open(out_path, "w", encoding="utf-8") as f:
        f.write(document)
