import xml.etree.ElementTree as ET

import pytest

from subnav.dataset import Episode, SubPath
from subnav.plotting import render_trajectory_svg


def episode_for(line_graph):
    return Episode(path_id="plot0", scan="line", path=("A", "B", "C"),
                   instruction="walk", sub_instructions=(("walk",), ("stop",)),
                   sub_paths=(SubPath(0, 1), SubPath(1, 2)))


def test_document_is_wellformed_xml(line_graph):
    episode = episode_for(line_graph)
    doc = render_trajectory_svg(line_graph, episode, ["A", "B", "C"],
                                [{"step": 2, "predicted": 1}])
    root = ET.fromstring(doc)
    assert root.tag == "{http://www.w3.org/2000/svg}svg"


def test_shift_markers_follow_predictions(line_graph):
    episode = episode_for(line_graph)
    with_marker = render_trajectory_svg(
        line_graph, episode, ["A", "B"], [{"step": 1, "predicted": 1}])
    without = render_trajectory_svg(
        line_graph, episode, ["A", "B"], [{"step": 1, "predicted": 0}])
    ns = {"svg": "http://www.w3.org/2000/svg"}

    def markers(doc):
        group = ET.fromstring(doc).find("svg:g[@id='shift-events']", ns)
        return list(group)

    assert len(markers(with_marker)) == 1
    assert markers(without) == []


def test_empty_shift_events_allowed(line_graph):
    episode = episode_for(line_graph)
    doc = render_trajectory_svg(line_graph, episode, ["A"], None)
    ET.fromstring(doc)


def test_unknown_viewpoint_rejected(line_graph):
    episode = episode_for(line_graph)
    with pytest.raises(KeyError, match="nowhere"):
        render_trajectory_svg(line_graph, episode, ["A", "nowhere"], [])


def test_rendering_is_deterministic(line_graph):
    episode = episode_for(line_graph)
    args = (line_graph, episode, ["A", "B", "C"],
            [{"step": 1, "predicted": 1}, {"step": 2, "predicted": 0}])
    assert render_trajectory_svg(*args) == render_trajectory_svg(*args)
