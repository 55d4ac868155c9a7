from pathlib import Path

import pytest

from subnav.navgraph import EnvGraph, Viewpoint

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def triangle_graph() -> EnvGraph:
    # 3-4-5 right triangle
    return EnvGraph.build(
        scan="tri",
        viewpoints=[
            Viewpoint("A", (0.0, 0.0, 0.0)),
            Viewpoint("B", (4.0, 0.0, 0.0)),
            Viewpoint("C", (0.0, 3.0, 0.0)),
        ],
        edges=[("A", "B"), ("A", "C"), ("B", "C")],
    )


@pytest.fixture
def line_graph() -> EnvGraph:
    # A - B - C spaced 1 m apart on the x axis
    return EnvGraph.build(
        scan="line",
        viewpoints=[
            Viewpoint("A", (0.0, 0.0, 0.0)),
            Viewpoint("B", (1.0, 0.0, 0.0)),
            Viewpoint("C", (2.0, 0.0, 0.0)),
        ],
        edges=[("A", "B"), ("B", "C")],
    )


@pytest.fixture(scope="session")
def toy_world():
    from subnav.runner import generate_toy_world

    return generate_toy_world(seed=11, n_nodes=10, n_episodes=12)
