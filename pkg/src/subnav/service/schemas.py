"""Pydantic request/response models mirroring the canonical file formats."""

from __future__ import annotations

from pydantic import BaseModel, Field

from ..dataset import Episode, SubPath, episode_to_dict
from ..navgraph import EnvGraph, Viewpoint


class NodeModel(BaseModel):
    id: str
    x: float
    y: float
    z: float


class GraphModel(BaseModel):
    scan: str
    nodes: list[NodeModel]
    edges: list[tuple[str, str]]

    def to_graph(self) -> EnvGraph:
        return EnvGraph.build(
            scan=self.scan,
            viewpoints=[Viewpoint(n.id, (n.x, n.y, n.z)) for n in self.nodes],
            edges=list(self.edges),
        )

    @classmethod
    def from_graph(cls, graph: EnvGraph) -> "GraphModel":
        from ..navgraph import graph_to_dict

        data = graph_to_dict(graph)
        return cls(**data)


class EpisodeModel(BaseModel):
    path_id: str
    scan: str
    path: list[str]
    instruction: str = ""
    sub_instructions: list[list[str]]
    sub_paths: list[tuple[int, int]] | None = None
    heading: float = 0.0

    def to_episode(self) -> Episode:
        return Episode(
            path_id=self.path_id,
            scan=self.scan,
            path=tuple(self.path),
            instruction=self.instruction,
            sub_instructions=tuple(tuple(si) for si in self.sub_instructions),
            sub_paths=(None if self.sub_paths is None else
                       tuple(SubPath(s, e) for s, e in self.sub_paths)),
            heading=self.heading,
        )

    @classmethod
    def from_episode(cls, episode: Episode) -> "EpisodeModel":
        return cls(**episode_to_dict(episode))


class ChunkRequest(BaseModel):
    conllu: str
    min_words: int = 3
    action_lexicon: list[str] | None = None
    connective_lexicon: list[str] | None = None


class ChunkedInstruction(BaseModel):
    text_id: str
    sub_instructions: list[list[str]]
    spans: list[list[tuple[int, int]]]


class ChunkResponse(BaseModel):
    instructions: list[ChunkedInstruction]


class ValidateRequest(BaseModel):
    episodes: list[EpisodeModel]
    graph: GraphModel | None = None


class ValidationIssue(BaseModel):
    path_id: str
    rule: str


class ValidateResponse(BaseModel):
    valid: bool
    errors: list[ValidationIssue]


class StatsRequest(BaseModel):
    episodes: list[EpisodeModel]


class NormalizeRequest(BaseModel):
    episode: EpisodeModel


class ConcatRequest(BaseModel):
    first: EpisodeModel
    second: EpisodeModel
    graph: GraphModel


class ShortestDistRequest(BaseModel):
    graph: GraphModel
    source: str
    target: str


class ShortestDistResponse(BaseModel):
    distance: float | None   # None when unreachable
    reachable: bool


class ShiftRecord(BaseModel):
    step: int
    predicted: int
    ground_truth: int
    probability: float | None = None
    sub_idx: int | None = None


class TrajectoryModel(BaseModel):
    path_id: str
    trajectory: list[str]
    shifts: list[ShiftRecord] = Field(default_factory=list)


class EvalRequest(BaseModel):
    graph: GraphModel
    episodes: list[EpisodeModel]
    trajectories: list[TrajectoryModel]
    threshold: float = 3.0


class EvalResultModel(BaseModel):
    path_id: str
    pl: float
    ne: float
    oracle_success: bool
    success: bool
    spl: float
    ndtw: float


class ConfusionCounts(BaseModel):
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0


class ConfusionRates(BaseModel):
    accuracy: float | None
    precision: float | None
    recall: float | None
    f1: float | None


class EvalResponse(BaseModel):
    results: list[EvalResultModel]
    aggregate: dict[str, float]
    confusion: ConfusionRates | None = None
    confusion_counts: ConfusionCounts | None = None


class ShiftSignalRequest(BaseModel):
    graph: GraphModel
    episode: EpisodeModel
    agent_viewpoint: str
    sub_idx: int


class BleuRequest(BaseModel):
    candidate: list[str]
    reference: list[str]


class ClusterResultRecord(BaseModel):
    key: str
    words: list[str]
    end_distance: float
    ndtw: float
    viewpoint_span: int


class ClusterRequest(BaseModel):
    results: list[ClusterResultRecord]
    k: int = 100


class ClusterSummaryModel(BaseModel):
    rank: int
    mean_distance: float
    mean_ndtw: float
    frequency: int
    mean_viewpoints: float
    representative: str
    members: list[str]


class ClusterResponse(BaseModel):
    summaries: list[ClusterSummaryModel]


class ToyWorldRequest(BaseModel):
    seed: int = 0
    n_nodes: int = 10
    n_episodes: int = 20


class ToyWorldResponse(BaseModel):
    graph: GraphModel
    episodes: list[EpisodeModel]
