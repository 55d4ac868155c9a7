"""HTTP facade over the request-scoped library operations.

Long-running work (training, gradient checks, plotting) stays on the CLI;
the service exposes the pure data operations so that annotation and
evaluation clients can share one process.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import analysis
from ..chunker import ChunkingConfig, ChunkingError, chunk_instruction
from ..conllu import ConlluError, parse_conllu_file
from ..dataset import (ValidationError, concat_to_r4r, corpus_stats,
                       gt_shift_signal, normalize_for_training,
                       validate_episode)
from ..metrics import (ShiftConfusion, aggregate_results, confusion_stats,
                       evaluate_episode)
from ..navgraph import GraphError
from ..runner import generate_toy_world
from . import schemas

app = FastAPI(
    title="subnav",
    description="Sub-instruction aware navigation: chunking, alignment "
                "validation, trajectory metrics and clustering.",
    version="0.1.0",
)

_BAD_REQUEST = (ConlluError, ChunkingError, GraphError, ValueError)


def _guard(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ValidationError as exc:
        raise HTTPException(status_code=422,
                            detail={"path_id": exc.path_id, "rule": exc.rule})
    except _BAD_REQUEST as exc:
        raise HTTPException(status_code=400, detail=str(exc))


@app.get("/health")
def health() -> dict:
    return {"status": "ok"}


@app.get("/version")
def version() -> dict:
    return {"version": app.version}


@app.post("/chunk", response_model=schemas.ChunkResponse)
def chunk(request: schemas.ChunkRequest) -> schemas.ChunkResponse:
    config = ChunkingConfig(
        min_chunk_words=request.min_words,
        action_lexicon=(frozenset(w.lower() for w in request.action_lexicon)
                        if request.action_lexicon
                        else ChunkingConfig().action_lexicon),
        connective_lexicon=(
            frozenset(w.lower() for w in request.connective_lexicon)
            if request.connective_lexicon
            else ChunkingConfig().connective_lexicon),
    )
    parsed_by_id = _guard(parse_conllu_file, request.conllu)
    instructions = []
    for text_id, parsed in parsed_by_id.items():
        chunks = _guard(chunk_instruction, parsed, config)
        instructions.append(schemas.ChunkedInstruction(
            text_id=text_id,
            sub_instructions=[list(c.words) for c in chunks],
            spans=[c.spans() for c in chunks],
        ))
    return schemas.ChunkResponse(instructions=instructions)


@app.post("/episodes/validate", response_model=schemas.ValidateResponse)
def validate(request: schemas.ValidateRequest) -> schemas.ValidateResponse:
    graph = _guard(request.graph.to_graph) if request.graph else None
    errors = []
    for model in request.episodes:
        episode = model.to_episode()
        try:
            validate_episode(episode, graph)
        except ValidationError as exc:
            errors.append(schemas.ValidationIssue(path_id=exc.path_id,
                                                  rule=exc.rule))
    return schemas.ValidateResponse(valid=not errors, errors=errors)


@app.post("/episodes/stats")
def stats(request: schemas.StatsRequest) -> dict:
    episodes = [m.to_episode() for m in request.episodes]
    return _guard(corpus_stats, episodes).as_dict()


@app.post("/episodes/normalize", response_model=schemas.EpisodeModel)
def normalize(request: schemas.NormalizeRequest) -> schemas.EpisodeModel:
    out = _guard(normalize_for_training, request.episode.to_episode())
    return schemas.EpisodeModel.from_episode(out)


@app.post("/episodes/concat", response_model=schemas.EpisodeModel)
def concat(request: schemas.ConcatRequest) -> schemas.EpisodeModel:
    graph = _guard(request.graph.to_graph)
    out = _guard(concat_to_r4r, request.first.to_episode(),
                 request.second.to_episode(), graph)
    return schemas.EpisodeModel.from_episode(out)


@app.post("/graph/shortest-dist", response_model=schemas.ShortestDistResponse)
def shortest_dist(request: schemas.ShortestDistRequest
                  ) -> schemas.ShortestDistResponse:
    graph = _guard(request.graph.to_graph)
    distance = _guard(graph.shortest_dist, request.source, request.target)
    if distance == float("inf"):
        return schemas.ShortestDistResponse(distance=None, reachable=False)
    return schemas.ShortestDistResponse(distance=distance, reachable=True)


@app.post("/shift-signal")
def shift_signal(request: schemas.ShiftSignalRequest) -> dict:
    graph = _guard(request.graph.to_graph)
    signal = _guard(gt_shift_signal, graph, request.episode.to_episode(),
                    request.agent_viewpoint, request.sub_idx)
    return {"signal": signal}


@app.post("/eval", response_model=schemas.EvalResponse)
def evaluate(request: schemas.EvalRequest) -> schemas.EvalResponse:
    graph = _guard(request.graph.to_graph)
    episodes = {m.path_id: m.to_episode() for m in request.episodes}
    raw_results = []
    confusion = ShiftConfusion()
    have_shifts = False
    for record in request.trajectories:
        if record.path_id not in episodes:
            raise HTTPException(
                status_code=422,
                detail=f"trajectory {record.path_id!r} has no episode")
        raw_results.append(_guard(evaluate_episode, graph, record.trajectory,
                                  episodes[record.path_id], request.threshold))
        for shift in record.shifts:
            have_shifts = True
            confusion.add(shift.predicted, shift.ground_truth)
    response = schemas.EvalResponse(
        results=[schemas.EvalResultModel(**r.as_dict()) for r in raw_results],
        aggregate=aggregate_results(raw_results))
    if have_shifts:
        response.confusion = schemas.ConfusionRates(**confusion_stats(confusion))
        response.confusion_counts = schemas.ConfusionCounts(
            tp=confusion.tp, tn=confusion.tn, fp=confusion.fp, fn=confusion.fn)
    return response


@app.post("/metrics/confusion", response_model=schemas.ConfusionRates)
def confusion_rates(request: schemas.ConfusionCounts) -> schemas.ConfusionRates:
    counts = ShiftConfusion(tp=request.tp, tn=request.tn, fp=request.fp,
                            fn=request.fn)
    return schemas.ConfusionRates(**_guard(confusion_stats, counts))


@app.post("/bleu")
def bleu(request: schemas.BleuRequest) -> dict:
    score = _guard(analysis.smoothed_bleu4, request.candidate,
                   request.reference)
    return {"score": score}


@app.post("/cluster", response_model=schemas.ClusterResponse)
def cluster(request: schemas.ClusterRequest) -> schemas.ClusterResponse:
    records = [analysis.SubInstructionResult(
        key=r.key, words=tuple(r.words), end_distance=r.end_distance,
        ndtw=r.ndtw, viewpoint_span=r.viewpoint_span)
        for r in request.results]
    matrix = _guard(analysis.similarity_matrix,
                    [list(r.words) for r in records])
    assignment = _guard(analysis.complete_linkage_cluster, matrix, request.k)
    summaries = analysis.cluster_summary(assignment, records, matrix)
    return schemas.ClusterResponse(
        summaries=[schemas.ClusterSummaryModel(**s.as_dict())
                   for s in summaries])


@app.post("/toyworld/generate", response_model=schemas.ToyWorldResponse)
def toy_world(request: schemas.ToyWorldRequest) -> schemas.ToyWorldResponse:
    graph, episodes = _guard(generate_toy_world, request.seed,
                             request.n_nodes, request.n_episodes)
    return schemas.ToyWorldResponse(
        graph=schemas.GraphModel.from_graph(graph),
        episodes=[schemas.EpisodeModel.from_episode(ep) for ep in episodes],
    )
