"""Sub-instruction similarity, clustering and per-cluster performance.

Sub-instructions are compared with a smoothed 4-gram precision score,
agglomerated by complete linkage on 1 - similarity, and each cluster is
summarized by how far the agent's shift viewpoint landed from the
sub-instruction's annotated end viewpoint.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

MAX_NGRAM_ORDER = 4


def smoothed_bleu4(candidate: list[str], reference: list[str]) -> float:
    """Sentence-level BLEU-4 with add-one smoothing on zero counts (n >= 2).

    Geometric mean of modified n-gram precisions for n = 1..4 times the
    brevity penalty min(1, exp(1 - |ref| / |cand|)).  A candidate sharing no
    unigram with the reference therefore scores exactly 0.
    """
    if not candidate or not reference:
        raise ValueError("smoothed_bleu4 requires non-empty word lists")
    log_sum = 0.0
    for n in range(1, MAX_NGRAM_ORDER + 1):
        cand_ngrams = Counter(_ngrams(candidate, n))
        ref_ngrams = Counter(_ngrams(reference, n))
        matched = sum(min(count, ref_ngrams[g]) for g, count in cand_ngrams.items())
        possible = max(len(candidate) - n + 1, 0)
        if matched == 0 and n >= 2:
            matched, possible = matched + 1, possible + 1
        if matched == 0:
            return 0.0
        log_sum += math.log(matched / possible)
    brevity = min(1.0, math.exp(1.0 - len(reference) / len(candidate)))
    return brevity * math.exp(log_sum / MAX_NGRAM_ORDER)


def _ngrams(words: list[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(words[i:i + n]) for i in range(len(words) - n + 1)]


@dataclass
class SimilarityMatrix:
    """Symmetric pairwise similarity with a unit diagonal."""

    values: list[list[float]]

    def __post_init__(self):
        n = len(self.values)
        if any(len(row) != n for row in self.values):
            raise ValueError("similarity matrix must be square")

    def __len__(self) -> int:
        return len(self.values)

    def similarity(self, i: int, j: int) -> float:
        return self.values[i][j]

    def dissimilarity(self, i: int, j: int) -> float:
        return 1.0 - self.values[i][j]


def similarity_matrix(sub_instructions: list[list[str]]) -> SimilarityMatrix:
    """Pairwise symmetrized smoothed BLEU-4 over a sub-instruction list."""
    n = len(sub_instructions)
    if n < 2:
        raise ValueError("need at least two sub-instructions")
    values = [[1.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            ij = smoothed_bleu4(sub_instructions[i], sub_instructions[j])
            ji = smoothed_bleu4(sub_instructions[j], sub_instructions[i])
            values[i][j] = values[j][i] = (ij + ji) / 2.0
    return SimilarityMatrix(values)


@dataclass
class ClusterAssignment:
    """Clusters as sorted member-index lists, in a deterministic order."""

    clusters: list[list[int]]

    def labels(self) -> list[int]:
        out = [0] * sum(len(c) for c in self.clusters)
        for label, members in enumerate(self.clusters):
            for m in members:
                out[m] = label
        return out

    def as_partition(self) -> frozenset[frozenset[int]]:
        return frozenset(frozenset(c) for c in self.clusters)


def complete_linkage_cluster(matrix: SimilarityMatrix, k: int = 100
                             ) -> ClusterAssignment:
    """Agglomerate down to k clusters, merging by maximum pairwise
    dissimilarity.  Ties pick the merge with the lowest cluster indices,
    where a cluster's index is its smallest member.

    The between-cluster linkage is maintained incrementally: after merging
    a and b, linkage(ab, c) = max(linkage(a, c), linkage(b, c)), which is
    exact for the complete-linkage criterion.
    """
    n = len(matrix)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    clusters: list[list[int]] = [[i] for i in range(n)]
    linkage = [[matrix.dissimilarity(i, j) for j in range(n)]
               for i in range(n)]
    while len(clusters) > k:
        best: tuple[float, int, int] | None = None
        best_pair = (0, 1)
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                key = (linkage[a][b], clusters[a][0], clusters[b][0])
                if best is None or key < best:
                    best = key
                    best_pair = (a, b)
        a, b = best_pair
        # a < b, and the list is ordered by smallest member, so the merged
        # cluster keeps a's index and the ordering invariant survives
        clusters[a] = sorted(clusters[a] + clusters[b])
        del clusters[b]
        for c in range(len(linkage)):
            linkage[a][c] = linkage[c][a] = max(linkage[a][c], linkage[b][c])
        del linkage[b]
        for row in linkage:
            del row[b]
    return ClusterAssignment(clusters=clusters)


def complete_linkage_cost(matrix: SimilarityMatrix,
                          clusters: list[list[int]]) -> float:
    """Partition cost: the largest intra-cluster pairwise dissimilarity."""
    worst = 0.0
    for members in clusters:
        for x in range(len(members)):
            for y in range(x + 1, len(members)):
                worst = max(worst, matrix.dissimilarity(members[x], members[y]))
    return worst


@dataclass(frozen=True)
class SubInstructionResult:
    """Per-sub-instruction rollout outcome used for cluster summaries."""

    key: str                   # "<path_id>:<sub ordinal>"
    words: tuple[str, ...]
    end_distance: float        # shift viewpoint to annotated end viewpoint, m
    ndtw: float                # sub-trajectory vs annotated sub-path
    viewpoint_span: int


def segment_trajectory(trajectory: list[str], shift_flags: list[int],
                       n_subs: int) -> list[tuple[int, int]]:
    """Slice a trajectory at shift events into per-sub-instruction segments.

    ``shift_flags[t]`` is the shift signal recorded at step t+1; a segment
    closes at the post-action position of its shift step, which also opens
    the next segment (shared boundary).  Returns [start, end] trajectory
    indices per sub-instruction; (-1, -1) marks never-reached ones.
    """
    last = len(trajectory) - 1
    segments: list[tuple[int, int]] = [(-1, -1)] * n_subs
    active = 0
    start = 0
    for t, flag in enumerate(shift_flags, start=1):
        post = min(t, last)
        if flag and active < n_subs - 1:
            segments[active] = (start, post)
            active += 1
            start = post
    segments[active] = (start, last)
    return segments


def subinstruction_results(graph, episode, trajectory: list[str],
                           shift_events: list[dict],
                           mode: str = "predicted"
                           ) -> list[SubInstructionResult]:
    """Per-sub-instruction traceability records for one rollout.

    ``mode`` picks which signal slices the trajectory: the agent's
    ``predicted`` shifts (default) or the recorded ``ground_truth`` ones.
    A sub-instruction the agent never reached is scored at the final
    trajectory viewpoint.
    """
    from .metrics import ndtw as ndtw_metric

    if mode not in ("predicted", "ground_truth"):
        raise ValueError(f"unknown segmentation mode {mode!r}")
    if episode.sub_paths is None:
        raise ValueError(f"episode {episode.path_id} has no sub-path annotation")
    flags = [int(ev[mode]) if isinstance(ev, dict) else int(getattr(ev, mode))
             for ev in shift_events]
    n_subs = len(episode.sub_instructions)
    segments = segment_trajectory(trajectory, flags, n_subs)
    out = []
    for i, (sub, span) in enumerate(zip(episode.sub_instructions,
                                        episode.sub_paths)):
        start, end = segments[i]
        if start < 0:
            slice_ = [trajectory[-1]]
        else:
            slice_ = trajectory[start:end + 1]
        shift_vp = slice_[-1]
        reference = list(episode.path[span.start_idx:span.end_idx + 1])
        out.append(SubInstructionResult(
            key=f"{episode.path_id}:{i + 1}",
            words=tuple(sub),
            end_distance=graph.shortest_dist(
                shift_vp, episode.path[span.end_idx]),
            ndtw=ndtw_metric(graph, slice_, reference),
            viewpoint_span=span.span(),
        ))
    return out


@dataclass
class ClusterSummary:
    rank: int
    mean_distance: float
    mean_ndtw: float
    frequency: int
    mean_viewpoints: float
    representative: str
    members: list[str]

    def as_dict(self) -> dict:
        return {
            "rank": self.rank,
            "mean_distance": self.mean_distance,
            "mean_ndtw": self.mean_ndtw,
            "frequency": self.frequency,
            "mean_viewpoints": self.mean_viewpoints,
            "representative": self.representative,
            "members": self.members,
        }


def cluster_summary(assignment: ClusterAssignment,
                    results: list[SubInstructionResult],
                    matrix: SimilarityMatrix) -> list[ClusterSummary]:
    """Summarize clusters, ranked ascending by mean end-viewpoint distance.

    The representative is the member with the highest mean similarity to its
    co-members (the member itself for singletons).
    """
    if len(results) != len(matrix):
        raise ValueError("one result record per clustered sub-instruction required")
    summaries = []
    for members in assignment.clusters:
        recs = [results[i] for i in members]
        rep_idx = members[0]
        if len(members) > 1:
            def mean_sim(i: int) -> float:
                return sum(matrix.similarity(i, j)
                           for j in members if j != i) / (len(members) - 1)
            rep_idx = max(members, key=lambda i: (mean_sim(i), -i))
        summaries.append(ClusterSummary(
            rank=0,
            mean_distance=sum(r.end_distance for r in recs) / len(recs),
            mean_ndtw=sum(r.ndtw for r in recs) / len(recs),
            frequency=len(recs),
            mean_viewpoints=sum(r.viewpoint_span for r in recs) / len(recs),
            representative=" ".join(results[rep_idx].words),
            members=[r.key for r in recs],
        ))
    summaries.sort(key=lambda s: (s.mean_distance, s.members[0]))
    for rank, summary in enumerate(summaries, start=1):
        summary.rank = rank
    return summaries
