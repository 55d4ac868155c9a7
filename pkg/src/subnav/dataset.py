"""Fine-grained episode data model: sub-instructions paired with sub-paths.

An episode's path is partitioned into consecutive sub-paths, one per
sub-instruction; adjacent sub-paths share their boundary viewpoint.  The
module also houses the 0.5 m ground-truth shift rule, the training-time
merge of single-viewpoint sub-instructions, the two-path concatenation used
to build longer evaluation episodes, and corpus statistics.
"""

from __future__ import annotations

import ast
import json
import warnings
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

from .navgraph import EnvGraph

SHIFT_RADIUS_M = 0.5
CONCAT_RADIUS_M = 3.0


class ValidationError(ValueError):
    def __init__(self, path_id: str, rule: str):
        self.path_id = path_id
        self.rule = rule
        super().__init__(f"episode {path_id}: {rule}")


@dataclass(frozen=True)
class SubPath:
    """Inclusive index range into an episode path."""

    start_idx: int
    end_idx: int

    def span(self) -> int:
        return self.end_idx - self.start_idx + 1

    def is_single_viewpoint(self) -> bool:
        return self.start_idx == self.end_idx


@dataclass(frozen=True)
class Episode:
    path_id: str
    scan: str
    path: tuple[str, ...]
    instruction: str
    sub_instructions: tuple[tuple[str, ...], ...]
    sub_paths: tuple[SubPath, ...] | None
    heading: float = 0.0

    @property
    def goal(self) -> str:
        return self.path[-1]

    @property
    def start(self) -> str:
        return self.path[0]

    def num_sub_instructions(self) -> int:
        return len(self.sub_instructions)

    def sub_path_end_viewpoint(self, sub_idx: int) -> str:
        assert self.sub_paths is not None
        return self.path[self.sub_paths[sub_idx].end_idx]


def validate_episode(episode: Episode, graph: EnvGraph | None = None) -> None:
    """Raise ValidationError on the first alignment rule the episode breaks.

    Passing the scan's graph additionally checks that consecutive path
    viewpoints are navigable neighbours.
    """
    pid = episode.path_id
    if not episode.path:
        raise ValidationError(pid, "empty path")
    if not episode.sub_instructions:
        raise ValidationError(pid, "no sub-instructions")
    if any(len(si) == 0 for si in episode.sub_instructions):
        raise ValidationError(pid, "empty sub-instruction")
    subs = episode.sub_paths
    if subs is None:
        # unannotated episode (plain instruction corpus); nothing to align
        return
    if len(subs) != len(episode.sub_instructions):
        raise ValidationError(
            pid, f"{len(subs)} sub-paths for {len(episode.sub_instructions)} "
                 "sub-instructions")
    n = len(episode.path)
    for i, sp in enumerate(subs):
        if not (0 <= sp.start_idx <= sp.end_idx < n):
            raise ValidationError(
                pid, f"sub-path {i} range ({sp.start_idx},{sp.end_idx}) out of "
                     f"bounds for path of length {n}")
    if subs[0].start_idx != 0:
        raise ValidationError(pid, "first sub-path does not start at viewpoint 0")
    if subs[-1].end_idx != n - 1:
        raise ValidationError(pid, "path not covered (last sub-path ends early)")
    for i in range(len(subs) - 1):
        if subs[i + 1].start_idx != subs[i].end_idx:
            raise ValidationError(pid, f"boundary mismatch at sub-path {i + 1}")
    if graph is not None:
        for a, b in zip(episode.path, episode.path[1:]):
            if b not in graph.adjacency.get(a, {}):
                raise ValidationError(pid, f"path step {a!r}->{b!r} not navigable")


def gt_shift_signal(graph: EnvGraph, episode: Episode, agent_vp: str,
                    sub_idx: int) -> int:
    """1 when the agent stands within 0.5 m of the active sub-path's end."""
    if episode.sub_paths is None:
        raise ValidationError(episode.path_id, "episode has no sub-path annotation")
    if not 0 <= sub_idx < len(episode.sub_paths):
        raise IndexError(f"sub-instruction index {sub_idx} out of range")
    end_vp = episode.sub_path_end_viewpoint(sub_idx)
    return 1 if graph.shortest_dist(agent_vp, end_vp) <= SHIFT_RADIUS_M else 0


def normalize_for_training(episode: Episode) -> Episode:
    """Merge every single-viewpoint sub-instruction into its successor.

    The last sub-instruction merges into its predecessor instead.  Applied
    left to right until no single-viewpoint sub-path remains; word order and
    the path itself are preserved.
    """
    if episode.sub_paths is None:
        raise ValidationError(episode.path_id, "episode has no sub-path annotation")
    words = [list(si) for si in episode.sub_instructions]
    spans = list(episode.sub_paths)

    changed = True
    while changed:
        changed = False
        for i, sp in enumerate(spans):
            if not sp.is_single_viewpoint():
                continue
            if len(spans) == 1:
                warnings.warn(
                    f"episode {episode.path_id}: single sub-instruction spans "
                    "one viewpoint; nothing to merge")
                break
            if i < len(spans) - 1:
                words[i + 1] = words[i] + words[i + 1]
                spans[i + 1] = SubPath(sp.start_idx, spans[i + 1].end_idx)
            else:
                words[i - 1] = words[i - 1] + words[i]
                spans[i - 1] = SubPath(spans[i - 1].start_idx, sp.end_idx)
            del words[i], spans[i]
            changed = True
            break

    out = replace(
        episode,
        sub_instructions=tuple(tuple(w) for w in words),
        sub_paths=tuple(spans),
    )
    validate_episode(out)
    return out


def concat_to_r4r(first: Episode, second: Episode, graph: EnvGraph) -> Episode:
    """Join two same-scan episodes whose endpoints lie within 3 m.

    The geodesic connector between the first path's end and the second
    path's start is spliced in, and its viewpoints are absorbed into the
    second episode's first sub-path.
    """
    if first.scan != second.scan:
        raise ValidationError(
            f"{first.path_id}+{second.path_id}", "episodes are from different scans")
    if first.sub_paths is None or second.sub_paths is None:
        raise ValidationError(
            f"{first.path_id}+{second.path_id}", "both episodes must be annotated")
    joint_end = first.path[-1]
    joint_start = second.path[0]
    gap = graph.shortest_dist(joint_end, joint_start)
    if gap > CONCAT_RADIUS_M:
        raise ValidationError(
            f"{first.path_id}+{second.path_id}",
            f"not concatenable: endpoints {gap:.2f} m apart (limit "
            f"{CONCAT_RADIUS_M} m)")

    if joint_end == joint_start:
        connector: list[str] = []
        path = first.path + second.path[1:]
        shift = len(first.path) - 1
    else:
        connector = graph.shortest_path(joint_end, joint_start)[1:-1]
        path = first.path + tuple(connector) + second.path
        shift = len(first.path) + len(connector)

    boundary = len(first.path) - 1
    second_subs = [
        SubPath(sp.start_idx + shift, sp.end_idx + shift) for sp in second.sub_paths
    ]
    # connector viewpoints (and the join itself) belong to the first
    # sub-instruction of the second episode
    second_subs[0] = SubPath(boundary, second_subs[0].end_idx)

    out = Episode(
        path_id=f"{first.path_id}+{second.path_id}",
        scan=first.scan,
        path=path,
        instruction=f"{first.instruction} {second.instruction}".strip(),
        sub_instructions=first.sub_instructions + second.sub_instructions,
        sub_paths=first.sub_paths + tuple(second_subs),
        heading=first.heading,
    )
    validate_episode(out, graph)
    return out


@dataclass
class CorpusStats:
    n_instructions: int
    n_sub_instructions: int
    mean_subinstr_per_instr: float
    mean_words_per_subinstr: float
    mean_viewpoints_per_subinstr: float | None
    min_viewpoints: int | None
    max_viewpoints: int | None
    subinstr_histogram: dict[int, int] = field(default_factory=dict)
    viewpoint_histogram: dict[int, int] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "n_instructions": self.n_instructions,
            "n_sub_instructions": self.n_sub_instructions,
            "mean_subinstr_per_instr": self.mean_subinstr_per_instr,
            "mean_words_per_subinstr": self.mean_words_per_subinstr,
            "mean_viewpoints_per_subinstr": self.mean_viewpoints_per_subinstr,
            "min_viewpoints": self.min_viewpoints,
            "max_viewpoints": self.max_viewpoints,
            "subinstr_histogram": dict(sorted(self.subinstr_histogram.items())),
            "viewpoint_histogram": dict(sorted(self.viewpoint_histogram.items())),
        }


def corpus_stats(episodes: list[Episode]) -> CorpusStats:
    """Sub-instruction count, length and span statistics over a corpus."""
    if not episodes:
        raise ValueError("empty episode list")
    sub_counts = Counter()
    span_counts = Counter()
    word_lengths: list[int] = []
    spans: list[int] = []
    for ep in episodes:
        sub_counts[len(ep.sub_instructions)] += 1
        word_lengths.extend(len(si) for si in ep.sub_instructions)
        if ep.sub_paths is not None:
            for sp in ep.sub_paths:
                spans.append(sp.span())
                span_counts[sp.span()] += 1
    n_sub = len(word_lengths)
    return CorpusStats(
        n_instructions=len(episodes),
        n_sub_instructions=n_sub,
        mean_subinstr_per_instr=n_sub / len(episodes),
        mean_words_per_subinstr=sum(word_lengths) / n_sub,
        mean_viewpoints_per_subinstr=(sum(spans) / len(spans)) if spans else None,
        min_viewpoints=min(spans) if spans else None,
        max_viewpoints=max(spans) if spans else None,
        subinstr_histogram=dict(sub_counts),
        viewpoint_histogram=dict(span_counts),
    )


# --------------------------------------------------------------------------
# canonical episode files
# --------------------------------------------------------------------------

def episode_to_dict(episode: Episode) -> dict:
    return {
        "path_id": episode.path_id,
        "scan": episode.scan,
        "heading": episode.heading,
        "path": list(episode.path),
        "instruction": episode.instruction,
        "sub_instructions": [list(si) for si in episode.sub_instructions],
        "sub_paths": (None if episode.sub_paths is None else
                      [[sp.start_idx, sp.end_idx] for sp in episode.sub_paths]),
    }


def episode_from_dict(record: dict) -> Episode:
    try:
        raw_subs = record.get("sub_paths")
        return Episode(
            path_id=str(record["path_id"]),
            scan=str(record["scan"]),
            path=tuple(str(v) for v in record["path"]),
            instruction=str(record.get("instruction", "")),
            sub_instructions=tuple(
                tuple(str(w) for w in si) for si in record["sub_instructions"]),
            sub_paths=(None if raw_subs is None else
                       tuple(SubPath(int(s), int(e)) for s, e in raw_subs)),
            heading=float(record.get("heading", 0.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(str(record.get("path_id", "?")),
                              f"malformed record: {exc}") from None


def load_episodes(path: str | Path, graphs: dict[str, EnvGraph] | None = None,
                  validate: bool = True) -> list[Episode]:
    """Load and validate a canonical episode file (a JSON list of records)."""
    with open(path, encoding="utf-8") as f:
        records = json.load(f)
    episodes = [episode_from_dict(r) for r in records]
    if validate:
        for ep in episodes:
            graph = graphs.get(ep.scan) if graphs else None
            validate_episode(ep, graph)
    return episodes


def save_episodes(episodes: list[Episode], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump([episode_to_dict(ep) for ep in episodes], f, indent=1)
        f.write("\n")


# --------------------------------------------------------------------------
# adapters for the upstream release formats
# --------------------------------------------------------------------------

#: Default field names used by the released fine-grained annotation files.
#: Treated as configuration: verified at integration time, overridable here.
FGR2R_FIELDS = {
    "path_id": "path_id",
    "scan": "scan",
    "path": "path",
    "heading": "heading",
    "instructions": "instructions",
    "chunked_instructions": "new_instructions",
    "chunk_viewpoints": "chunk_view",
}


def _maybe_literal(value):
    # the released files store nested lists as python-literal strings
    if isinstance(value, str):
        return ast.literal_eval(value)
    return value


def episodes_from_fgr2r(records: list[dict],
                        fields: dict[str, str] = FGR2R_FIELDS) -> list[Episode]:
    """Map released fine-grained records to canonical episodes.

    Every instruction variant of a path becomes its own episode with id
    ``<path_id>_<k>``.  The released per-chunk viewpoint pairs are 1-based
    and are shifted to 0-based indices here.
    """
    episodes = []
    for rec in records:
        path = tuple(str(v) for v in rec[fields["path"]])
        chunks_per_instr = _maybe_literal(rec[fields["chunked_instructions"]])
        views_per_instr = _maybe_literal(rec[fields["chunk_viewpoints"]])
        instructions = rec[fields["instructions"]]
        for k, (chunks, views) in enumerate(zip(chunks_per_instr, views_per_instr)):
            episodes.append(Episode(
                path_id=f"{rec[fields['path_id']]}_{k}",
                scan=str(rec[fields["scan"]]),
                path=path,
                instruction=str(instructions[k]),
                sub_instructions=tuple(
                    tuple(str(w) for w in chunk) for chunk in chunks),
                sub_paths=tuple(
                    SubPath(int(s) - 1, int(e) - 1) for s, e in views),
                heading=float(rec.get(fields["heading"], 0.0)),
            ))
    return episodes


def episodes_from_r2r(records: list[dict], chunked: dict[str, list[list[str]]]
                      | None = None) -> list[Episode]:
    """Map plain instruction-corpus records (no sub-annotations) to episodes.

    ``chunked`` optionally supplies chunker output per episode id; without
    it each instruction becomes a single whitespace-tokenized chunk.
    Sub-paths stay absent either way.
    """
    episodes = []
    for rec in records:
        for k, instruction in enumerate(rec["instructions"]):
            eid = f"{rec['path_id']}_{k}"
            if chunked and eid in chunked:
                subs = tuple(tuple(c) for c in chunked[eid])
            else:
                subs = (tuple(instruction.split()),)
            episodes.append(Episode(
                path_id=eid,
                scan=str(rec["scan"]),
                path=tuple(str(v) for v in rec["path"]),
                instruction=instruction,
                sub_instructions=subs,
                sub_paths=None,
                heading=float(rec.get("heading", 0.0)),
            ))
    return episodes
