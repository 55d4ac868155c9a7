"""Roll the agent out on graph episodes and train it at desk scale.

Visual input is synthetic: every viewpoint gets a seeded random appearance
vector, concatenated with the heading/elevation encoding of the approach
direction.  Actions move the agent to an adjacent viewpoint; candidate 0 is
always STOP.  The active sub-instruction pointer moves monotonically, at
most one step per time step, driven either by the ground-truth 0.5 m signal
(teacher) or by the shifting head's probability (predicted).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Episode, SubPath, gt_shift_signal, normalize_for_training, \
    validate_episode
from .metrics import ShiftConfusion
from .navgraph import EnvGraph, GraphError, Viewpoint, euclidean
from .neural import (AgentState, ModelParams, NeuralConfig, STOP_INDEX,
                     Vocabulary, backward_rollout, encode_instruction,
                     forward_shift, forward_step, init_params, joint_loss)

STOP_ACTION = "STOP"
GRAD_CLIP_NORM = 5.0


@dataclass(frozen=True)
class RolloutConfig:
    action_forcing: str = "student"      # teacher | student
    shift_forcing: str = "predicted"     # teacher | predicted
    shift_threshold: float = 0.5
    max_steps: int = 20
    seed: int = 0
    sample_actions: bool = False         # student mode: sample instead of argmax

    def __post_init__(self):
        if self.action_forcing not in ("teacher", "student"):
            raise ValueError(f"unknown action forcing {self.action_forcing!r}")
        if self.shift_forcing not in ("teacher", "predicted"):
            raise ValueError(f"unknown shift forcing {self.shift_forcing!r}")
        if not 0.0 < self.shift_threshold < 1.0:
            raise ValueError("shift threshold must be inside (0, 1)")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass(frozen=True)
class ShiftEvent:
    step: int
    probability: float
    predicted: int
    ground_truth: int
    sub_idx: int


@dataclass(frozen=True)
class ActionRecord:
    step: int
    chosen: str            # viewpoint id or "STOP"
    probability: float


@dataclass
class RolloutResult:
    path_id: str
    trajectory: list[str]
    actions: list[ActionRecord]
    shift_events: list[ShiftEvent]
    action_nll: float      # mean per-step action cross-entropy (unbalanced)
    shift_bce: float       # mean per-step shift cross-entropy (unbalanced)
    terminated_by: str     # stop | max_steps
    final_sub_idx: int
    # training plumbing (populated when keep_trace=True)
    action_probs: list[np.ndarray] = field(default_factory=list)
    action_targets: list[int] = field(default_factory=list)
    shift_probs: list[float] = field(default_factory=list)
    shift_targets: list[int] = field(default_factory=list)
    traces: list = field(default_factory=list)
    encoder_trace: object = None
    n_states: int = 0

    def confusion(self) -> ShiftConfusion:
        c = ShiftConfusion()
        for ev in self.shift_events:
            c.add(ev.predicted, ev.ground_truth)
        return c


class FeatureExtractor:
    """Deterministic synthetic appearance features per viewpoint."""

    def __init__(self, graph: EnvGraph, noise_dim: int, seed: int = 0):
        self.graph = graph
        self.noise_dim = noise_dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def appearance(self, viewpoint_id: str) -> np.ndarray:
        if viewpoint_id not in self._cache:
            digest = hashlib.sha256(
                f"{self.seed}:{self.graph.scan}:{viewpoint_id}".encode()
            ).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            self._cache[viewpoint_id] = rng.uniform(-1.0, 1.0, self.noise_dim)
        return self._cache[viewpoint_id]

    def direction_feature(self, here: str, there: str) -> np.ndarray:
        return np.array(self.graph.direction(here, there).as_tuple())

    def candidate(self, here: str, there: str) -> np.ndarray:
        return np.concatenate([self.appearance(there),
                               self.direction_feature(here, there)])


def _encode_episode(params: ModelParams, episode: Episode):
    """Token ids of the full instruction plus per-sub-instruction slices."""
    vocab = params.vocabulary()
    ids: list[int] = []
    slices: list[tuple[int, int]] = []
    for si in episode.sub_instructions:
        lo = len(ids)
        ids.extend(vocab.encode(list(si)))
        slices.append((lo, len(ids)))
    return ids, slices


def rollout(episode: Episode, graph: EnvGraph, params: ModelParams,
            config: RolloutConfig, features: FeatureExtractor | None = None,
            keep_trace: bool = False) -> RolloutResult:
    """Run one episode under the given forcing modes."""
    if episode.sub_paths is None:
        raise GraphError(
            f"episode {episode.path_id} lacks sub-path annotation; "
            "cannot supervise shifting")
    validate_episode(episode, graph)
    if features is None:
        features = FeatureExtractor(graph, params.config.vis_noise_dim)
    rng = np.random.default_rng(config.seed)

    ids, slices = _encode_episode(params, episode)
    states, enc_trace = encode_instruction(params, ids)
    n_subs = len(slices)

    state = AgentState.zero(params.config.hidden_dim)
    a_prev = np.zeros(params.config.vis_dim)
    pos = episode.start
    path = episode.path
    progress = 0               # highest ground-truth path index reached in order
    sub_idx = 0
    trajectory = [pos]
    actions: list[ActionRecord] = []
    shift_events: list[ShiftEvent] = []
    action_probs: list[np.ndarray] = []
    action_targets: list[int] = []
    shift_probs: list[float] = []
    shift_targets: list[int] = []
    traces = []
    terminated_by = "max_steps"

    for step in range(1, config.max_steps + 1):
        neighbors = graph.neighbors(pos)
        candidate_ids = [STOP_ACTION] + neighbors
        feats = np.empty((len(candidate_ids), params.config.vis_dim))
        feats[STOP_INDEX] = params["stop_feature"]
        for i, nb in enumerate(neighbors, start=1):
            feats[i] = features.candidate(pos, nb)

        state, probs, trace = forward_step(
            params, states, slices[sub_idx], feats, a_prev, state)

        target = _gt_action_index(graph, path, progress, pos, neighbors)
        if config.action_forcing == "teacher":
            if target is None:
                raise GraphError(
                    f"episode {episode.path_id}: ground-truth next viewpoint "
                    f"not adjacent to {pos!r}")
            chosen = target
        elif config.sample_actions:
            chosen = int(rng.choice(len(candidate_ids), p=probs))
        else:
            chosen = int(np.argmax(probs))

        remaining = n_subs - 1 - sub_idx
        p_s = forward_shift(params, trace, state, chosen, remaining)

        next_pos = pos if chosen == STOP_INDEX else neighbors[chosen - 1]
        gt = gt_shift_signal(graph, episode, next_pos, sub_idx)
        predicted = 1 if p_s > config.shift_threshold else 0
        shift_events.append(ShiftEvent(step=step, probability=p_s,
                                       predicted=predicted, ground_truth=gt,
                                       sub_idx=sub_idx))
        actions.append(ActionRecord(
            step=step, chosen=candidate_ids[chosen],
            probability=float(probs[chosen])))
        action_probs.append(probs)
        action_targets.append(target if target is not None else chosen)
        shift_probs.append(p_s)
        shift_targets.append(gt)
        if keep_trace:
            traces.append(trace)

        advance = gt == 1 if config.shift_forcing == "teacher" else predicted == 1
        if advance and sub_idx < n_subs - 1:
            sub_idx += 1

        if chosen == STOP_INDEX:
            terminated_by = "stop"
            break
        a_prev = feats[chosen]
        pos = next_pos
        trajectory.append(pos)
        while progress + 1 < len(path) and pos == path[progress + 1]:
            progress += 1

    n_steps = len(action_probs)
    action_nll = -sum(
        math.log(max(p[t], 1e-12)) for p, t in zip(action_probs, action_targets)
    ) / n_steps
    shift_bce = -sum(
        y * math.log(max(p, 1e-12)) + (1 - y) * math.log(max(1 - p, 1e-12))
        for p, y in zip(shift_probs, shift_targets)
    ) / n_steps

    return RolloutResult(
        path_id=episode.path_id,
        trajectory=trajectory,
        actions=actions,
        shift_events=shift_events,
        action_nll=action_nll,
        shift_bce=shift_bce,
        terminated_by=terminated_by,
        final_sub_idx=sub_idx,
        action_probs=action_probs,
        action_targets=action_targets,
        shift_probs=shift_probs,
        shift_targets=shift_targets,
        traces=traces if keep_trace else [],
        encoder_trace=enc_trace if keep_trace else None,
        n_states=states.shape[0],
    )


def _gt_action_index(graph: EnvGraph, path, progress: int, pos: str,
                     neighbors: list[str]) -> int | None:
    """Candidate index of the supervised action from the current position.

    STOP once the whole path has been consumed; otherwise the neighbour
    closest (geodesically) to the next unreached path viewpoint.  Returns
    None when the agent sits on the path but the recorded next viewpoint is
    not navigable from here (a corrupt episode, caught in teacher mode).
    """
    if progress >= len(path) - 1:
        return STOP_INDEX
    target_vp = path[progress + 1]
    if target_vp in neighbors:
        return neighbors.index(target_vp) + 1
    if pos == path[progress]:
        return None
    best = min(neighbors, key=lambda nb: graph.shortest_dist(nb, target_vp))
    return neighbors.index(best) + 1


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------

def train_step(episode: Episode, graph: EnvGraph, params: ModelParams,
               config: RolloutConfig, balance_seed: int,
               features: FeatureExtractor | None = None):
    """One rollout plus exact gradients of the joint loss."""
    result = rollout(episode, graph, params, config, features=features,
                     keep_trace=True)
    breakdown, d_action, d_shift = joint_loss(
        result.action_probs, result.action_targets, result.shift_probs,
        result.shift_targets, balance_seed)
    grads = backward_rollout(params, result.traces, result.encoder_trace,
                             result.n_states, d_action, d_shift)
    return result, breakdown, grads


def clip_global_norm(grads: dict, max_norm: float = GRAD_CLIP_NORM) -> float:
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


@dataclass
class TrainingCurve:
    epoch_losses: list[float]
    heldout_f1: list[float]
    train_ids: list[str]
    heldout_ids: list[str]


def shift_f1(confusion: ShiftConfusion) -> float:
    """F1 with undefined treated as 0 for baseline comparisons."""
    from .metrics import confusion_stats
    if confusion.total == 0:
        return 0.0
    value = confusion_stats(confusion)["f1"]
    return 0.0 if value is None else value


def extractors_for(graphs: dict[str, EnvGraph], params: ModelParams
                   ) -> dict[str, FeatureExtractor]:
    return {scan: FeatureExtractor(g, params.config.vis_noise_dim)
            for scan, g in graphs.items()}


def evaluate_shift_predictions(episodes, graphs: dict[str, EnvGraph],
                               params: ModelParams, threshold: float = 0.5,
                               seed: int = 0,
                               features: dict[str, FeatureExtractor] | None = None
                               ) -> ShiftConfusion:
    """Confusion of predicted vs ground-truth signals under the agent's own
    actions and predicted shifting (the inference regime)."""
    config = RolloutConfig(action_forcing="student", shift_forcing="predicted",
                           shift_threshold=threshold, seed=seed)
    features = features or extractors_for(graphs, params)
    total = ShiftConfusion()
    for ep in episodes:
        result = rollout(ep, graphs[ep.scan], params, config,
                         features=features[ep.scan])
        total = total.merge(result.confusion())
    return total


def train_toy(episodes: list[Episode], graphs: dict[str, EnvGraph],
              params: ModelParams, epochs: int, lr: float, seed: int = 0,
              heldout_fraction: float = 0.2,
              shift_threshold: float = 0.5) -> TrainingCurve:
    """Plain SGD with global-norm clipping; student-forced actions, teacher-
    forced shifts.  Single-viewpoint sub-instructions are merged away in the
    training split; the held-out split keeps its original annotation."""
    if not episodes:
        raise ValueError("no episodes to train on")
    if lr < 0:
        raise ValueError("learning rate must be >= 0")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(episodes))
    n_heldout = max(1, int(round(heldout_fraction * len(episodes)))) \
        if len(episodes) > 1 else 0
    heldout = [episodes[i] for i in order[:n_heldout]]
    train = [normalize_for_training(episodes[i]) for i in order[n_heldout:]]
    features = extractors_for(graphs, params)

    epoch_losses: list[float] = []
    heldout_scores: list[float] = []
    for epoch in range(epochs):
        perm = rng.permutation(len(train))
        losses = []
        for k in perm:
            episode = train[k]
            # per-episode seeds stay fixed across epochs, so the loss is a
            # pure function of the parameters (constant curve at lr = 0)
            config = RolloutConfig(
                action_forcing="student", shift_forcing="teacher",
                shift_threshold=shift_threshold, sample_actions=True,
                seed=int(np.random.default_rng([seed, int(k)]).integers(2**31)))
            result, breakdown, grads = train_step(
                episode, graphs[episode.scan], params, config,
                balance_seed=int(
                    np.random.default_rng([seed, int(k), 1]).integers(2**31)),
                features=features[episode.scan])
            if not math.isfinite(breakdown.total):
                raise FloatingPointError(
                    f"training diverged at epoch {epoch}: loss "
                    f"{breakdown.total}")
            losses.append(breakdown.total)
            clip_global_norm(grads)
            for name, g in grads.items():
                params.arrays[name] -= lr * g
        epoch_losses.append(sum(losses) / len(losses))
        if heldout:
            confusion = evaluate_shift_predictions(
                heldout, graphs, params, threshold=shift_threshold,
                seed=epoch, features=features)
            heldout_scores.append(shift_f1(confusion))
        else:
            heldout_scores.append(0.0)
    return TrainingCurve(
        epoch_losses=epoch_losses,
        heldout_f1=heldout_scores,
        train_ids=[ep.path_id for ep in train],
        heldout_ids=[ep.path_id for ep in heldout],
    )


# --------------------------------------------------------------------------
# toy world generation
# --------------------------------------------------------------------------

LANDMARKS = [
    "kitchen", "sofa", "lamp", "piano", "bookshelf", "fireplace", "mirror",
    "window", "fountain", "statue", "staircase", "archway", "painting",
    "table", "plant", "doorway", "bench", "rug", "cabinet", "clock",
    "balcony", "pillar", "alcove", "desk",
]

MOVE_VERBS = ["walk", "go", "head"]

MIN_NODE_SEPARATION = 1.2   # keeps the 0.5 m shift radius unambiguous
EDGE_RADIUS = 4.5
WORLD_BOX = 10.0


def generate_toy_world(seed: int, n_nodes: int, n_episodes: int
                       ) -> tuple[EnvGraph, list[Episode]]:
    """Random connected geometric world with templated, aligned episodes."""
    if n_nodes < 4:
        raise ValueError("need at least 4 nodes")
    rng = np.random.default_rng(seed)
    graph = _sample_connected_graph(rng, seed, n_nodes)
    names = _landmark_names(rng, graph)
    episodes = []
    for k in range(n_episodes):
        episodes.append(_sample_episode(rng, graph, names, f"toy{seed}_{k}"))
    return graph, episodes


def _sample_connected_graph(rng, seed: int, n_nodes: int,
                            max_attempts: int = 60) -> EnvGraph:
    for _ in range(max_attempts):
        positions = _sample_positions(rng, n_nodes)
        if positions is None:
            continue
        ids = [f"vp{idx:02d}" for idx in range(n_nodes)]
        edges = []
        for i in range(n_nodes):
            for j in range(i + 1, n_nodes):
                if euclidean(positions[i], positions[j]) <= EDGE_RADIUS:
                    edges.append((ids[i], ids[j]))
        graph = EnvGraph.build(
            scan=f"toy{seed}",
            viewpoints=[Viewpoint(ids[i], positions[i]) for i in range(n_nodes)],
            edges=edges)
        if all(math.isfinite(graph.shortest_dist(ids[0], v)) for v in ids[1:]):
            return graph
    raise GraphError(
        f"failed to sample a connected world after {max_attempts} attempts")


def _sample_positions(rng, n_nodes: int):
    positions: list[tuple[float, float, float]] = []
    for _ in range(n_nodes * 80):
        candidate = (float(rng.uniform(0, WORLD_BOX)),
                     float(rng.uniform(0, WORLD_BOX)),
                     float(rng.uniform(0, 2.0)))
        if all(euclidean(candidate, p) >= MIN_NODE_SEPARATION
               for p in positions):
            positions.append(candidate)
            if len(positions) == n_nodes:
                return positions
    return None


def _landmark_names(rng, graph: EnvGraph) -> dict[str, str]:
    pool = list(LANDMARKS)
    rng.shuffle(pool)
    names = {}
    for i, vid in enumerate(sorted(graph.nodes)):
        names[vid] = pool[i % len(pool)]
    return names


def _turn_word(graph: EnvGraph, a: str, b: str, c: str) -> str:
    """left/right/straight for the turn at b coming from a."""
    ax, ay, _ = graph.position(a)
    bx, by, _ = graph.position(b)
    cx, cy, _ = graph.position(c)
    cross = (bx - ax) * (cy - by) - (by - ay) * (cx - bx)
    if abs(cross) < 1e-9:
        return "straight"
    return "left" if cross > 0 else "right"


def _sample_episode(rng, graph: EnvGraph, names: dict[str, str],
                    path_id: str) -> Episode:
    ids = sorted(graph.nodes)
    path = None
    for _ in range(200):
        start, goal = rng.choice(ids, size=2, replace=False)
        candidate = graph.shortest_path(str(start), str(goal))
        if 3 <= len(candidate) <= 6:
            path = candidate
            break
    if path is None:
        raise GraphError("could not sample a 3-6 viewpoint path")

    m = len(path)
    spans = _sample_sub_path_spans(rng, m)
    sub_paths = [SubPath(s, e) for s, e in spans]
    sub_instructions = []
    for i, sp in enumerate(sub_paths):
        end_name = names[path[sp.end_idx]]
        if sp.is_single_viewpoint():
            words = ["wait", "at", "the", end_name]
        elif i == len(sub_paths) - 1:
            words = ["stop", "at", "the", end_name]
        else:
            verb = MOVE_VERBS[int(rng.integers(len(MOVE_VERBS)))]
            if sp.start_idx == 0:
                direction = "straight"
            else:
                direction = _turn_word(graph, path[sp.start_idx - 1],
                                       path[sp.start_idx],
                                       path[min(sp.start_idx + 1, m - 1)])
            words = [verb, direction, "to", "the", end_name]
        sub_instructions.append(tuple(words))

    heading = math.atan2(
        graph.position(path[1])[0] - graph.position(path[0])[0],
        graph.position(path[1])[1] - graph.position(path[0])[1])
    episode = Episode(
        path_id=path_id,
        scan=graph.scan,
        path=tuple(path),
        instruction=" ".join(" ".join(si) for si in sub_instructions),
        sub_instructions=tuple(sub_instructions),
        sub_paths=tuple(sub_paths),
        heading=heading,
    )
    validate_episode(episode, graph)
    return episode


def _sample_sub_path_spans(rng, m: int) -> list[tuple[int, int]]:
    """Consecutive boundary-sharing spans of 1-3 viewpoints covering m."""
    edges = []
    left = m - 1
    while left > 0:
        step = int(rng.integers(1, min(2, left) + 1))
        edges.append(step)
        left -= step
    spans = []
    start = 0
    for step in edges:
        spans.append((start, start + step))
        start += step
    # occasionally insert a camera-rotation style single-viewpoint span
    if len(spans) >= 2 and rng.random() < 0.2:
        at = int(rng.integers(len(spans)))
        boundary = spans[at][0]
        spans.insert(at, (boundary, boundary))
    return spans


def default_params_for(episodes: list[Episode], seed: int = 0,
                       **config_overrides) -> ModelParams:
    """Initialize parameters sized for a corpus' vocabulary."""
    vocab = Vocabulary.from_episodes(episodes)
    cfg = NeuralConfig(vocab_size=len(vocab), seed=seed, **config_overrides)
    return init_params(cfg, vocab)


# --------------------------------------------------------------------------
# gradient-check bundle
# --------------------------------------------------------------------------

def gradcheck_bundle(seed: int = 7, hidden_dim: int = 8):
    """Fixed small world and closures for finite-difference verification.

    The episode replays in three steps (two moves plus STOP) over two
    sub-instructions; teacher forcing on both heads keeps the loss a smooth,
    deterministic function of the parameters.
    """
    positions = {
        "vpA": (0.0, 0.0, 0.0),
        "vpB": (3.0, 0.5, 0.2),
        "vpC": (5.5, 3.0, 0.0),
        "vpD": (1.5, 3.5, 0.4),
        "vpE": (7.0, 0.0, 0.0),
    }
    graph = EnvGraph.build(
        scan="gradcheck",
        viewpoints=[Viewpoint(vid, pos) for vid, pos in positions.items()],
        edges=[("vpA", "vpB"), ("vpB", "vpC"), ("vpB", "vpE"),
               ("vpA", "vpD"), ("vpD", "vpC")])
    # sub-path ends at the final viewpoint only, so the shift targets mix
    # both classes and the balanced shift term stays active
    episode = Episode(
        path_id="gradcheck_0",
        scan="gradcheck",
        path=("vpA", "vpB", "vpC"),
        instruction="walk straight to the lamp stop at the piano",
        sub_instructions=(("walk", "straight", "to", "the", "lamp"),
                          ("stop", "at", "the", "piano")),
        sub_paths=(SubPath(0, 2), SubPath(2, 2)),
        heading=0.0,
    )
    params = default_params_for(
        [episode], seed=seed, hidden_dim=hidden_dim, embed_dim=8,
        vis_noise_dim=8, mlp_hidden_dim=8, mlp_out_dim=8, shift_state_dim=8,
        count_embed_dim=4)
    # check at a generic parameter point: fan-in-scaled init leaves some
    # gradient entries below finite-difference resolution
    rng = np.random.default_rng(seed + 17)
    for name, array in params.arrays.items():
        array += rng.uniform(-0.4, 0.4, size=array.shape)
    config = RolloutConfig(action_forcing="teacher", shift_forcing="teacher",
                           seed=seed)
    features = FeatureExtractor(graph, params.config.vis_noise_dim)
    balance_seed = seed + 1

    def loss_fn(p: ModelParams) -> float:
        result = rollout(episode, graph, p, config, features=features)
        breakdown, _, _ = joint_loss(
            result.action_probs, result.action_targets, result.shift_probs,
            result.shift_targets, balance_seed)
        return breakdown.total

    def grads_fn(p: ModelParams) -> dict:
        _, _, grads = train_step(episode, graph, p, config, balance_seed,
                                 features=features)
        return grads

    return params, loss_fn, grads_fn
