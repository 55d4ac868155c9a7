"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line and enforcing its stated tolerance and runtime budget.

Run with ``pytest tests/test_acceptance.py -v -s``.  The corpus-statistics
criterion needs the released fine-grained annotation files (see README,
"Real data"); it reports a skip notice when they are absent.
"""

import json
import math
import os
import random
import time
from pathlib import Path

import pytest

from subnav.analysis import (SimilarityMatrix, complete_linkage_cluster,
                             complete_linkage_cost)
from subnav.chunker import chunk_instruction
from subnav.conllu import parse_conllu
from subnav.dataset import corpus_stats, episodes_from_fgr2r, gt_shift_signal
from subnav.metrics import (ShiftConfusion, confusion_stats, dtw,
                            evaluate_episode, ndtw)
from subnav.navgraph import EnvGraph, Viewpoint, graph_from_connectivity
from subnav.neural import grad_check
from subnav.runner import (RolloutConfig, default_params_for,
                           evaluate_shift_predictions, generate_toy_world,
                           gradcheck_bundle, rollout, shift_f1, train_toy)

FIXTURES = Path(__file__).parent / "fixtures"
DATA_DIR = Path(os.environ.get("SUBNAV_DATA_DIR", "data"))


def report(criterion: str, detail: str = "") -> None:
    suffix = f" ({detail})" if detail else ""
    print(f"[PASS] {criterion}{suffix}", flush=True)


class Stopwatch:
    def __init__(self, budget_s: float):
        self.budget = budget_s
        self.start = time.monotonic()

    def check(self) -> float:
        elapsed = time.monotonic() - self.start
        assert elapsed < self.budget, \
            f"runtime {elapsed:.2f}s exceeded budget {self.budget}s"
        return elapsed


# ---------------------------------------------------------------------------
# 1. published shift-confusion rows reproduce from raw counts
# ---------------------------------------------------------------------------

def test_criterion_1_confusion_rows():
    watch = Stopwatch(1.0)
    rows = [
        ((608, 36344, 1602, 4796), (0.852, 0.275, 0.113, 0.160)),
        ((963, 9966, 452, 4878), (0.672, 0.681, 0.165, 0.265)),
        ((1130, 10619, 363, 4686), (0.699, 0.757, 0.194, 0.309)),
        ((1256, 8086, 303, 4765), (0.648, 0.806, 0.209, 0.331)),
    ]
    for counts, expected in rows:
        stats = confusion_stats(ShiftConfusion(*counts))
        for key, value in zip(("accuracy", "precision", "recall", "f1"),
                              expected):
            assert stats[key] == pytest.approx(value, abs=1e-3), \
                f"row {counts}: {key} = {stats[key]:.4f}, published {value}"
    elapsed = watch.check()
    report("1 confusion-statistics rows reproduce to ±0.001",
           f"4 rows, {elapsed:.3f}s")


# ---------------------------------------------------------------------------
# 2. chunker golden test on the bundled walkthrough instruction
# ---------------------------------------------------------------------------

def test_criterion_2_chunker_golden():
    watch = Stopwatch(1.0)
    parsed = parse_conllu((FIXTURES / "walkthrough.conllu").read_text("utf-8"))
    chunks = chunk_instruction(parsed)
    assert [c.lowered() for c in chunks] == [
        ["enter", "through", "the", "glass", "door"],
        ["go", "up", "the", "wooden", "plank", "stairs", "on", "the", "right"],
        ["enter", "the", "doorway", "next", "to", "the", "bear", "head"],
        ["and", "wait", "there"],
    ]
    elapsed = watch.check()
    report("2 chunker reproduces the four golden sub-instructions",
           f"{elapsed:.3f}s")


# ---------------------------------------------------------------------------
# 3. corpus statistics on the released fine-grained data (skip when absent)
# ---------------------------------------------------------------------------

FGR2R_FILES = ("FGR2R_train.json", "FGR2R_val_seen.json",
               "FGR2R_val_unseen.json")


def load_fgr2r_corpus():
    paths = [DATA_DIR / name for name in FGR2R_FILES]
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        pytest.skip(
            "released fine-grained annotation files not present "
            f"(looked for {', '.join(missing)}; set SUBNAV_DATA_DIR or see "
            "README 'Real data' for download instructions)")
    episodes = []
    for path in paths:
        with open(path, encoding="utf-8") as f:
            episodes.extend(episodes_from_fgr2r(json.load(f)))
    return episodes


def test_criterion_3_fgr2r_statistics():
    watch = Stopwatch(30.0)
    episodes = load_fgr2r_corpus()
    stats = corpus_stats(episodes)
    assert stats.mean_subinstr_per_instr == pytest.approx(3.6, abs=0.1)
    assert stats.mean_words_per_subinstr == pytest.approx(7.2, abs=0.3)
    assert stats.mean_viewpoints_per_subinstr == pytest.approx(2.4, abs=0.1)
    assert stats.min_viewpoints == 1
    assert stats.max_viewpoints == 7
    elapsed = watch.check()
    report("3 corpus statistics match the published means",
           f"{stats.n_instructions} instructions, {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# 4. randomized metric property suite with a brute-force alignment oracle
# ---------------------------------------------------------------------------

def oracle_dtw(graph, trajectory, reference):
    best = math.inf

    def walk(i, j, cost):
        nonlocal best
        cost += graph.shortest_dist(trajectory[i], reference[j])
        if cost >= best:
            return
        if i == len(trajectory) - 1 and j == len(reference) - 1:
            best = cost
            return
        if i + 1 < len(trajectory):
            walk(i + 1, j, cost)
        if j + 1 < len(reference):
            walk(i, j + 1, cost)
        if i + 1 < len(trajectory) and j + 1 < len(reference):
            walk(i + 1, j + 1, cost)

    walk(0, 0, 0.0)
    return best


def random_case(rng):
    n = rng.randint(4, 9)
    viewpoints = [Viewpoint(f"n{i}", (rng.uniform(0, 9), rng.uniform(0, 9),
                                      rng.uniform(0, 1)))
                  for i in range(n)]
    edges = {(f"n{i}", f"n{i+1}") for i in range(n - 1)}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.4:
                edges.add((f"n{i}", f"n{j}"))
    graph = EnvGraph.build("case", viewpoints, sorted(edges))
    ids = sorted(graph.nodes)
    reference = [rng.choice(ids)]
    for _ in range(rng.randint(1, 5)):
        reference.append(rng.choice(graph.neighbors(reference[-1])))
    trajectory = [rng.choice(ids)]
    for _ in range(rng.randint(0, 5)):
        trajectory.append(rng.choice(graph.neighbors(trajectory[-1])))
    return graph, trajectory, reference


def test_criterion_4_metric_properties():
    from test_metrics import episode_on

    watch = Stopwatch(60.0)
    rng = random.Random(271828)
    oracle_checked = 0
    for _ in range(1000):
        graph, trajectory, reference = random_case(rng)
        episode = episode_on(reference, scan="case")
        result = evaluate_episode(graph, trajectory, episode)
        assert 0.0 <= result.ndtw <= 1.0
        assert result.spl <= (1.0 if result.success else 0.0)
        if result.success:
            assert result.oracle_success
        assert ndtw(graph, trajectory, trajectory) == pytest.approx(1.0)
        if len(trajectory) <= 6 and len(reference) <= 6:
            oracle_checked += 1
            assert dtw(graph, trajectory, reference) == pytest.approx(
                oracle_dtw(graph, trajectory, reference), abs=1e-9)
    elapsed = watch.check()
    report("4 metric properties hold on 1000 randomized cases",
           f"{oracle_checked} alignment-oracle comparisons, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 5. analytic gradients match central finite differences
# ---------------------------------------------------------------------------

def test_criterion_5_gradient_verification():
    watch = Stopwatch(30.0)
    params, loss_fn, grads_fn = gradcheck_bundle(seed=7, hidden_dim=8)
    errors = grad_check(params, loss_fn, grads_fn, epsilon=1e-5)
    worst = max(errors.values())
    assert worst < 1e-4, f"worst parameter-group error {worst:.3e}"
    elapsed = watch.check()
    report("5 gradients verified against finite differences",
           f"{len(errors)} groups, worst {worst:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 6. the toy training loop actually learns
# ---------------------------------------------------------------------------

def test_criterion_6_toy_learnability():
    watch = Stopwatch(600.0)
    seed = 7
    graph, episodes = generate_toy_world(seed=seed, n_nodes=10, n_episodes=40)
    graphs = {graph.scan: graph}
    params = default_params_for(episodes, seed=seed)
    curve = train_toy(episodes, graphs, params, epochs=200, lr=0.05, seed=seed)
    ratio = curve.epoch_losses[-1] / curve.epoch_losses[0]
    assert ratio <= 0.5, f"final/first loss ratio {ratio:.3f}"

    heldout = [ep for ep in episodes if ep.path_id in curve.heldout_ids]
    confusion = evaluate_shift_predictions(heldout, graphs, params)
    positives = confusion.tp + confusion.fn
    negatives = confusion.tn + confusion.fp
    if positives > negatives:
        baseline = ShiftConfusion(tp=positives, fp=negatives, tn=0, fn=0)
    else:
        baseline = ShiftConfusion(tp=0, fp=0, tn=negatives, fn=positives)
    model_f1 = shift_f1(confusion)
    baseline_f1 = shift_f1(baseline)
    assert model_f1 > baseline_f1, \
        f"model F1 {model_f1:.3f} vs majority baseline {baseline_f1:.3f}"
    elapsed = watch.check()
    report("6 toy training halves the loss and beats the majority baseline",
           f"loss ratio {ratio:.4f}, F1 {model_f1:.3f} > {baseline_f1:.3f}, "
           f"{elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 7. shifting is monotone and teacher replay is exact
# ---------------------------------------------------------------------------

def test_criterion_7_shifting_semantics():
    teacher = RolloutConfig(action_forcing="teacher", shift_forcing="teacher")
    replayed = 0
    for seed in (11, 23):
        graph, episodes = generate_toy_world(seed=seed, n_nodes=9,
                                             n_episodes=15)
        params = default_params_for(episodes, seed=seed)
        for ep in episodes:
            for config in (teacher,
                           RolloutConfig(action_forcing="student",
                                         shift_forcing="predicted", seed=5)):
                result = rollout(ep, graph, params, config)
                deltas = {b.sub_idx - a.sub_idx for a, b in
                          zip(result.shift_events, result.shift_events[1:])}
                assert deltas <= {0, 1}
            replay = rollout(ep, graph, params, teacher)
            assert evaluate_episode(graph, replay.trajectory, ep).ndtw == 1.0
            replayed += 1

    detail = f"{replayed} toy episodes"
    fgr2r = _fgr2r_replay_sample()
    if fgr2r is not None:
        graph_by_scan, episodes = fgr2r
        for ep in episodes:
            params = default_params_for([ep], seed=1)
            replay = rollout(ep, graph_by_scan[ep.scan], params, teacher)
            assert evaluate_episode(graph_by_scan[ep.scan], replay.trajectory,
                                    ep).ndtw == 1.0
        detail += f" + {len(episodes)} real episodes"
    report("7 shifting monotone; teacher replay exact on 100% of episodes",
           detail)


def _fgr2r_replay_sample(limit: int = 25):
    """Real episodes plus their connectivity graphs, when both are present."""
    train = DATA_DIR / "FGR2R_train.json"
    connectivity = DATA_DIR / "connectivity"
    if not (train.exists() and connectivity.is_dir()):
        return None
    with open(train, encoding="utf-8") as f:
        episodes = episodes_from_fgr2r(json.load(f))
    graphs = {}
    usable = []
    for ep in episodes:
        if len(usable) >= limit:
            break
        if ep.scan not in graphs:
            scan_file = connectivity / f"{ep.scan}_connectivity.json"
            if not scan_file.exists():
                continue
            with open(scan_file, encoding="utf-8") as f:
                graphs[ep.scan] = graph_from_connectivity(ep.scan,
                                                          json.load(f))
        usable.append(ep)
    return (graphs, usable) if usable else None


# ---------------------------------------------------------------------------
# 8. clustering against the brute-force optimal partition
# ---------------------------------------------------------------------------

def test_criterion_8_clustering_oracle():
    from test_analysis import brute_force_optimum, planted_instance

    watch = Stopwatch(30.0)
    rng = random.Random(60135)
    for _ in range(50):
        matrix = planted_instance(rng)
        for k in (2, 3):
            greedy = complete_linkage_cluster(matrix, k)
            oracle_cost, oracle_partition = brute_force_optimum(matrix, k)
            assert greedy.as_partition() == oracle_partition
            assert complete_linkage_cost(matrix, greedy.clusters) == \
                pytest.approx(oracle_cost)

    # summary ranking stays ascending in mean distance
    from subnav.analysis import (ClusterAssignment, SubInstructionResult,
                                 cluster_summary)
    sim = SimilarityMatrix([[1.0, 0.5, 0.1], [0.5, 1.0, 0.2],
                            [0.1, 0.2, 1.0]])
    results = [SubInstructionResult(key=f"k{i}", words=("w", str(i)),
                                    end_distance=d, ndtw=0.5,
                                    viewpoint_span=2)
               for i, d in enumerate([9.0, 1.0, 4.0])]
    summaries = cluster_summary(
        ClusterAssignment(clusters=[[0], [1], [2]]), results, sim)
    distances = [s.mean_distance for s in summaries]
    assert distances == sorted(distances)
    assert [s.rank for s in summaries] == [1, 2, 3]
    elapsed = watch.check()
    report("8 clustering matches brute force on 50 instances at k=2 and k=3",
           f"{elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 9. the 0.5 m ground-truth shift rule at its boundary
# ---------------------------------------------------------------------------

def test_criterion_9_shift_signal_boundary():
    from test_dataset import chain_graph, make_episode

    graph = chain_graph([0.5, 0.5 + 1e-9])
    episode = make_episode(["v0", "v1"], [(0, 1)])
    at_end = gt_shift_signal(graph, episode, "v1", 0)
    at_half_meter = gt_shift_signal(graph, episode, "v0", 0)
    episode_far = make_episode(["v1", "v2"], [(0, 1)])
    just_past = gt_shift_signal(graph, episode_far, "v1", 0)
    assert (at_end, at_half_meter, just_past) == (1, 1, 0)
    report("9 shift signal is {1, 1, 0} at distances {0, 0.5, 0.5 + 1e-9}")
