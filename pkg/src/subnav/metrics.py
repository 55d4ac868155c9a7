"""Trajectory evaluation metrics and shift-prediction confusion statistics.

Covers path length, navigation error, oracle success, success, success
weighted by path length, and dynamic-time-warping similarity with its
exponential normalization.  All distances are geodesic on the scan graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .dataset import Episode
from .navgraph import EnvGraph, GraphError

SUCCESS_RADIUS_M = 3.0


@dataclass(frozen=True)
class EvalResult:
    path_id: str
    pl: float
    ne: float
    oracle_success: bool
    success: bool
    spl: float
    ndtw: float

    def as_dict(self) -> dict:
        return {
            "path_id": self.path_id,
            "pl": self.pl,
            "ne": self.ne,
            "oracle_success": self.oracle_success,
            "success": self.success,
            "spl": self.spl,
            "ndtw": self.ndtw,
        }


def dtw(graph: EnvGraph, trajectory: list[str], reference: list[str]) -> float:
    """Minimal cumulative geodesic cost over monotone alignments.

    Standard dynamic program with diagonal, horizontal and vertical moves;
    every element of both sequences is matched at least once.
    """
    if not trajectory or not reference:
        raise GraphError("dtw requires non-empty sequences")
    n, m = len(trajectory), len(reference)
    inf = math.inf
    prev = [inf] * (m + 1)
    prev[0] = 0.0
    for i in range(1, n + 1):
        cur = [inf] * (m + 1)
        for j in range(1, m + 1):
            cost = graph.shortest_dist(trajectory[i - 1], reference[j - 1])
            cur[j] = cost + min(prev[j], cur[j - 1], prev[j - 1])
        prev = cur
    return prev[m]


def ndtw(graph: EnvGraph, trajectory: list[str], reference: list[str],
         threshold: float = SUCCESS_RADIUS_M) -> float:
    """exp(-DTW / (|reference| * threshold)), in [0, 1]."""
    return math.exp(-dtw(graph, trajectory, reference)
                    / (len(reference) * threshold))


def evaluate_episode(graph: EnvGraph, trajectory: list[str], reference: Episode,
                     threshold: float = SUCCESS_RADIUS_M) -> EvalResult:
    """Score one trajectory against its episode's ground-truth path."""
    if not trajectory:
        raise GraphError("empty trajectory")
    goal = reference.goal
    pl = graph.path_length(trajectory)
    ne = graph.shortest_dist(trajectory[-1], goal)
    success = ne <= threshold
    oracle = min(graph.shortest_dist(vp, goal) for vp in trajectory) <= threshold
    ideal = graph.shortest_dist(reference.start, goal)
    if not success:
        spl = 0.0
    elif max(ideal, pl) == 0.0:
        spl = 1.0
    else:
        spl = ideal / max(ideal, pl)
    return EvalResult(
        path_id=reference.path_id,
        pl=pl,
        ne=ne,
        oracle_success=oracle,
        success=success,
        spl=spl,
        ndtw=ndtw(graph, trajectory, list(reference.path), threshold),
    )


def aggregate_results(results: list[EvalResult]) -> dict:
    """Mean metrics over an episode set (success rates as fractions)."""
    if not results:
        raise ValueError("no results to aggregate")
    n = len(results)
    return {
        "n": n,
        "pl": sum(r.pl for r in results) / n,
        "ne": sum(r.ne for r in results) / n,
        "osr": sum(r.oracle_success for r in results) / n,
        "sr": sum(r.success for r in results) / n,
        "spl": sum(r.spl for r in results) / n,
        "ndtw": sum(r.ndtw for r in results) / n,
    }


@dataclass
class ShiftConfusion:
    """Counts of predicted vs ground-truth shift signals over time steps."""

    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def add(self, predicted: int, actual: int) -> None:
        if predicted and actual:
            self.tp += 1
        elif predicted and not actual:
            self.fp += 1
        elif not predicted and actual:
            self.fn += 1
        else:
            self.tn += 1

    def merge(self, other: "ShiftConfusion") -> "ShiftConfusion":
        return ShiftConfusion(self.tp + other.tp, self.tn + other.tn,
                              self.fp + other.fp, self.fn + other.fn)

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion_stats(c: ShiftConfusion) -> dict[str, float | None]:
    """Accuracy, precision, recall and F1; rates with a zero denominator
    are reported as None rather than 0, so that "no positives predicted"
    stays distinguishable from "bad precision"."""
    if c.total == 0:
        raise ValueError("confusion counts are all zero")
    if min(c.tp, c.tn, c.fp, c.fn) < 0:
        raise ValueError("confusion counts must be non-negative")
    accuracy = (c.tp + c.tn) / c.total
    precision = c.tp / (c.tp + c.fp) if (c.tp + c.fp) > 0 else None
    recall = c.tp / (c.tp + c.fn) if (c.tp + c.fn) > 0 else None
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return {"accuracy": accuracy, "precision": precision, "recall": recall,
            "f1": f1}
