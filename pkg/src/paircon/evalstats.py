"""Accuracy, repetition aggregates and the Mann-Whitney U test."""
from __future__ import annotations

import itertools
import math
import statistics
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels

EXACT_MAX_SIZE = 20
Z_95 = 1.96


def top1_accuracy(logits, labels) -> float:
    """Fraction of rows whose argmax equals the label; ties go to the lowest index."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels).reshape(-1)
    if logits.ndim != 2 or logits.shape[0] == 0:
        raise ValueError("need a non-empty (n, classes) array of logits")
    if logits.shape[0] != labels.shape[0]:
        raise ValueError("logits and labels differ in length")
    # np.argmax returns the first maximal index
    return float(np.mean(np.argmax(logits, axis=1) == labels))


@dataclass(frozen=True)
class RunResult:
    repetition: int
    validation_accuracy: float
    test_accuracy: float
    config_fingerprint: str = ""

    def __post_init__(self):
        for name in ("validation_accuracy", "test_accuracy"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class Aggregate:
    n: int
    mean: float
    std: float
    ci95: tuple[float, float]


def aggregate_values(values: Sequence[float]) -> Aggregate:
    """Mean, sample standard deviation and normal-approximation 95% interval."""
    x = [float(v) for v in values]
    n = len(x)
    if n < 2:
        raise ValueError("aggregation needs at least two values")
    # statistics uses exact rational arithmetic: order-invariant, and
    # identical inputs give exactly zero spread
    mean = statistics.mean(x)
    std = statistics.stdev(x)
    half = Z_95 * std / math.sqrt(n)
    return Aggregate(n, mean, std, (mean - half, mean + half))


@dataclass(frozen=True)
class RunSummary:
    results: tuple[RunResult, ...]
    validation: Aggregate
    test: Aggregate

    @property
    def mean(self) -> float:
        return self.test.mean

    @property
    def std(self) -> float:
        return self.test.std

    @property
    def ci95(self) -> tuple[float, float]:
        return self.test.ci95

    @property
    def test_accuracies(self) -> list[float]:
        return [r.test_accuracy for r in self.results]


def aggregate(results: Sequence[RunResult]) -> RunSummary:
    results = tuple(results)
    if len(results) < 2:
        raise ValueError("aggregation needs at least two runs")
    return RunSummary(
        results,
        aggregate_values([r.validation_accuracy for r in results]),
        aggregate_values([r.test_accuracy for r in results]),
    )


def midranks(values) -> np.ndarray:
    """1-based ranks with tied values sharing their average rank."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="mergesort")
    ranks = np.empty(len(v), dtype=np.float64)
    sv = v[order]
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


@dataclass(frozen=True)
class MannWhitneyResult:
    statistic: float
    pvalue: float
    exact: bool


def u_distribution(n: int, m: int) -> np.ndarray:
    """Counts of each U value in 0..n*m over all C(n+m, n) arrangements."""
    return _kernels.mw_counts(n, m)


def mann_whitney_u(x, y, alternative: str = "greater") -> MannWhitneyResult:
    """One-sided Mann-Whitney U test that ``x`` is stochastically greater than ``y``.

    The statistic counts pairs with ``x > y`` plus half the ties. Without ties
    and with both samples of size <= 20 the p-value is exact; otherwise the
    tie-corrected normal approximation with continuity correction is used.
    ``alternative="less"`` tests the opposite direction.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    n, m = len(x), len(y)
    if n == 0 or m == 0:
        raise ValueError("both samples must be non-empty")
    if alternative not in ("greater", "less"):
        raise ValueError("alternative must be 'greater' or 'less'")
    ranks = midranks(np.concatenate([x, y]))
    u_x = float(ranks[:n].sum() - n * (n + 1) / 2)
    u = u_x if alternative == "greater" else n * m - u_x
    has_ties = len(np.unique(np.concatenate([x, y]))) < n + m
    if not has_ties and n <= EXACT_MAX_SIZE and m <= EXACT_MAX_SIZE:
        counts = u_distribution(n, m)
        k = int(round(u))
        p = int(counts[k:].sum()) / int(counts.sum())
        return MannWhitneyResult(u_x, p, True)
    _, tie_counts = np.unique(ranks, return_counts=True)
    total = n + m
    tie_term = float(np.sum(tie_counts**3 - tie_counts)) / (total * (total - 1))
    var = n * m / 12.0 * ((total + 1) - tie_term)
    if var <= 0.0:
        return MannWhitneyResult(u_x, 1.0, False)
    z = (u - n * m / 2.0 - 0.5) / math.sqrt(var)
    p = 0.5 * math.erfc(z / math.sqrt(2.0))
    return MannWhitneyResult(u_x, min(1.0, max(p, np.nextafter(0.0, 1.0))), False)


def brute_force_pvalue(x, y) -> float:
    """Exact one-sided p-value by enumerating every assignment of the pooled
    values to the x group. Exponential; meant for tests on small samples."""
    pooled = np.concatenate([x, y])
    n = len(x)
    observed = sum((a > b) + 0.5 * (a == b) for a in x for b in y)
    hits = total = 0
    for chosen in itertools.combinations(range(len(pooled)), n):
        mask = np.zeros(len(pooled), dtype=bool)
        mask[list(chosen)] = True
        xs, ys = pooled[mask], pooled[~mask]
        u = sum((a > b) + 0.5 * (a == b) for a in xs for b in ys)
        hits += u >= observed - 1e-12
        total += 1
    return hits / total


@dataclass(frozen=True)
class ComparisonRow:
    rank: int
    approach: str
    mean_test_accuracy: float
    tied_with_next: bool = False


@dataclass(frozen=True)
class Comparison:
    rows: tuple[ComparisonRow, ...]
    best: str
    runner_up: str
    best_accuracy: float
    runner_up_accuracy: float
    pvalue: float
    tie: bool


def compare_approaches(summaries: dict[str, RunSummary]) -> Comparison:
    """Rank approaches by mean test accuracy and test best against runner-up."""
    if len(summaries) < 2:
        raise ValueError("need at least two approaches")
    sizes = {len(s.results) for s in summaries.values()}
    if len(sizes) != 1:
        raise ValueError("approaches must have equal repetition counts")
    ordered = sorted(summaries.items(), key=lambda kv: (-kv[1].mean, kv[0]))
    rows = []
    for k, (name, s) in enumerate(ordered):
        tied = k + 1 < len(ordered) and ordered[k + 1][1].mean == s.mean
        rows.append(ComparisonRow(k + 1, name, s.mean, tied))
    (best, sb), (ru, sr) = ordered[0], ordered[1]
    res = mann_whitney_u(sb.test_accuracies, sr.test_accuracies)
    return Comparison(tuple(rows), best, ru, sb.mean, sr.mean, res.pvalue, sb.mean == sr.mean)
