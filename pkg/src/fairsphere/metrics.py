"""Fairness and utility metrics over classification and retrieval outputs.

Rates are always computed against declared class and group sets, and a
missing (class, group) cell is an error rather than a silent skip, so a
thin slice of data cannot masquerade as a fair one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import (
    EmptyCell,
    EmptyGeneration,
    FairsphereError,
    GroupAbsentFromCandidates,
    MTooLarge,
    UndeclaredLabel,
)


@dataclass(frozen=True)
class ClassifiedSample:
    true_class: str
    predicted_class: str
    group: str


@dataclass(frozen=True)
class RetrievalOutcome:
    """One query's full ranking plus the ground truth it should recover."""

    query_id: str
    ranked_ids: tuple[str, ...]
    relevant_id: str
    candidate_groups: dict[str, str]

    def __post_init__(self):
        object.__setattr__(self, "ranked_ids", tuple(self.ranked_ids))
        ranked = set(self.ranked_ids)
        if len(ranked) != len(self.ranked_ids):
            raise FairsphereError(f"query {self.query_id!r} ranking contains duplicates")
        if not ranked <= set(self.candidate_groups):
            raise FairsphereError(
                f"query {self.query_id!r} ranks ids outside its candidate set"
            )


@dataclass
class GroupCounts:
    """How many generations a prompt produced per group."""

    prompt_id: str
    counts: dict[str, int]
    total: int

    def __post_init__(self):
        if self.total <= 0:
            raise EmptyGeneration(f"prompt {self.prompt_id!r} has total {self.total}")
        for group, count in self.counts.items():
            if count < 0:
                raise FairsphereError(f"negative count for group {group!r}")
        if sum(self.counts.values()) != self.total:
            raise FairsphereError(
                f"prompt {self.prompt_id!r} counts sum to {sum(self.counts.values())}, "
                f"declared total {self.total}"
            )


def _check_declared(value: str, declared: list[str], kind: str):
    if value not in declared:
        raise UndeclaredLabel(f"{kind} {value!r} is not in the declared set {declared}")


def true_positive_rates(
    samples: list[ClassifiedSample],
    classes,
    groups,
) -> dict[str, dict[str, float]]:
    """Per-class, per-group recall table. Raises EmptyCell on missing cells."""
    class_list = sorted(classes)
    group_list = sorted(groups)
    if len(class_list) < 1 or len(group_list) < 2:
        raise FairsphereError("need at least one class and two groups")
    totals = {k: {g: 0 for g in group_list} for k in class_list}
    correct = {k: {g: 0 for g in group_list} for k in class_list}
    for s in samples:
        # predictions may fall outside the declared classes (they count as
        # misses); only true classes and groups define rate cells
        _check_declared(s.true_class, class_list, "class")
        _check_declared(s.group, group_list, "group")
        totals[s.true_class][s.group] += 1
        if s.predicted_class == s.true_class:
            correct[s.true_class][s.group] += 1
    rates: dict[str, dict[str, float]] = {}
    for k in class_list:
        rates[k] = {}
        for g in group_list:
            if totals[k][g] == 0:
                raise EmptyCell(k, g)
            rates[k][g] = correct[k][g] / totals[k][g]
    return rates


def eo_violations(
    samples: list[ClassifiedSample],
    classes,
    groups,
) -> tuple[float, float]:
    """Equalized-odds gaps over true positive rates.

    Returns (delta_avg, delta_max). delta_avg is the mean over classes of
    the largest pairwise rate gap; delta_max is the largest over classes of
    the mean pairwise rate gap, the mean running over unordered group pairs.
    """
    rates = true_positive_rates(samples, classes, groups)
    group_list = sorted(groups)
    pairs = list(combinations(group_list, 2))
    max_gaps = []
    mean_gaps = []
    for k in sorted(rates):
        gaps = [abs(rates[k][a] - rates[k][b]) for a, b in pairs]
        max_gaps.append(max(gaps))
        mean_gaps.append(sum(gaps) / len(pairs))
    return float(np.mean(max_gaps)), float(max(mean_gaps))


def max_skew(
    outcomes: list[RetrievalOutcome],
    m: int,
    groups,
) -> float:
    """Mean over queries of the worst log over-representation in the top m.

    Base rates come from each query's candidate pool. Groups absent from a
    top-m slice are skipped inside the max (their log ratio is -inf); a
    declared group absent from the pool itself is an input error.
    """
    group_list = sorted(groups)
    if not outcomes:
        raise FairsphereError("no retrieval outcomes supplied")
    if m < 1:
        raise MTooLarge(f"cutoff must be at least 1, got {m}")
    skews = []
    for out in outcomes:
        pool = out.candidate_groups
        if m > len(pool):
            raise MTooLarge(f"cutoff {m} exceeds the {len(pool)} candidates of query {out.query_id!r}")
        base = {g: 0 for g in group_list}
        for g in pool.values():
            if g in base:
                base[g] += 1
        for g in group_list:
            if base[g] == 0:
                raise GroupAbsentFromCandidates(
                    f"group {g!r} has no candidate in the pool of query {out.query_id!r}"
                )
        top = {g: 0 for g in group_list}
        for cand in out.ranked_ids[:m]:
            g = pool[cand]
            if g in top:
                top[g] += 1
        n_pool = len(pool)
        per_group = [
            np.log((top[g] / m) / (base[g] / n_pool))
            for g in group_list
            if top[g] > 0
        ]
        if not per_group:
            raise FairsphereError(
                f"no declared group appears in the top {m} of query {out.query_id!r}"
            )
        skews.append(max(per_group))
    return float(np.mean(skews))


def statistical_parity(counts: GroupCounts, groups) -> float:
    """Distance of the generation shares from the uniform distribution."""
    group_list = sorted(groups)
    if len(group_list) < 2:
        raise FairsphereError("need at least two groups")
    for g in counts.counts:
        _check_declared(g, group_list, "group")
    uniform = 1.0 / len(group_list)
    shares = np.array(
        [counts.counts.get(g, 0) / counts.total for g in group_list], dtype=np.float64
    )
    return float(np.sqrt(np.sum((shares - uniform) ** 2)))


def recall_at_k(outcomes: list[RetrievalOutcome], k: int) -> float:
    """Fraction of queries whose ground truth appears in the top k."""
    if k < 1:
        raise FairsphereError(f"k must be at least 1, got {k}")
    if not outcomes:
        raise FairsphereError("no retrieval outcomes supplied")
    hits = sum(1 for out in outcomes if out.relevant_id in out.ranked_ids[:k])
    return hits / len(outcomes)


@dataclass
class F1Result:
    macro_f1: float
    per_class: dict[str, float]
    degenerate_classes: list[str] = field(default_factory=list)


def f1_scores(samples: list[ClassifiedSample], classes) -> F1Result:
    """Macro F1 with per-class scores.

    A class with no true or predicted samples has an undefined F1; it is
    scored 0 and listed in degenerate_classes instead of being dropped.
    """
    class_list = sorted(classes)
    if not class_list:
        raise FairsphereError("no classes declared")
    for s in samples:
        _check_declared(s.true_class, class_list, "class")
    per_class: dict[str, float] = {}
    degenerate = []
    for k in class_list:
        tp = sum(1 for s in samples if s.true_class == k and s.predicted_class == k)
        fp = sum(1 for s in samples if s.true_class != k and s.predicted_class == k)
        fn = sum(1 for s in samples if s.true_class == k and s.predicted_class != k)
        denom = 2 * tp + fp + fn
        if denom == 0:
            per_class[k] = 0.0
            degenerate.append(k)
        else:
            per_class[k] = 2 * tp / denom
    macro = float(np.mean([per_class[k] for k in class_list]))
    return F1Result(macro_f1=macro, per_class=per_class, degenerate_classes=degenerate)
