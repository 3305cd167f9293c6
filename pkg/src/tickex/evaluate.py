"""Precision/recall evaluation against corpus ground truth.

Accepted extractions are matched one-to-one to ground-truth relations of the
same document by kind and symbol, with value agreement at a tight relative
tolerance and overlapping spans. The report compares the full pipeline to a
consistency-threshold-only baseline on the shared headline metrics:
false-positive reduction and recall drop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corpus import SyntheticDocument
from .parser import ExtractionCandidate

VALUE_REL_TOL = 1e-9
VALUE_ABS_TOL = 1e-12


def _value_match(candidate_value: float, truth_value: float) -> bool:
    return math.isclose(candidate_value, truth_value,
                        rel_tol=VALUE_REL_TOL, abs_tol=VALUE_ABS_TOL)


def _spans_overlap(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return a[0] < b[1] and b[0] < a[1]


def candidate_matches_truth(candidate: ExtractionCandidate, relation) -> bool:
    return (
        candidate.kind is relation.kind
        and candidate.symbol == relation.symbol
        and _value_match(candidate.value, relation.value)
        and _spans_overlap(candidate.symbol_span, relation.symbol_span)
        and _spans_overlap(candidate.value_span, relation.value_span)
    )


def is_correct_extraction(candidate: ExtractionCandidate,
                          document: SyntheticDocument) -> bool:
    """Ground-truth correctness of one candidate (no one-to-one constraint)."""
    return any(candidate_matches_truth(candidate, rel) for rel in document.ground_truth)


@dataclass
class MatchCounts:
    accepted: int
    true_positives: int
    false_positives: int
    false_negatives: int

    def precision(self) -> float:
        # empty-accept convention: precision 1.0 avoids 0/0
        if self.accepted == 0:
            return 1.0
        return self.true_positives / self.accepted

    def recall(self) -> float:
        total_truth = self.true_positives + self.false_negatives
        if total_truth == 0:
            return 1.0
        return self.true_positives / total_truth


def match_extractions(
    accepted: list[ExtractionCandidate],
    documents: list[SyntheticDocument],
) -> MatchCounts:
    """Greedy one-to-one matching in deterministic candidate order.

    Each accepted candidate consumes at most one ground-truth relation, so
    TP + FP equals the accepted count and TP + FN the ground-truth count.
    """
    docs_by_id = {doc.doc_id: doc for doc in documents}
    unmatched: dict[str, list] = {
        doc.doc_id: list(doc.ground_truth) for doc in documents
    }
    tp = 0
    for candidate in accepted:
        pool = unmatched.get(candidate.doc_id, [])
        hit = next((rel for rel in pool if candidate_matches_truth(candidate, rel)), None)
        if hit is not None:
            pool.remove(hit)
            tp += 1
    total_truth = sum(len(doc.ground_truth) for doc in documents)
    return MatchCounts(
        accepted=len(accepted),
        true_positives=tp,
        false_positives=len(accepted) - tp,
        false_negatives=total_truth - tp,
    )


def false_positive_reduction(baseline: MatchCounts, pipeline: MatchCounts) -> float:
    if baseline.false_positives == 0:
        return 1.0 if pipeline.false_positives == 0 else 0.0
    return 1.0 - pipeline.false_positives / baseline.false_positives


def auc_score(scores, labels) -> float:
    """Rank-based AUC with midrank tie handling (Mann-Whitney U)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int(labels.sum())
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.shape[0])
    sorted_scores = scores[order]
    i = 0
    while i < sorted_scores.shape[0]:
        j = i
        while j + 1 < sorted_scores.shape[0] and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum_pos = float(ranks[labels == 1].sum())
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def counts_to_dict(counts: MatchCounts) -> dict:
    return {
        "candidate_count": counts.accepted,
        "true_positives": counts.true_positives,
        "false_positives": counts.false_positives,
        "false_negatives": counts.false_negatives,
        "precision": counts.precision(),
        "recall": counts.recall(),
    }


def build_report(
    baseline: MatchCounts,
    pipeline: MatchCounts,
    metadata: dict | None = None,
) -> dict:
    report = {
        "baseline": counts_to_dict(baseline),
        "pipeline": counts_to_dict(pipeline),
        "false_positive_reduction": false_positive_reduction(baseline, pipeline),
        "recall_drop": baseline.recall() - pipeline.recall(),
        "conventions": {
            "empty_accept_precision": 1.0,
            "baseline": "consistency threshold only; candidates without a reference are rejected",
        },
    }
    if metadata:
        report["metadata"] = metadata
    return report
