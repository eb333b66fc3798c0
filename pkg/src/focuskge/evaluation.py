"""Filtered ranking protocol: per-triple ranks, aggregate metrics, split comparison.

Every held-out triple is ranked twice, once against all subject replacements
and once against all object replacements. Replacements whose triple is a
known true fact (any split) are discarded before counting, except that the
test triple itself is never discarded: its score is always the reference the
corruptions are counted against. Ranking uses the raw scorer output; the
modulation layer is a training-time device and numeric weights are unknown
for unseen triples.

Two tie conventions are available:

* ``worst`` (default): rank = 1 + #{corruptions scoring higher} +
  #{corruptions scoring equal}.
* ``tie_count``: rank = max(1, #{higher} + #{equal}); with 1,000
  equal-scoring corruptions the positive is ranked 1,000.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass

import numpy as np

from .graph import SplitSelector, TripleArray, WeightedTriple, split_by_weight
from .scorers import EmbeddingTable, score_all_objects, score_all_subjects, score_batch

TIE_MODES = ("worst", "tie_count")


@dataclass(frozen=True)
class RankRecord:
    """Both filtered ranks of one test triple plus its raw score."""

    triple: WeightedTriple
    subject_rank: int
    object_rank: int
    raw_score: float


@dataclass(frozen=True)
class MetricsReport:
    """Learning-to-rank aggregates over all (2 per triple) ranks of a split."""

    mr: float
    mrr: float
    hits1: float
    hits10: float
    n_triples: int

    @classmethod
    def from_ranks(cls, ranks, n_triples) -> "MetricsReport":
        arr = np.asarray(list(ranks), dtype=np.float64)
        if arr.size == 0:
            raise ValueError("cannot aggregate an empty rank set")
        return cls(
            mr=float(arr.mean()),
            mrr=float((1.0 / arr).mean()),
            hits1=float((arr <= 1).mean()),
            hits10=float((arr <= 10).mean()),
            n_triples=n_triples,
        )

    @classmethod
    def from_records(cls, records) -> "MetricsReport":
        ranks = [r.subject_rank for r in records] + [r.object_rank for r in records]
        return cls.from_ranks(ranks, len(records))

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ComparisonReport:
    """Top- versus bottom-weight behaviour of one model."""

    top: MetricsReport
    bottom: MetricsReport
    delta_mrr: float       # top.mrr - bottom.mrr
    delta_median: float    # |median(top raw scores) - median(bottom raw scores)|

    def as_dict(self) -> dict:
        return {
            "top": self.top.as_dict(),
            "bottom": self.bottom.as_dict(),
            "delta_mrr": self.delta_mrr,
            "delta_median": self.delta_median,
        }


class _FilterLookup:
    """Known-true candidate ids per (s, p) and per (p, o), as index arrays."""

    def __init__(self, filter_index):
        by_sp: dict[tuple[int, int], list[int]] = {}
        by_po: dict[tuple[int, int], list[int]] = {}
        for s, p, o in filter_index:
            by_sp.setdefault((s, p), []).append(o)
            by_po.setdefault((p, o), []).append(s)
        self._by_sp = {k: np.array(v, dtype=np.int64) for k, v in by_sp.items()}
        self._by_po = {k: np.array(v, dtype=np.int64) for k, v in by_po.items()}
        self._empty = np.empty(0, dtype=np.int64)

    def objects_of(self, s, p):
        return self._by_sp.get((s, p), self._empty)

    def subjects_of(self, p, o):
        return self._by_po.get((p, o), self._empty)


def _rank_from_scores(scores, true_idx, known_true_idx, tie_mode):
    reference = scores[true_idx]
    admissible = np.ones(scores.shape[0], dtype=bool)
    admissible[known_true_idx] = False
    admissible[true_idx] = False  # the positive itself is not a corruption
    corruption_scores = scores[admissible]
    higher = int((corruption_scores > reference).sum())
    equal = int((corruption_scores == reference).sum())
    if tie_mode == "worst":
        return 1 + higher + equal
    if tie_mode == "tie_count":
        return max(1, higher + equal)
    raise ValueError(f"tie_mode must be one of {TIE_MODES}, got {tie_mode!r}")


def rank_one_side(table: EmbeddingTable, triple, side, filter_index,
                  tie_mode="worst") -> int:
    """Filtered rank of one triple against all replacements of one side."""
    s, p, o = triple[0], triple[1], triple[2]
    if side == "object":
        scores = score_all_objects(table, s, p)
        known = [y for y in range(table.n_entities) if (s, p, y) in filter_index]
        return _rank_from_scores(scores, o, np.array(known, dtype=np.int64), tie_mode)
    if side == "subject":
        scores = score_all_subjects(table, p, o)
        known = [y for y in range(table.n_entities) if (y, p, o) in filter_index]
        return _rank_from_scores(scores, s, np.array(known, dtype=np.int64), tie_mode)
    raise ValueError(f"side must be 'subject' or 'object', got {side!r}")


def rank_split(table: EmbeddingTable, split: TripleArray, filter_index,
               tie_mode="worst") -> list[RankRecord]:
    """Both-side filtered ranks for every triple of a split, in split order."""
    lookup = _FilterLookup(filter_index)
    records = []
    for i in range(len(split)):
        s, p, o = (int(v) for v in split.spo[i])
        object_scores = score_all_objects(table, s, p)
        subject_scores = score_all_subjects(table, p, o)
        object_rank = _rank_from_scores(object_scores, o, lookup.objects_of(s, p), tie_mode)
        subject_rank = _rank_from_scores(subject_scores, s, lookup.subjects_of(p, o), tie_mode)
        records.append(RankRecord(
            triple=split[i],
            subject_rank=subject_rank,
            object_rank=object_rank,
            raw_score=float(object_scores[o]),
        ))
    return records


def evaluate(table: EmbeddingTable, split: TripleArray, filter_index,
             tie_mode="worst") -> MetricsReport:
    """Aggregate MR/MRR/Hits over both-side ranks of a split."""
    if len(split) == 0:
        raise ValueError("cannot evaluate an empty split")
    return MetricsReport.from_records(rank_split(table, split, filter_index, tie_mode))


def compare_splits(table: EmbeddingTable, test: TripleArray, filter_index,
                   fraction=0.1, tie_mode="worst") -> ComparisonReport:
    """Evaluate the top- and bottom-weight tails of the test split side by side."""
    top = split_by_weight(test, SplitSelector(fraction, "top"))
    bottom = split_by_weight(test, SplitSelector(fraction, "bottom"))
    top_records = rank_split(table, top, filter_index, tie_mode)
    bottom_records = rank_split(table, bottom, filter_index, tie_mode)
    top_report = MetricsReport.from_records(top_records)
    bottom_report = MetricsReport.from_records(bottom_records)
    top_scores = np.array([r.raw_score for r in top_records])
    bottom_scores = np.array([r.raw_score for r in bottom_records])
    return ComparisonReport(
        top=top_report,
        bottom=bottom_report,
        delta_mrr=top_report.mrr - bottom_report.mrr,
        delta_median=float(abs(np.median(top_scores) - np.median(bottom_scores))),
    )


def export_scores(table: EmbeddingTable, top_split: TripleArray,
                  bottom_split: TripleArray, path) -> float:
    """Write raw scores of both splits as CSV and return the median gap.

    One row per triple with header ``split,s,p,o,w,score``; the return value
    is the absolute difference between the two splits' median scores.
    """
    if len(top_split) == 0 or len(bottom_split) == 0:
        raise ValueError("score export needs non-empty splits")
    medians = {}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["split", "s", "p", "o", "w", "score"])
        for label, split in (("top", top_split), ("bottom", bottom_split)):
            scores = score_batch(table, split.spo)
            for i in range(len(split)):
                s, p, o = (int(v) for v in split.spo[i])
                writer.writerow([label, s, p, o, repr(float(split.weights[i])),
                                 repr(float(scores[i]))])
            medians[label] = float(np.median(scores))
    return abs(medians["top"] - medians["bottom"])
