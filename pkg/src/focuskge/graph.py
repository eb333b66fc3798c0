"""Weighted triple files, label dictionaries, split arrays, and the filter set.

Input files are UTF-8 TSV, one triple per line: ``subject<TAB>predicate<TAB>
object`` plus, for weighted files, a fourth column holding a decimal weight.
Dictionaries are built over the union of all splits so held-out entities are
always representable. A built ``KnowledgeGraph`` is immutable (its arrays are
marked read-only) and safe to share across threads.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import NamedTuple

import numpy as np


class TripleFileError(ValueError):
    """A triple file could not be parsed; the message carries the line number."""


class WeightedTriple(NamedTuple):
    subject: int
    predicate: int
    object: int
    weight: float


@dataclass(frozen=True)
class TripleArray:
    """One split: an (n, 3) int64 index array plus the per-triple weights."""

    spo: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.spo.ndim != 2 or self.spo.shape[1] != 3:
            raise ValueError(f"expected an (n, 3) index array, got {self.spo.shape}")
        if self.weights.shape != (self.spo.shape[0],):
            raise ValueError("weights must align one-to-one with triples")

    def __len__(self) -> int:
        return self.spo.shape[0]

    def __getitem__(self, i: int) -> WeightedTriple:
        s, p, o = self.spo[i]
        return WeightedTriple(int(s), int(p), int(o), float(self.weights[i]))

    def frozen(self) -> "TripleArray":
        self.spo.setflags(write=False)
        self.weights.setflags(write=False)
        return self


@dataclass(frozen=True)
class SplitSelector:
    """Which end of the weight distribution to keep and how much of it."""

    fraction: float
    end: str  # "top" or "bottom"

    def __post_init__(self):
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError(f"fraction must be in (0, 1], got {self.fraction!r}")
        if self.end not in ("top", "bottom"):
            raise ValueError(f"end must be 'top' or 'bottom', got {self.end!r}")


@dataclass(frozen=True)
class KnowledgeGraph:
    """Dictionaries, split arrays, and the known-true (s, p, o) membership set."""

    entity_labels: tuple[str, ...]
    entity_index: dict[str, int]
    relation_labels: tuple[str, ...]
    relation_index: dict[str, int]
    train: TripleArray
    validation: TripleArray
    test: TripleArray
    filter_index: frozenset[tuple[int, int, int]]

    @property
    def n_entities(self) -> int:
        return len(self.entity_labels)

    @property
    def n_relations(self) -> int:
        return len(self.relation_labels)

    def decode(self, triple) -> tuple[str, str, str]:
        s, p, o = triple[0], triple[1], triple[2]
        return (self.entity_labels[s], self.relation_labels[p], self.entity_labels[o])


def load_triples(path, weighted=True):
    """Read raw (subject, predicate, object, weight) records from a TSV file.

    Unweighted files must have exactly 3 columns and every record gets
    weight 1.0; weighted files must have exactly 4. Blank lines are skipped.
    Malformed lines and empty files raise ``TripleFileError``.
    """
    expected = 4 if weighted else 3
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != expected:
                raise TripleFileError(
                    f"{path}:{lineno}: expected {expected} tab-separated fields, "
                    f"got {len(fields)}"
                )
            if weighted:
                try:
                    weight = float(fields[3])
                except ValueError:
                    raise TripleFileError(
                        f"{path}:{lineno}: unparsable weight {fields[3]!r}"
                    ) from None
                if not math.isfinite(weight):
                    raise TripleFileError(
                        f"{path}:{lineno}: non-finite weight {fields[3]!r}"
                    )
            else:
                weight = 1.0
            records.append((fields[0], fields[1], fields[2], weight))
    if not records:
        raise TripleFileError(f"{path}: no triples found")
    return records


def _encode_split(records, entity_index, relation_index, name):
    n = len(records)
    spo = np.empty((n, 3), dtype=np.int64)
    weights = np.empty(n, dtype=np.float64)
    last_weight: dict[tuple[int, int, int], float] = {}
    conflict = False
    for i, (s, p, o, w) in enumerate(records):
        key = (entity_index[s], relation_index[p], entity_index[o])
        spo[i] = key
        weights[i] = w
        if last_weight.get(key, w) != w:
            conflict = True
        last_weight[key] = w
    if conflict:
        # A weight is a property of the (s, p, o) fact, so duplicated facts
        # all take the weight of their last occurrence.
        resolved = np.array([last_weight[tuple(row)] for row in spo.tolist()])
        n_fixed = int((resolved != weights).sum())
        warnings.warn(
            f"{name}: {n_fixed} duplicated triples had conflicting weights; "
            "keeping each fact's last occurrence",
            stacklevel=3,
        )
        weights = resolved
    return TripleArray(spo, weights).frozen()


def build_graph(train, validation, test) -> KnowledgeGraph:
    """Index raw records from all splits into one immutable KnowledgeGraph.

    Labels are numbered in first-occurrence order (train, then validation,
    then test). The filter set holds exactly the union of (s, p, o) keys over
    all splits.
    """
    entity_index: dict[str, int] = {}
    relation_index: dict[str, int] = {}
    for records in (train, validation, test):
        for s, p, o, _ in records:
            if s not in entity_index:
                entity_index[s] = len(entity_index)
            if p not in relation_index:
                relation_index[p] = len(relation_index)
            if o not in entity_index:
                entity_index[o] = len(entity_index)

    splits = {
        "train": _encode_split(train, entity_index, relation_index, "train"),
        "validation": _encode_split(validation, entity_index, relation_index, "validation"),
        "test": _encode_split(test, entity_index, relation_index, "test"),
    }

    keys = [set(map(tuple, arr.spo.tolist())) for arr in splits.values()]
    overlap = (keys[0] & keys[1]) | (keys[0] & keys[2]) | (keys[1] & keys[2])
    if overlap:
        warnings.warn(
            f"splits share {len(overlap)} (s, p, o) facts; they should be disjoint",
            stacklevel=2,
        )
    filter_index = frozenset(keys[0] | keys[1] | keys[2])

    entity_labels = tuple(entity_index)
    relation_labels = tuple(relation_index)
    return KnowledgeGraph(
        entity_labels=entity_labels,
        entity_index=entity_index,
        relation_labels=relation_labels,
        relation_index=relation_index,
        train=splits["train"],
        validation=splits["validation"],
        test=splits["test"],
        filter_index=filter_index,
    )


def normalize_weights(graph: KnowledgeGraph, mode="passthrough") -> KnowledgeGraph:
    """Check or rescale weights so every split satisfies 0 <= w <= 1.

    ``passthrough`` verifies the invariant and returns the graph unchanged;
    any out-of-range weight raises ``ValueError`` naming the offending
    triple. ``minmax`` affinely maps weights using the *train* split's min
    and max, applies the same map to all splits, and clamps to [0, 1];
    constant train weights make the map undefined and raise.
    """
    named = (("train", graph.train), ("validation", graph.validation), ("test", graph.test))
    if mode == "passthrough":
        for name, arr in named:
            bad = np.flatnonzero((arr.weights < 0.0) | (arr.weights > 1.0))
            if bad.size:
                i = int(bad[0])
                labels = graph.decode(arr.spo[i])
                raise ValueError(
                    f"{name} triple {labels} has weight {arr.weights[i]!r} outside [0, 1]"
                )
        return graph
    if mode == "minmax":
        if len(graph.train) == 0:
            raise ValueError("minmax normalization needs a non-empty train split")
        lo = float(graph.train.weights.min())
        hi = float(graph.train.weights.max())
        if hi <= lo:
            raise ValueError(
                f"minmax normalization undefined: train weights are constant at {lo!r}"
            )
        span = hi - lo
        rescaled = {
            name: TripleArray(arr.spo, np.clip((arr.weights - lo) / span, 0.0, 1.0)).frozen()
            for name, arr in named
        }
        return replace(graph, **rescaled)
    raise ValueError(f"unknown normalization mode {mode!r}")


def _selection_count(fraction: float, n: int) -> int:
    # ceil of fraction * n, evaluated on the nearest simple rational so that
    # e.g. 0.1 of 21720 is exactly 2172 rather than ceil(2172.0000000000005).
    return math.ceil(Fraction(fraction).limit_denominator(10**6) * n)


def split_by_weight(test: TripleArray, selector: SplitSelector) -> TripleArray:
    """The ceil(fraction * n) largest- or smallest-weight triples of a split.

    Ties at the cut are broken by ascending (s, p, o) index order, so the
    selection is deterministic.
    """
    n = len(test)
    if n == 0:
        raise ValueError("cannot select from an empty test split")
    count = _selection_count(selector.fraction, n)
    s, p, o = test.spo[:, 0], test.spo[:, 1], test.spo[:, 2]
    primary = -test.weights if selector.end == "top" else test.weights
    order = np.lexsort((o, p, s, primary))
    pick = order[:count]
    return TripleArray(test.spo[pick].copy(), test.weights[pick].copy()).frozen()


def dataset_stats(graph: KnowledgeGraph, fraction=0.1) -> dict:
    """Counts for the stats command: entities, relations, splits, weight tails."""
    return {
        "entities": graph.n_entities,
        "relations": graph.n_relations,
        "train": len(graph.train),
        "validation": len(graph.validation),
        "test": len(graph.test),
        f"test_top_{_percent(fraction)}": len(
            split_by_weight(graph.test, SplitSelector(fraction, "top"))
        ),
        f"test_bottom_{_percent(fraction)}": len(
            split_by_weight(graph.test, SplitSelector(fraction, "bottom"))
        ),
    }


def _percent(fraction: float) -> str:
    pct = fraction * 100
    return f"{pct:g}pct"
