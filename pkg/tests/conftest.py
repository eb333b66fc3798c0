"""Shared fixtures: toy datasets, independent score/rank oracles, dataset discovery."""

from __future__ import annotations

import math
import os
from pathlib import Path

import numpy as np
import pytest

from focuskge import build_graph, init_embeddings

# ---------------------------------------------------------------------------
# Independent oracles (pure-Python math, no shared code with the package
# kernels beyond reading the embedding matrices).


def oracle_score(table, s, p, o) -> float:
    es = [float(v) for v in table.entities[s]]
    rp = [float(v) for v in table.relations[p]]
    eo = [float(v) for v in table.entities[o]]
    kind = table.scorer
    if kind == "transe_l1":
        return -sum(abs(a + b - c) for a, b, c in zip(es, rp, eo))
    if kind == "transe_l2":
        return -math.sqrt(sum((a + b - c) ** 2 for a, b, c in zip(es, rp, eo)))
    if kind == "distmult":
        return sum(a * b * c for a, b, c in zip(es, rp, eo))
    if kind == "complex":
        h = len(es) // 2
        total = 0.0
        for i in range(h):
            sr, si = es[i], es[h + i]
            rr, ri = rp[i], rp[h + i]
            outr, outi = eo[i], eo[h + i]
            total += sr * rr * outr + si * rr * outi + sr * ri * outi - si * ri * outr
        return total
    raise AssertionError(kind)


def oracle_rank(table, triple, side, filter_set, tie_mode) -> int:
    """Exhaustive candidate scan with its own counting logic."""
    s, p, o = triple[0], triple[1], triple[2]
    reference = oracle_score(table, s, p, o)
    higher = equal = 0
    for candidate in range(table.n_entities):
        if side == "object":
            cand_triple = (s, p, candidate)
        else:
            cand_triple = (candidate, p, o)
        if cand_triple == (s, p, o):
            continue
        if cand_triple in filter_set:
            continue
        value = oracle_score(table, *cand_triple)
        if value > reference:
            higher += 1
        elif value == reference:
            equal += 1
    if tie_mode == "worst":
        return 1 + higher + equal
    return max(1, higher + equal)


def central_difference(loss_fn, array, i, j, step=1e-5) -> float:
    """Symmetric finite difference of loss_fn w.r.t. array[i, j], in place."""
    original = array[i, j]
    array[i, j] = original + step
    up = loss_fn()
    array[i, j] = original - step
    down = loss_fn()
    array[i, j] = original
    return (up - down) / (2.0 * step)


# ---------------------------------------------------------------------------
# Toy datasets.


def ring_records(n_entities=6, n_relations=2, weight=0.9):
    """A small deterministic multigraph: rings under each relation."""
    records = []
    for r in range(n_relations):
        for i in range(n_entities):
            records.append((f"e{i}", f"r{r}", f"e{(i + r + 1) % n_entities}", weight))
    return records


def clustered_records(n_per_cluster=10, n_cross=30, n_test_high=12, n_test_low=12, seed=3):
    """Two dense communities plus low-weight cross-community noise edges.

    Returns (train, valid, test) raw record lists. In-community edges carry
    weights in [0.8, 1], cross edges in [0.02, 0.1], so the bottom tail of the
    test set is exactly the noise.
    """
    rng = np.random.default_rng(seed)
    groups = (
        [f"a{i}" for i in range(n_per_cluster)],
        [f"b{i}" for i in range(n_per_cluster)],
    )
    high = []
    for members in groups:
        for i, s in enumerate(members):
            for j, o in enumerate(members):
                if i != j:
                    high.append((s, "linked", o, float(rng.uniform(0.8, 1.0))))
    cross_pairs = set()
    while len(cross_pairs) < n_cross:
        s = groups[0][rng.integers(n_per_cluster)]
        o = groups[1][rng.integers(n_per_cluster)]
        if rng.random() < 0.5:
            s, o = o, s
        cross_pairs.add((s, o))
    low = [(s, "linked", o, float(rng.uniform(0.02, 0.1))) for s, o in sorted(cross_pairs)]

    high = [high[i] for i in rng.permutation(len(high))]
    low = [low[i] for i in rng.permutation(len(low))]
    test = high[:n_test_high] + low[:n_test_low]
    valid = high[n_test_high:n_test_high + 4]
    train = high[n_test_high + 4:] + low[n_test_low:]
    train = [train[i] for i in rng.permutation(len(train))]
    return train, valid, test


def write_tsv(path: Path, records) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        for s, p, o, w in records:
            fh.write(f"{s}\t{p}\t{o}\t{w!r}\n")
    return path


@pytest.fixture()
def ring_graph():
    records = ring_records()
    test = [("e0", "r0", "e3", 0.95), ("e2", "r1", "e5", 0.1), ("e4", "r0", "e1", 0.7)]
    valid = [("e1", "r1", "e4", 0.85)]
    return build_graph(records, valid, test)


@pytest.fixture()
def clustered_dataset(tmp_path):
    train, valid, test = clustered_records()
    return {
        "train": write_tsv(tmp_path / "train.tsv", train),
        "valid": write_tsv(tmp_path / "valid.tsv", valid),
        "test": write_tsv(tmp_path / "test.tsv", test),
        "records": (train, valid, test),
        "dir": tmp_path,
    }


def random_table(scorer, n_entities=7, n_relations=3, k=3, seed=0):
    return init_embeddings(n_entities, n_relations, scorer, k, seed)


# ---------------------------------------------------------------------------
# Published benchmark discovery (optional, used by the acceptance suite).

DATASET_FILE_CANDIDATES = {
    "train": ("train.tsv",),
    "valid": ("valid.tsv", "val.tsv"),
    "test": ("test.tsv",),
}


def find_benchmark(name: str):
    """Locate data/<name>/{train,valid,test}.tsv under $FOCUSKGE_DATA or ./data."""
    roots = []
    if os.environ.get("FOCUSKGE_DATA"):
        roots.append(Path(os.environ["FOCUSKGE_DATA"]))
    roots.append(Path(__file__).resolve().parent.parent / "data")
    for root in roots:
        base = root / name
        if not base.is_dir():
            continue
        found = {}
        for split, candidates in DATASET_FILE_CANDIDATES.items():
            for candidate in candidates:
                if (base / candidate).is_file():
                    found[split] = base / candidate
                    break
        if len(found) == 3:
            return found
    return None
