"""Training loop: corruption sampling, pairwise loss, L3 penalty, sparse Adam.

Each epoch shuffles the training triples and walks them in batches. A batch
scores its positives and their sampled corruptions, pushes both through the
modulation layer (unless ``focus`` is off, in which case the plain softplus
scores feed the loss directly), sums the per-pair losses plus an L3 penalty
over the embedding rows the batch touched, and applies one bias-corrected
Adam update to exactly those rows. Everything downstream of the seed is
deterministic: rerunning a config reproduces the loss trace and final
parameters bit for bit.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .focuse import FocusEParams, modulation_factor, sigmoid, softplus
from .graph import KnowledgeGraph
from .scorers import (
    SCORERS,
    EmbeddingTable,
    init_embeddings,
    raw_scores,
    save_embeddings,
    slot_gradients,
)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8


class TrainingDiverged(RuntimeError):
    """The loss left the finite range; the message pinpoints epoch and batch."""


@dataclass
class TrainConfig:
    """Every knob of one training run."""

    scorer: str
    k: int
    eta: int = 10                    # corruptions sampled per positive
    learning_rate: float = 1e-3
    epochs: int = 100
    gamma: float = 0.0               # L3 penalty weight
    decay_epochs: int = 0            # structure-weight decay horizon; 0 = hold constant
    structure_weight: float = 1.0    # constant used when decay_epochs == 0
    batch_size: int = 10_000
    seed: int = 0
    focus: bool = True               # False trains the conventional twin (no modulation)
    dtype: str = "float64"

    def __post_init__(self):
        if self.scorer not in SCORERS:
            raise ValueError(f"scorer must be one of {SCORERS}, got {self.scorer!r}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.eta < 1:
            raise ValueError(f"eta must be >= 1, got {self.eta}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.decay_epochs < 0:
            raise ValueError(f"decay_epochs must be >= 0, got {self.decay_epochs}")
        if not 0.0 <= self.structure_weight <= 1.0:
            raise ValueError(
                f"structure_weight must be in [0, 1], got {self.structure_weight}"
            )
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.dtype not in ("float64", "float32"):
            raise ValueError(f"dtype must be float64 or float32, got {self.dtype!r}")


@dataclass(frozen=True)
class CorruptionBatch:
    """Corruptions of one positive: (eta, 3) triples plus the replaced-slot flags."""

    triples: np.ndarray
    subject_side: np.ndarray


@dataclass
class AdamState:
    """First/second moment accumulators shaped like the table, plus the step count."""

    m_entities: np.ndarray
    v_entities: np.ndarray
    m_relations: np.ndarray
    v_relations: np.ndarray
    step: int = 0

    @classmethod
    def for_table(cls, table: EmbeddingTable) -> "AdamState":
        return cls(
            m_entities=np.zeros_like(table.entities),
            v_entities=np.zeros_like(table.entities),
            m_relations=np.zeros_like(table.relations),
            v_relations=np.zeros_like(table.relations),
        )


@dataclass(frozen=True)
class SparseGradients:
    """Per-row loss gradients for the embedding rows one batch touched."""

    entity_rows: np.ndarray
    entity_grads: np.ndarray
    relation_rows: np.ndarray
    relation_grads: np.ndarray


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    structure_weight: float
    mean_loss: float


def corrupt_batch(spo: np.ndarray, eta: int, n_entities: int, rng):
    """eta corruptions per positive row: (n, eta, 3) triples and side flags.

    For each corruption the replaced side is chosen uniformly and the
    replacement entity is drawn uniformly from the whole entity set,
    redrawing while it collides with the original entity in that slot.
    Corruptions are deliberately not checked against known-true triples.
    """
    if n_entities < 2:
        raise ValueError("corruption sampling needs at least 2 entities")
    spo = np.asarray(spo)
    n = spo.shape[0]
    subject_side = rng.integers(0, 2, size=(n, eta)).astype(bool)
    originals = np.where(subject_side, spo[:, 0, None], spo[:, 2, None])
    replacements = rng.integers(0, n_entities, size=(n, eta))
    while True:
        clash = replacements == originals
        n_clash = int(clash.sum())
        if n_clash == 0:
            break
        replacements[clash] = rng.integers(0, n_entities, size=n_clash)
    out = np.empty((n, eta, 3), dtype=np.int64)
    out[..., 0] = np.where(subject_side, replacements, spo[:, 0, None])
    out[..., 1] = spo[:, 1, None]
    out[..., 2] = np.where(subject_side, spo[:, 2, None], replacements)
    return out, subject_side


def sample_corruptions(triple, eta: int, n_entities: int, rng) -> CorruptionBatch:
    """Corruptions of a single positive triple."""
    triples, flags = corrupt_batch(np.asarray(triple, dtype=np.int64)[None, :3],
                                   eta, n_entities, rng)
    return CorruptionBatch(triples[0], flags[0])


def pair_loss(h_pos, h_neg):
    """Loss of one (positive, corruption) pair of modulated scores.

    Mathematically -log(e^h_pos / (e^h_pos + e^h_neg)); evaluated as
    softplus(h_neg - h_pos), which is the same quantity without overflow.
    Elementwise over arrays.
    """
    return softplus(np.asarray(h_neg) - np.asarray(h_pos))


def l3_penalty(rows: np.ndarray, gamma: float) -> float:
    """gamma * sum |x|^3 over the given embedding rows."""
    return float(gamma * (np.abs(rows) ** 3).sum())


def l3_penalty_gradient(rows: np.ndarray, gamma: float) -> np.ndarray:
    """d(gamma * sum |x|^3)/dx = 3 * gamma * sign(x) * x^2, elementwise."""
    return 3.0 * gamma * rows * np.abs(rows)


def aggregate_rows(indices: np.ndarray, vectors: np.ndarray):
    """Sum gradient vectors that hit the same row.

    Returns sorted unique row ids and their summed vectors; the stable sort
    fixes the accumulation order, so results are reproducible.
    """
    order = np.argsort(indices, kind="stable")
    sorted_idx = indices[order]
    starts = np.concatenate([[0], np.flatnonzero(np.diff(sorted_idx)) + 1])
    sums = np.add.reduceat(vectors[order], starts, axis=0)
    return sorted_idx[starts], sums


def batch_loss_and_gradients(table: EmbeddingTable, pos_spo, pos_weights, corruptions,
                             *, structure_weight=1.0, gamma=0.0, focus=True):
    """Loss and sparse gradients of one batch.

    ``corruptions`` is the (n, eta, 3) block from :func:`corrupt_batch`. The
    loss is the sum of pair losses over every (positive, corruption) pair
    plus the L3 penalty over every distinct embedding row the batch touches;
    both polarities of the modulation factor use the positive's weight. With
    ``focus=False`` the modulation layer is skipped entirely.

    Returns ``(loss, n_pairs, SparseGradients)``.
    """
    ent, rel = table.entities, table.relations
    scorer = table.scorer
    pos_spo = np.asarray(pos_spo)
    n, eta = corruptions.shape[:2]
    flat = corruptions.reshape(n * eta, 3)

    e_s, r_p, e_o = ent[pos_spo[:, 0]], rel[pos_spo[:, 1]], ent[pos_spo[:, 2]]
    c_s, c_p, c_o = ent[flat[:, 0]], rel[flat[:, 1]], ent[flat[:, 2]]
    f_pos = raw_scores(scorer, e_s, r_p, e_o)
    f_neg = raw_scores(scorer, c_s, c_p, c_o)

    h_pos = softplus(f_pos)
    h_neg = softplus(f_neg)
    if focus:
        factor_pos = modulation_factor(pos_weights, structure_weight, True)
        factor_neg = modulation_factor(pos_weights, structure_weight, False)
        factor_pos = factor_pos.astype(h_pos.dtype, copy=False)
        factor_neg = np.repeat(factor_neg, eta).astype(h_neg.dtype, copy=False)
        h_pos = factor_pos * h_pos
        h_neg = factor_neg * h_neg

    margin = h_neg.reshape(n, eta) - h_pos[:, None]
    loss = float(softplus(margin).sum())

    # dL/dh per pair is sigmoid(margin); chain through modulation * softplus.
    pair_grad = sigmoid(margin)
    upstream_pos = -pair_grad.sum(axis=1) * sigmoid(f_pos)
    upstream_neg = pair_grad.reshape(-1) * sigmoid(f_neg)
    if focus:
        upstream_pos *= factor_pos
        upstream_neg *= factor_neg

    g_s, g_p, g_o = slot_gradients(scorer, e_s, r_p, e_o)
    g_s *= upstream_pos[:, None]
    g_p *= upstream_pos[:, None]
    g_o *= upstream_pos[:, None]
    cg_s, cg_p, cg_o = slot_gradients(scorer, c_s, c_p, c_o)
    cg_s *= upstream_neg[:, None]
    cg_p *= upstream_neg[:, None]
    cg_o *= upstream_neg[:, None]

    ent_rows, ent_grads = aggregate_rows(
        np.concatenate([pos_spo[:, 0], pos_spo[:, 2], flat[:, 0], flat[:, 2]]),
        np.concatenate([g_s, g_o, cg_s, cg_o]),
    )
    rel_rows, rel_grads = aggregate_rows(
        np.concatenate([pos_spo[:, 1], flat[:, 1]]),
        np.concatenate([g_p, cg_p]),
    )

    if gamma > 0.0:
        touched_ent = ent[ent_rows]
        touched_rel = rel[rel_rows]
        loss += l3_penalty(touched_ent, gamma) + l3_penalty(touched_rel, gamma)
        ent_grads += l3_penalty_gradient(touched_ent, gamma)
        rel_grads += l3_penalty_gradient(touched_rel, gamma)

    grads = SparseGradients(ent_rows, ent_grads, rel_rows, rel_grads)
    return loss, n * eta, grads


def _check_finite(rows: np.ndarray, grads: np.ndarray, kind: str):
    finite = np.isfinite(grads).all(axis=1)
    if not finite.all():
        bad = int(rows[np.flatnonzero(~finite)[0]])
        raise ValueError(f"non-finite gradient for {kind} row {bad}")


def adam_step(state: AdamState, table: EmbeddingTable, grads: SparseGradients,
              learning_rate: float) -> None:
    """One bias-corrected Adam update, applied in place to the touched rows only.

    Moment accumulators of untouched rows are left alone (lazy update); the
    global step counter advances once per call and drives bias correction.
    """
    _check_finite(grads.entity_rows, grads.entity_grads, "entity")
    _check_finite(grads.relation_rows, grads.relation_grads, "relation")
    state.step += 1
    c1 = 1.0 - ADAM_BETA1 ** state.step
    c2 = 1.0 - ADAM_BETA2 ** state.step
    updates = (
        (grads.entity_rows, grads.entity_grads, state.m_entities, state.v_entities,
         table.entities),
        (grads.relation_rows, grads.relation_grads, state.m_relations, state.v_relations,
         table.relations),
    )
    for rows, g, m, v, params in updates:
        if rows.size == 0:
            continue
        g = g.astype(params.dtype, copy=False)
        m_rows = ADAM_BETA1 * m[rows] + (1.0 - ADAM_BETA1) * g
        v_rows = ADAM_BETA2 * v[rows] + (1.0 - ADAM_BETA2) * (g * g)
        m[rows] = m_rows
        v[rows] = v_rows
        params[rows] -= learning_rate * (m_rows / c1) / (np.sqrt(v_rows / c2) + ADAM_EPSILON)


def train(graph: KnowledgeGraph, config: TrainConfig, *, checkpoint_dir=None,
          checkpoint_every=0, log=None):
    """Run the full loop and return the trained table plus the per-epoch trace.

    The table is initialized from ``config.seed``; shuffling and corruption
    sampling use an independent stream spawned from the same seed, so a rerun
    reproduces everything exactly. A non-finite loss aborts with
    :class:`TrainingDiverged`.
    """
    if len(graph.train) == 0:
        raise ValueError("cannot train on an empty train split")
    dtype = np.float64 if config.dtype == "float64" else np.float32
    table = init_embeddings(graph.n_entities, graph.n_relations, config.scorer,
                            config.k, config.seed, dtype=dtype)
    state = AdamState.for_table(table)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(1,)))
    schedule = FocusEParams(config.structure_weight, config.decay_epochs)

    spo = graph.train.spo
    weights = graph.train.weights
    n = len(graph.train)
    trace: list[EpochStats] = []
    for epoch in range(config.epochs):
        structure_weight = schedule.at_epoch(epoch)
        order = rng.permutation(n)
        total = 0.0
        pairs = 0
        for batch_no, start in enumerate(range(0, n, config.batch_size)):
            picked = order[start:start + config.batch_size]
            corruptions, _ = corrupt_batch(spo[picked], config.eta,
                                           graph.n_entities, rng)
            loss, n_pairs, grads = batch_loss_and_gradients(
                table, spo[picked], weights[picked], corruptions,
                structure_weight=structure_weight, gamma=config.gamma,
                focus=config.focus,
            )
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}"
                )
            adam_step(state, table, grads, config.learning_rate)
            total += loss
            pairs += n_pairs
        trace.append(EpochStats(epoch, structure_weight, total / pairs))
        if log is not None:
            log(trace[-1])
        if checkpoint_dir and checkpoint_every and (epoch + 1) % checkpoint_every == 0:
            save_embeddings(table, os.path.join(checkpoint_dir, f"epoch{epoch + 1:05d}.kge"))
    return table, trace


def save_loss_trace(trace, path) -> None:
    """Write the per-epoch trace as CSV with columns epoch, beta, mean_loss."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "beta", "mean_loss"])
        for entry in trace:
            writer.writerow([entry.epoch, repr(entry.structure_weight),
                             repr(entry.mean_loss)])
