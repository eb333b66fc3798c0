"""Embedding storage, triple scoring functions, and their analytic gradients.

Four scoring functions are supported:

* ``transe_l1`` / ``transe_l2``: negated L1/L2 norm of ``subject + relation -
  object``.
* ``distmult``: trilinear product ``sum(subject * relation * object)``.
* ``complex``: real part of the Hermitian trilinear product; each embedding
  row stores the real half followed by the imaginary half, so the row width
  is ``2 * k``.

All kernels are plain elementwise numpy followed by a row sum, never a BLAS
call, so scoring one triple, a batch, or one entity slot against every
entity produces bit-identical numbers.

Checkpoint container (version 1, stable): a single file holding one
UTF-8 JSON header line::

    {"dim": ..., "format": "focuskge-embeddings", "k": ...,
     "n_entities": ..., "n_relations": ..., "scorer": ..., "version": 1}

followed by ``n_entities * dim`` then ``n_relations * dim`` little-endian
float64 values, row-major. Writing the same table twice yields byte-identical
files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

TRANSE_L1 = "transe_l1"
TRANSE_L2 = "transe_l2"
DISTMULT = "distmult"
COMPLEX = "complex"
SCORERS = (TRANSE_L1, TRANSE_L2, DISTMULT, COMPLEX)

CHECKPOINT_FORMAT = "focuskge-embeddings"
CHECKPOINT_VERSION = 1


def embedding_width(scorer: str, k: int) -> int:
    """Row width of the stored matrices: 2k for complex, k otherwise."""
    if scorer not in SCORERS:
        raise ValueError(f"unknown scorer {scorer!r}, expected one of {SCORERS}")
    return 2 * k if scorer == COMPLEX else k


@dataclass
class EmbeddingTable:
    """Entity and relation embedding matrices plus the scorer they belong to."""

    entities: np.ndarray    # (n_entities, dim)
    relations: np.ndarray   # (n_relations, dim)
    scorer: str
    k: int

    def __post_init__(self):
        width = embedding_width(self.scorer, self.k)
        if self.entities.ndim != 2 or self.entities.shape[1] != width:
            raise ValueError(
                f"entity matrix must be (n, {width}) for scorer {self.scorer!r}, "
                f"got {self.entities.shape}"
            )
        if self.relations.ndim != 2 or self.relations.shape[1] != width:
            raise ValueError(
                f"relation matrix must be (n, {width}) for scorer {self.scorer!r}, "
                f"got {self.relations.shape}"
            )

    @property
    def n_entities(self) -> int:
        return self.entities.shape[0]

    @property
    def n_relations(self) -> int:
        return self.relations.shape[0]

    @property
    def dim(self) -> int:
        return self.entities.shape[1]


class ScoreGradient(NamedTuple):
    """Partial derivatives of one triple's score w.r.t. its three embeddings."""

    d_subject: np.ndarray
    d_relation: np.ndarray
    d_object: np.ndarray


def init_embeddings(n_entities, n_relations, scorer, k, seed, dtype=np.float64):
    """Fresh table with entries drawn i.i.d. uniform on [-1/sqrt(dim), 1/sqrt(dim)].

    Reproducible: the same seed yields bitwise-identical matrices.
    """
    if k < 1:
        raise ValueError(f"embedding dimensionality must be >= 1, got {k}")
    width = embedding_width(scorer, k)
    rng = np.random.default_rng(seed)
    bound = 1.0 / math.sqrt(width)
    entities = rng.uniform(-bound, bound, size=(n_entities, width)).astype(dtype, copy=False)
    relations = rng.uniform(-bound, bound, size=(n_relations, width)).astype(dtype, copy=False)
    return EmbeddingTable(entities, relations, scorer, k)


def raw_scores(scorer, subj, rel, obj):
    """Scores for stacked (or broadcastable) embedding rows of shape (..., dim)."""
    if scorer == TRANSE_L1:
        return -np.abs(subj + rel - obj).sum(axis=-1)
    if scorer == TRANSE_L2:
        res = subj + rel - obj
        return -np.sqrt((res * res).sum(axis=-1))
    if scorer == DISTMULT:
        # subj and obj multiplied first so a subject/object swap is exactly
        # score-preserving, not merely up to rounding
        return (subj * obj * rel).sum(axis=-1)
    if scorer == COMPLEX:
        h = subj.shape[-1] // 2
        sr, si = subj[..., :h], subj[..., h:]
        rr, ri = rel[..., :h], rel[..., h:]
        outr, outi = obj[..., :h], obj[..., h:]
        return (sr * rr * outr + si * rr * outi + sr * ri * outi - si * ri * outr).sum(axis=-1)
    raise ValueError(f"unknown scorer {scorer!r}, expected one of {SCORERS}")


def slot_gradients(scorer, subj, rel, obj):
    """d score / d (subj, rel, obj) for same-shape (..., dim) embedding rows.

    The L1 residual uses the sign subgradient with sign(0) = 0; the L2 norm
    gradient at a zero residual is defined as the zero vector.
    """
    if scorer == TRANSE_L1:
        sgn = np.sign(subj + rel - obj)
        return -sgn, -sgn, sgn
    if scorer == TRANSE_L2:
        res = subj + rel - obj
        norm = np.sqrt((res * res).sum(axis=-1, keepdims=True))
        unit = np.divide(res, norm, out=np.zeros_like(res), where=norm > 0)
        return -unit, -unit, unit
    if scorer == DISTMULT:
        return rel * obj, subj * obj, subj * rel
    if scorer == COMPLEX:
        h = subj.shape[-1] // 2
        sr, si = subj[..., :h], subj[..., h:]
        rr, ri = rel[..., :h], rel[..., h:]
        outr, outi = obj[..., :h], obj[..., h:]
        d_subj = np.concatenate([rr * outr + ri * outi, rr * outi - ri * outr], axis=-1)
        d_rel = np.concatenate([sr * outr + si * outi, sr * outi - si * outr], axis=-1)
        d_obj = np.concatenate([sr * rr - si * ri, si * rr + sr * ri], axis=-1)
        return d_subj, d_rel, d_obj
    raise ValueError(f"unknown scorer {scorer!r}, expected one of {SCORERS}")


def score(table: EmbeddingTable, triple) -> float:
    """Score of one (subject, predicate, object) index triple."""
    s, p, o = triple[0], triple[1], triple[2]
    return float(raw_scores(table.scorer, table.entities[s], table.relations[p],
                            table.entities[o]))


def score_batch(table: EmbeddingTable, spo: np.ndarray) -> np.ndarray:
    """Scores for an (n, 3) index array, one entry per row."""
    spo = np.asarray(spo)
    return raw_scores(table.scorer, table.entities[spo[:, 0]],
                      table.relations[spo[:, 1]], table.entities[spo[:, 2]])


def score_transe(table: EmbeddingTable, triple) -> float:
    """Negated translation-residual norm; requires a transe_l1/transe_l2 table."""
    if table.scorer not in (TRANSE_L1, TRANSE_L2):
        raise ValueError(f"table holds a {table.scorer!r} model, not a TransE one")
    return score(table, triple)


def score_distmult(table: EmbeddingTable, triple) -> float:
    """Trilinear product score; requires a distmult table."""
    if table.scorer != DISTMULT:
        raise ValueError(f"table holds a {table.scorer!r} model, not a DistMult one")
    return score(table, triple)


def score_complex(table: EmbeddingTable, triple) -> float:
    """Hermitian trilinear product score; requires a complex table."""
    if table.scorer != COMPLEX:
        raise ValueError(f"table holds a {table.scorer!r} model, not a ComplEx one")
    return score(table, triple)


def score_gradient(table: EmbeddingTable, triple) -> ScoreGradient:
    """Analytic gradient of one triple's score w.r.t. its three embedding rows."""
    s, p, o = triple[0], triple[1], triple[2]
    d_s, d_p, d_o = slot_gradients(table.scorer, table.entities[s],
                                   table.relations[p], table.entities[o])
    return ScoreGradient(d_s, d_p, d_o)


def score_all_objects(table: EmbeddingTable, s: int, p: int) -> np.ndarray:
    """Vector of score(s, p, o) for every entity o, bit-identical to per-triple calls."""
    return raw_scores(table.scorer, table.entities[s], table.relations[p], table.entities)


def score_all_subjects(table: EmbeddingTable, p: int, o: int) -> np.ndarray:
    """Vector of score(s, p, o) for every entity s, bit-identical to per-triple calls."""
    return raw_scores(table.scorer, table.entities, table.relations[p], table.entities[o])


def save_embeddings(table: EmbeddingTable, path) -> None:
    """Write the checkpoint container described in the module docstring."""
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "scorer": table.scorer,
        "k": table.k,
        "n_entities": table.n_entities,
        "n_relations": table.n_relations,
        "dim": table.dim,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(table.entities, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(table.relations, dtype="<f8").tobytes())


def load_embeddings(path) -> EmbeddingTable:
    """Read a checkpoint container back into an EmbeddingTable."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"{path}: not an embedding checkpoint") from exc
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: unexpected container format {header.get('format')!r}")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported container version {header.get('version')!r}")
        n_ent, n_rel, dim = header["n_entities"], header["n_relations"], header["dim"]
        data = np.frombuffer(fh.read(), dtype="<f8")
        if data.size != (n_ent + n_rel) * dim:
            raise ValueError(
                f"{path}: payload holds {data.size} values, "
                f"header promises {(n_ent + n_rel) * dim}"
            )
        entities = data[: n_ent * dim].reshape(n_ent, dim).copy()
        relations = data[n_ent * dim:].reshape(n_rel, dim).copy()
        return EmbeddingTable(entities, relations, header["scorer"], header["k"])
