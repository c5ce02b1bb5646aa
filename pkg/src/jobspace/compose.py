"""Posting vector composition: skill-adjusted title block plus location block.

The production path averages a title vector with the mean of its posting's
skill vectors in one shot. A general iterative retrofitter over a neighbor
lexicon is also provided for optional vector refinement. The final posting
vector concatenates the unit-normalized semantic block with the location
unit vector scaled by a configurable weight.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import CuratedSkillTable, JobPosting, Vocabulary, fallback_skills
from .errors import DataError, UnresolvableSkillsError
from .geo import geo_to_unit_vector
from .training import EmbeddingSpace

logger = logging.getLogger(__name__)


@dataclass
class JobVector:
    """Composed posting vector: semantic block (unit norm) plus location block."""

    semantic: np.ndarray
    location: np.ndarray
    w_loc: float

    @property
    def full(self) -> np.ndarray:
        return np.concatenate([self.semantic, self.location])

    @property
    def dim(self) -> int:
        return self.semantic.shape[0] + 3


class Lexicon:
    """Undirected neighbor lists with per-edge weights and per-node anchors.

    Edge weights default to the inverse degree of the node being updated;
    `uniform_weights=True` uses weight 1 per edge instead. Anchors default
    to 1 per node and may be overridden individually.
    """

    def __init__(self, uniform_weights: bool = False, default_alpha: float = 1.0):
        self.neighbors: dict[int, set[int]] = {}
        self.uniform_weights = uniform_weights
        self.default_alpha = default_alpha
        self.alpha_overrides: dict[int, float] = {}
        self.edge_weights: dict[tuple[int, int], float] = {}

    def add_edge(self, i: int, j: int, weight: float | None = None) -> None:
        if i == j:
            raise ValueError("lexicon edges must join distinct nodes")
        if weight is not None and weight < 0:
            raise ValueError("edge weights must be >= 0")
        self.neighbors.setdefault(i, set()).add(j)
        self.neighbors.setdefault(j, set()).add(i)
        if weight is not None:
            self.edge_weights[(min(i, j), max(i, j))] = weight

    def set_alpha(self, i: int, alpha: float) -> None:
        if alpha <= 0:
            raise ValueError("anchors must be > 0")
        self.alpha_overrides[i] = alpha

    def alpha(self, i: int) -> float:
        return self.alpha_overrides.get(i, self.default_alpha)

    def beta(self, i: int, j: int) -> float:
        explicit = self.edge_weights.get((min(i, j), max(i, j)))
        if explicit is not None:
            return explicit
        if self.uniform_weights:
            return 1.0
        return 1.0 / len(self.neighbors[i])

    def nodes(self) -> list[int]:
        return sorted(self.neighbors)


def retrofit_iterative(initial: np.ndarray, lexicon: Lexicon, iterations: int = 10) -> np.ndarray:
    """Pull each vector toward its lexicon neighbors while anchored to its start.

    Per iteration every lexicon node is recomputed from the previous iterate
    (Jacobi update): the weighted neighbor sum plus the anchored original,
    normalized by the total weight. Inputs are never mutated.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    vectors = np.asarray(initial, dtype=np.float64)
    original = vectors.copy()
    current = vectors.copy()
    node_list = lexicon.nodes()
    for node in node_list:
        if not 0 <= node < vectors.shape[0]:
            raise ValueError(f"lexicon node {node} outside vector table")
    for _ in range(iterations):
        nxt = current.copy()
        for i in node_list:
            nbrs = sorted(lexicon.neighbors[i])
            alpha = lexicon.alpha(i)
            total = alpha
            acc = alpha * original[i]
            for j in nbrs:
                b = lexicon.beta(i, j)
                total += b
                acc = acc + b * current[j]
            if total <= 0.0:
                logger.warning("retrofit: node %d has zero total weight; skipped", i)
                continue
            nxt[i] = acc / total
        current = nxt
    return current


def compose_job_vector(title_vec: np.ndarray, skill_vecs: Sequence[np.ndarray]) -> np.ndarray:
    """One-shot title adjustment: (n * title + sum(skills)) / (2n) for n skills."""
    if len(skill_vecs) == 0:
        raise ValueError("skill vector list must be non-empty")
    title = np.asarray(title_vec, dtype=np.float64)
    stack = np.asarray(skill_vecs, dtype=np.float64)
    if stack.ndim != 2 or stack.shape[1] != title.shape[0]:
        raise ValueError("skill vectors must match the title dimension")
    n = stack.shape[0]
    return (n * title + stack.sum(axis=0)) / (2.0 * n)


def append_location(semantic: np.ndarray, geo_vec: np.ndarray, w_loc: float) -> JobVector:
    """Unit-normalize the semantic block and attach the weighted location block."""
    if w_loc < 0:
        raise ValueError("w_loc must be >= 0")
    semantic = np.asarray(semantic, dtype=np.float64)
    geo_vec = np.asarray(geo_vec, dtype=np.float64)
    if geo_vec.shape != (3,):
        raise ValueError("location vector must have 3 components")
    if abs(float(geo_vec @ geo_vec) - 1.0) > 1e-6:
        raise ValueError("location vector must be unit-norm")
    norm = float(np.linalg.norm(semantic))
    if norm == 0.0 or not np.isfinite(norm):
        raise DataError("semantic vector has zero or non-finite norm; cannot normalize")
    return JobVector(semantic=semantic / norm, location=w_loc * geo_vec, w_loc=w_loc)


def vectorize_posting(
    posting: JobPosting,
    space: EmbeddingSpace,
    table: CuratedSkillTable | None = None,
    w_loc: float = 1.0,
    lenient: bool = False,
) -> JobVector:
    """Full composition pipeline for one record.

    Skills are resolved through the curated fallback; in lenient mode a
    record with no resolvable skills degrades to its bare title vector.
    """
    if not 0 <= posting.title_id < space.title_vecs.shape[0]:
        raise DataError(f"record {posting.id}: title id {posting.title_id} has no embedding")
    title_vec = space.title_vecs[posting.title_id]
    try:
        skill_ids = fallback_skills(posting, table)
    except UnresolvableSkillsError:
        if not lenient:
            raise
        skill_ids = ()
    if skill_ids:
        for s in skill_ids:
            if not 0 <= s < space.skill_vecs.shape[0]:
                raise DataError(f"record {posting.id}: skill id {s} has no embedding")
        semantic = compose_job_vector(title_vec, [space.skill_vecs[s] for s in skill_ids])
    else:
        semantic = np.array(title_vec, dtype=np.float64)
    geo_vec = geo_to_unit_vector(posting.lat_deg, posting.lon_deg)
    return append_location(semantic, geo_vec, w_loc)


@dataclass
class VectorSet:
    """Composed vectors for a corpus, stored in file order as float32 rows."""

    ids: list[str]
    matrix: np.ndarray

    def __post_init__(self):
        if len(self.ids) != self.matrix.shape[0]:
            raise ValueError("id count does not match matrix rows")

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def by_id(self) -> dict[str, np.ndarray]:
        return {rec_id: self.matrix[i] for i, rec_id in enumerate(self.ids)}


def vectorize_corpus(
    postings: Sequence[JobPosting],
    space: EmbeddingSpace,
    table: CuratedSkillTable | None = None,
    w_loc: float = 1.0,
    lenient: bool = False,
) -> VectorSet:
    ids: list[str] = []
    rows: list[np.ndarray] = []
    seen: set[str] = set()
    for p in postings:
        if p.id in seen:
            raise DataError(f"duplicate record id {p.id!r}")
        seen.add(p.id)
        jv = vectorize_posting(p, space, table, w_loc=w_loc, lenient=lenient)
        ids.append(p.id)
        rows.append(jv.full.astype(np.float32))
    matrix = np.vstack(rows) if rows else np.zeros((0, space.k + 3), dtype=np.float32)
    return VectorSet(ids=ids, matrix=matrix)


# ---------------------------------------------------------------------------
# Vectorized-corpus file: binary layout and text mirror
# ---------------------------------------------------------------------------

_VEC_MAGIC = b"JVEC"
_VEC_VERSION = 1


def save_vectors(path, vectors: VectorSet) -> None:
    """Binary layout: magic, version, count, dim, then (id_len, id, dim f32 LE) records."""
    count, dim = vectors.matrix.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sHQI", _VEC_MAGIC, _VEC_VERSION, count, dim))
        for i, rec_id in enumerate(vectors.ids):
            raw = rec_id.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(vectors.matrix[i].astype("<f4").tobytes())


def load_vectors(path) -> VectorSet:
    with open(path, "rb") as fh:
        header = fh.read(struct.calcsize("<4sHQI"))
        magic, version, count, dim = struct.unpack("<4sHQI", header)
        if magic != _VEC_MAGIC:
            raise DataError(f"{path}: not a vector file")
        if version != _VEC_VERSION:
            raise DataError(f"{path}: unsupported vector file version {version}")
        ids: list[str] = []
        matrix = np.zeros((count, dim), dtype=np.float32)
        row_bytes = 4 * dim
        for i in range(count):
            (id_len,) = struct.unpack("<H", fh.read(2))
            ids.append(fh.read(id_len).decode("utf-8"))
            matrix[i] = np.frombuffer(fh.read(row_bytes), dtype="<f4")
    return VectorSet(ids=ids, matrix=matrix)


def write_vectors_text(path, vectors: VectorSet) -> None:
    """Text mirror in the embedding format: `count dim` header, then id + values."""
    count, dim = vectors.matrix.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{count} {dim}\n")
        for i, rec_id in enumerate(vectors.ids):
            vals = " ".join(f"{float(v):.9g}" for v in vectors.matrix[i])
            fh.write(f"{rec_id} {vals}\n")
