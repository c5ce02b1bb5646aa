"""Relation graphs over titles and skills, plus triplet sampling.

Three graphs are built from a corpus: directed title-to-title transitions
from career sequences, symmetric skill co-occurrence within records, and
title-to-skill incidence. Training triplets (source, positive, negative)
are sampled uniformly over edges with uniform rejection-sampled negatives.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .corpus import CareerSequence, JobPosting
from .errors import DataError

logger = logging.getLogger(__name__)

# rejection attempts per positive edge before the edge is redrawn
MAX_NEGATIVE_ATTEMPTS = 100


class GraphKind(str, Enum):
    JOB_JOB = "job_job"
    SKILL_SKILL = "skill_skill"
    JOB_SKILL = "job_skill"


KIND_ORDER = (GraphKind.JOB_JOB, GraphKind.SKILL_SKILL, GraphKind.JOB_SKILL)


@dataclass
class RelationGraph:
    kind: GraphKind
    adjacency: dict[int, set[int]]
    left_count: int
    right_count: int
    _edges: list[tuple[int, int]] | None = field(default=None, repr=False)

    @property
    def num_edges(self) -> int:
        return sum(len(v) for v in self.adjacency.values())

    def edges(self) -> list[tuple[int, int]]:
        """Deterministically ordered edge list (sorted by source, then target)."""
        if self._edges is None:
            self._edges = [(x, y) for x in sorted(self.adjacency) for y in sorted(self.adjacency[x])]
        return self._edges

    def neighbors(self, node: int) -> set[int]:
        return self.adjacency.get(node, set())


@dataclass(frozen=True)
class Triplet:
    """Source x with observed positive y and sampled negative z."""

    x: int
    y: int
    z: int
    kind: GraphKind


def build_job_job(sequences: Iterable[CareerSequence], num_titles: int) -> RelationGraph:
    """Directed edge x -> y for each consecutive (x, y), x != y, in any sequence."""
    adjacency: dict[int, set[int]] = {}
    for seq in sequences:
        for x, y in zip(seq.title_ids, seq.title_ids[1:]):
            if x == y:
                continue
            if x >= num_titles or y >= num_titles:
                raise DataError(f"sequence {seq.person_id}: title id out of range")
            adjacency.setdefault(x, set()).add(y)
    return RelationGraph(GraphKind.JOB_JOB, adjacency, num_titles, num_titles)


def build_skill_skill(postings: Iterable[JobPosting], num_skills: int) -> RelationGraph:
    """Symmetric edge for every unordered skill pair co-occurring in a record."""
    adjacency: dict[int, set[int]] = {}
    for p in postings:
        ids = p.skill_ids
        for i in range(len(ids)):
            if ids[i] >= num_skills:
                raise DataError(f"record {p.id}: skill id out of range")
            for j in range(i + 1, len(ids)):
                a, b = ids[i], ids[j]
                adjacency.setdefault(a, set()).add(b)
                adjacency.setdefault(b, set()).add(a)
    return RelationGraph(GraphKind.SKILL_SKILL, adjacency, num_skills, num_skills)


def build_job_skill(postings: Iterable[JobPosting], num_titles: int, num_skills: int) -> RelationGraph:
    """Edge title -> skill for each (title, skill) pairing observed in a record."""
    adjacency: dict[int, set[int]] = {}
    for p in postings:
        if p.title_id >= num_titles:
            raise DataError(f"record {p.id}: title id out of range")
        for s in p.skill_ids:
            if s >= num_skills:
                raise DataError(f"record {p.id}: skill id out of range")
            adjacency.setdefault(p.title_id, set()).add(s)
    return RelationGraph(GraphKind.JOB_SKILL, adjacency, num_titles, num_skills)


def _negative_pool_exists(graph: RelationGraph, x: int) -> bool:
    blocked = len(graph.neighbors(x))
    if graph.kind is not GraphKind.JOB_SKILL:
        blocked += 1  # the source itself is never a valid negative
    return blocked < graph.right_count


def sample_triplets(
    graph: RelationGraph,
    count: int,
    seed: int | Sequence[int] | np.random.Generator,
) -> list[Triplet]:
    """Sample `count` triplets: uniform positive edge, uniform non-neighbor negative.

    Negatives are rejection-sampled over the target domain; for same-domain
    graphs the source itself is also excluded so that the three rows of a
    triplet stay distinct. After MAX_NEGATIVE_ATTEMPTS rejections the
    positive edge is redrawn. Sources whose neighbors cover the whole target
    domain are skipped with a warning.
    """
    edges = graph.edges()
    if not edges:
        raise DataError(f"{graph.kind.value} graph has no edges to sample from")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if not any(_negative_pool_exists(graph, x) for x, _ in edges):
        raise DataError(f"{graph.kind.value}: no source has a valid negative")
    same_domain = graph.kind is not GraphKind.JOB_SKILL
    warned: set[int] = set()
    triplets: list[Triplet] = []
    while len(triplets) < count:
        x, y = edges[int(rng.integers(len(edges)))]
        if not _negative_pool_exists(graph, x):
            if x not in warned:
                logger.warning(
                    "%s: source %d has no valid negatives; skipping its edges", graph.kind.value, x
                )
                warned.add(x)
            continue
        nbrs = graph.neighbors(x)
        for _ in range(MAX_NEGATIVE_ATTEMPTS):
            z = int(rng.integers(graph.right_count))
            if z == y or z in nbrs or (same_domain and z == x):
                continue
            triplets.append(Triplet(x, y, z, graph.kind))
            break
        # on rejection-cap overflow the outer loop redraws the edge
    return triplets


def write_edge_list(path, graphs: Iterable[RelationGraph]) -> None:
    """Serialize graphs as `kind<TAB>src<TAB>dst` lines (inspection format)."""
    with open(path, "w", encoding="utf-8") as fh:
        for g in graphs:
            for x, y in g.edges():
                fh.write(f"{g.kind.value}\t{x}\t{y}\n")
