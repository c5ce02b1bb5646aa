"""Nearest-neighbor indexes: exact flat scan and compressed IVF-PQ.

Both index kinds rank by squared L2 distance with ties broken by ascending
record id, and both persist to a single binary file with bit-exact
round-trips. The IVF-PQ index partitions vectors into coarse k-means cells
and stores one byte per sub-block codeword; queries probe the nearest cells
and score candidates through per-block distance lookup tables.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError

PQ_CODEBOOK_SIZE = 256


# ---------------------------------------------------------------------------
# k-means (Lloyd iterations with distance-weighted seeding)
# ---------------------------------------------------------------------------

def _pairwise_sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # expansion form; clamp guards tiny negative rounding
    d = (
        np.sum(points**2, axis=1)[:, None]
        - 2.0 * points @ centroids.T
        + np.sum(centroids**2, axis=1)[None, :]
    )
    np.maximum(d, 0.0, out=d)
    return d


def _seed_centroids(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = np.zeros(k, dtype=np.int64)
    chosen[0] = int(rng.integers(n))
    closest = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    taken = {int(chosen[0])}
    for i in range(1, k):
        total = float(closest.sum())
        if total <= 0.0:
            # all remaining points coincide with a centroid; take the first unused
            idx = next(j for j in range(n) if j not in taken)
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(closest), r, side="right"))
            idx = min(idx, n - 1)
        chosen[i] = idx
        taken.add(idx)
        np.minimum(closest, np.sum((points - points[idx]) ** 2, axis=1), out=closest)
    return points[chosen].copy()


def kmeans(
    points: np.ndarray,
    k: int,
    iters: int = 25,
    seed: int | Sequence[int] | np.random.Generator = 0,
) -> np.ndarray:
    """Cluster `points` into k centroids; deterministic for a fixed seed.

    Distance-weighted seeding followed by at most `iters` Lloyd iterations;
    clusters that empty out are re-seeded from the point farthest from its
    assigned centroid.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must be a 2-d array")
    n = points.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise DataError(f"need at least {k} points to build {k} clusters, got {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    centroids = _seed_centroids(points, k, rng)
    prev_assign = None
    for _ in range(iters):
        dists = _pairwise_sq_dists(points, centroids)
        assign = np.argmin(dists, axis=1)
        if prev_assign is not None and np.array_equal(assign, prev_assign):
            break
        point_cost = dists[np.arange(n), assign]
        for c in range(k):
            mask = assign == c
            if mask.any():
                centroids[c] = points[mask].mean(axis=0)
            else:
                far = int(np.argmax(point_cost))
                centroids[c] = points[far]
                point_cost[far] = -1.0  # keep later empties from reusing it
        prev_assign = assign
    return centroids


def kmeans_cost(points: np.ndarray, centroids: np.ndarray) -> float:
    """Sum of squared distances from each point to its nearest centroid."""
    points = np.asarray(points, dtype=np.float64)
    dists = _pairwise_sq_dists(points, np.asarray(centroids, dtype=np.float64))
    return float(dists.min(axis=1).sum())


# ---------------------------------------------------------------------------
# Flat (exact) index
# ---------------------------------------------------------------------------

def _check_ids(ids: Sequence[str]) -> list[str]:
    ids = list(ids)
    if len(set(ids)) != len(ids):
        raise DataError("record ids must be unique")
    return ids


def _top_k(ids: np.ndarray, dists: np.ndarray, k: int) -> list[tuple[str, float]]:
    order = np.lexsort((ids, dists))[: max(k, 0)]
    return [(str(ids[i]), float(dists[i])) for i in order]


class FlatIndex:
    """Exhaustive squared-L2 index storing vectors verbatim (float32 rows)."""

    kind = "flat"

    def __init__(self, ids: Sequence[str], matrix: np.ndarray):
        self.ids = _check_ids(ids)
        matrix = np.asarray(matrix, dtype=np.float32)
        if matrix.ndim != 2 or matrix.shape[0] != len(self.ids):
            raise ValueError("matrix must be 2-d with one row per id")
        self.matrix = matrix
        self._id_array = np.asarray(self.ids, dtype=str)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def get_vector(self, rec_id: str) -> np.ndarray:
        try:
            i = self.ids.index(rec_id)
        except ValueError as exc:
            raise KeyError(rec_id) from exc
        return self.matrix[i]

    def search(self, query: np.ndarray, k: int) -> list[tuple[str, float]]:
        """Exact top-k by squared L2, ties broken by ascending id."""
        query = np.asarray(query, dtype=np.float64)
        if query.shape != (self.dim,):
            raise ValueError(f"query dimension {query.shape} != index dimension {self.dim}")
        if len(self.ids) == 0:
            return []
        diffs = self.matrix.astype(np.float64) - query
        dists = np.einsum("ij,ij->i", diffs, diffs)
        return _top_k(self._id_array, dists, k)


# ---------------------------------------------------------------------------
# IVF-PQ index
# ---------------------------------------------------------------------------

@dataclass
class IvfPqParams:
    nlist: int = 256
    m: int = 16
    kmeans_iters: int = 25
    nprobe_default: int = 16

    def validate(self) -> None:
        if self.nlist < 1 or self.m < 1 or self.kmeans_iters < 1 or self.nprobe_default < 1:
            raise ValueError("IVF-PQ parameters must be positive")


def pad_dim(d: int, m: int) -> int:
    return ((d + m - 1) // m) * m


def _pad(matrix: np.ndarray, d_pad: int) -> np.ndarray:
    if matrix.shape[1] == d_pad:
        return matrix
    out = np.zeros((matrix.shape[0], d_pad), dtype=matrix.dtype)
    out[:, : matrix.shape[1]] = matrix
    return out


def train_ivfpq(
    sample: np.ndarray,
    params: IvfPqParams,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Learn coarse centroids and per-block codebooks from a training sample.

    Codebooks quantize raw (zero-padded) vectors, not residuals. Returns
    (coarse nlist x d_pad, codebooks m x 256 x d_pad/m), both float32.
    """
    params.validate()
    sample = np.asarray(sample, dtype=np.float64)
    if sample.ndim != 2:
        raise ValueError("sample must be a 2-d array")
    need = max(params.nlist, PQ_CODEBOOK_SIZE)
    if sample.shape[0] < need:
        raise DataError(
            f"IVF-PQ training needs at least {need} vectors (nlist={params.nlist}), got {sample.shape[0]}"
        )
    d_pad = pad_dim(sample.shape[1], params.m)
    padded = _pad(sample, d_pad)
    dsub = d_pad // params.m
    coarse = kmeans(padded, params.nlist, params.kmeans_iters, np.random.default_rng([seed, 1]))
    codebooks = np.zeros((params.m, PQ_CODEBOOK_SIZE, dsub), dtype=np.float64)
    for j in range(params.m):
        block = padded[:, j * dsub : (j + 1) * dsub]
        codebooks[j] = kmeans(
            block, PQ_CODEBOOK_SIZE, params.kmeans_iters, np.random.default_rng([seed, 2, j])
        )
    return coarse.astype(np.float32), codebooks.astype(np.float32)


def pq_encode(matrix: np.ndarray, codebooks: np.ndarray) -> np.ndarray:
    """Map each padded row to its per-block nearest codeword ids (uint8)."""
    m, _, dsub = codebooks.shape
    n = matrix.shape[0]
    codes = np.zeros((n, m), dtype=np.uint8)
    books = codebooks.astype(np.float64)
    for j in range(m):
        block = matrix[:, j * dsub : (j + 1) * dsub].astype(np.float64)
        codes[:, j] = np.argmin(_pairwise_sq_dists(block, books[j]), axis=1).astype(np.uint8)
    return codes


def pq_decode(codes: np.ndarray, codebooks: np.ndarray) -> np.ndarray:
    """Reconstruct padded vectors from codes."""
    m, _, dsub = codebooks.shape
    n = codes.shape[0]
    out = np.zeros((n, m * dsub), dtype=np.float64)
    books = codebooks.astype(np.float64)
    for j in range(m):
        out[:, j * dsub : (j + 1) * dsub] = books[j][codes[:, j]]
    return out


class IvfPqIndex:
    """Inverted-file index over product-quantized vectors.

    Every vector lives in exactly one inverted list (its nearest coarse
    centroid) as an (id, m-byte code) pair. Search scores candidates by
    asymmetric distance: per-block squared distances from the query to each
    codeword are tabulated once, then summed per candidate via code lookup.
    """

    kind = "ivfpq"

    def __init__(
        self,
        params: IvfPqParams,
        dim: int,
        coarse: np.ndarray,
        codebooks: np.ndarray,
        list_ids: list[list[str]],
        list_codes: list[np.ndarray],
    ):
        params.validate()
        self.params = params
        self.dim = dim
        self.d_pad = pad_dim(dim, params.m)
        self.coarse = np.asarray(coarse, dtype=np.float32)
        self.codebooks = np.asarray(codebooks, dtype=np.float32)
        self.list_ids = list_ids
        self.list_codes = list_codes
        if self.coarse.shape != (params.nlist, self.d_pad):
            raise ValueError("coarse centroid shape mismatch")
        if self.codebooks.shape != (params.m, PQ_CODEBOOK_SIZE, self.d_pad // params.m):
            raise ValueError("codebook shape mismatch")
        if len(list_ids) != params.nlist or len(list_codes) != params.nlist:
            raise ValueError("inverted list count mismatch")
        self._id_arrays = [np.asarray(ids, dtype=str) for ids in list_ids]

    @property
    def ids(self) -> list[str]:
        return [rec_id for ids in self.list_ids for rec_id in ids]

    def __len__(self) -> int:
        return sum(len(ids) for ids in self.list_ids)

    @classmethod
    def build(
        cls,
        ids: Sequence[str],
        matrix: np.ndarray,
        params: IvfPqParams,
        seed: int = 0,
    ) -> "IvfPqIndex":
        """Train on the given vectors and assign all of them to inverted lists."""
        ids = _check_ids(ids)
        matrix = np.asarray(matrix, dtype=np.float32)
        if matrix.ndim != 2 or matrix.shape[0] != len(ids):
            raise ValueError("matrix must be 2-d with one row per id")
        coarse, codebooks = train_ivfpq(matrix, params, seed=seed)
        d_pad = pad_dim(matrix.shape[1], params.m)
        padded = _pad(matrix, d_pad)
        assign = np.argmin(
            _pairwise_sq_dists(padded.astype(np.float64), coarse.astype(np.float64)), axis=1
        )
        codes = pq_encode(padded, codebooks)
        list_ids: list[list[str]] = [[] for _ in range(params.nlist)]
        rows: list[list[int]] = [[] for _ in range(params.nlist)]
        for i, c in enumerate(assign):
            list_ids[c].append(ids[i])
            rows[c].append(i)
        list_codes = [
            codes[np.asarray(r, dtype=np.int64)] if r else np.zeros((0, params.m), dtype=np.uint8)
            for r in rows
        ]
        return cls(params, matrix.shape[1], coarse, codebooks, list_ids, list_codes)

    def search(self, query: np.ndarray, k: int, nprobe: int | None = None) -> list[tuple[str, float]]:
        """Approximate top-k over the nprobe nearest coarse cells."""
        nprobe = self.params.nprobe_default if nprobe is None else nprobe
        if not 1 <= nprobe <= self.params.nlist:
            raise ValueError(f"nprobe must be in [1, {self.params.nlist}]")
        query = np.asarray(query, dtype=np.float64)
        if query.shape != (self.dim,):
            raise ValueError(f"query dimension {query.shape} != index dimension {self.dim}")
        q = np.zeros(self.d_pad, dtype=np.float64)
        q[: self.dim] = query
        coarse_d = np.einsum(
            "ij,ij->i", self.coarse.astype(np.float64) - q, self.coarse.astype(np.float64) - q
        )
        probe = np.lexsort((np.arange(self.params.nlist), coarse_d))[:nprobe]

        m = self.params.m
        dsub = self.d_pad // m
        books = self.codebooks.astype(np.float64)
        table = np.zeros((m, PQ_CODEBOOK_SIZE), dtype=np.float64)
        for j in range(m):
            diff = books[j] - q[j * dsub : (j + 1) * dsub]
            table[j] = np.einsum("ij,ij->i", diff, diff)

        cand_ids: list[np.ndarray] = []
        cand_dists: list[np.ndarray] = []
        for c in probe:
            codes = self.list_codes[c]
            if codes.shape[0] == 0:
                continue
            cand_ids.append(self._id_arrays[c])
            cand_dists.append(table[np.arange(m)[None, :], codes].sum(axis=1))
        if not cand_ids:
            return []
        all_ids = np.concatenate(cand_ids)
        all_dists = np.concatenate(cand_dists)
        return _top_k(all_ids, all_dists, k)


# ---------------------------------------------------------------------------
# Persistence: one binary file per index, bit-exact round-trip
# ---------------------------------------------------------------------------

_IDX_MAGIC = b"ANNI"
_IDX_VERSION = 1
_KIND_FLAT = 0
_KIND_IVFPQ = 1


def _write_ids(fh, ids: Sequence[str]) -> None:
    for rec_id in ids:
        raw = rec_id.encode("utf-8")
        fh.write(struct.pack("<H", len(raw)))
        fh.write(raw)


def _read_ids(fh, count: int) -> list[str]:
    out = []
    for _ in range(count):
        (n,) = struct.unpack("<H", fh.read(2))
        out.append(fh.read(n).decode("utf-8"))
    return out


def save_index(path, index: FlatIndex | IvfPqIndex) -> None:
    with open(path, "wb") as fh:
        if isinstance(index, FlatIndex):
            fh.write(struct.pack("<4sHBIQ", _IDX_MAGIC, _IDX_VERSION, _KIND_FLAT, index.dim, len(index)))
            _write_ids(fh, index.ids)
            fh.write(index.matrix.astype("<f4").tobytes())
        elif isinstance(index, IvfPqIndex):
            p = index.params
            fh.write(struct.pack("<4sHBIQ", _IDX_MAGIC, _IDX_VERSION, _KIND_IVFPQ, index.dim, len(index)))
            fh.write(struct.pack("<IIII", p.nlist, p.m, p.kmeans_iters, p.nprobe_default))
            fh.write(index.coarse.astype("<f4").tobytes())
            fh.write(index.codebooks.astype("<f4").tobytes())
            for c in range(p.nlist):
                ids = index.list_ids[c]
                fh.write(struct.pack("<I", len(ids)))
                _write_ids(fh, ids)
                fh.write(index.list_codes[c].astype(np.uint8).tobytes())
        else:
            raise ValueError(f"unknown index type {type(index)!r}")


def load_index(path) -> FlatIndex | IvfPqIndex:
    with open(path, "rb") as fh:
        header = fh.read(struct.calcsize("<4sHBIQ"))
        magic, version, kind, dim, count = struct.unpack("<4sHBIQ", header)
        if magic != _IDX_MAGIC:
            raise DataError(f"{path}: not an index file")
        if version != _IDX_VERSION:
            raise DataError(f"{path}: unsupported index version {version}")
        if kind == _KIND_FLAT:
            ids = _read_ids(fh, count)
            matrix = np.frombuffer(fh.read(count * dim * 4), dtype="<f4").reshape(count, dim)
            return FlatIndex(ids, matrix.copy())
        if kind == _KIND_IVFPQ:
            nlist, m, kmeans_iters, nprobe_default = struct.unpack("<IIII", fh.read(16))
            params = IvfPqParams(nlist=nlist, m=m, kmeans_iters=kmeans_iters, nprobe_default=nprobe_default)
            d_pad = pad_dim(dim, m)
            dsub = d_pad // m
            coarse = np.frombuffer(fh.read(nlist * d_pad * 4), dtype="<f4").reshape(nlist, d_pad)
            codebooks = np.frombuffer(fh.read(m * PQ_CODEBOOK_SIZE * dsub * 4), dtype="<f4").reshape(
                m, PQ_CODEBOOK_SIZE, dsub
            )
            list_ids: list[list[str]] = []
            list_codes: list[np.ndarray] = []
            for _ in range(nlist):
                (n,) = struct.unpack("<I", fh.read(4))
                list_ids.append(_read_ids(fh, n))
                raw = fh.read(n * m)
                list_codes.append(np.frombuffer(raw, dtype=np.uint8).reshape(n, m).copy())
            return IvfPqIndex(params, dim, coarse.copy(), codebooks.copy(), list_ids, list_codes)
        raise DataError(f"{path}: unknown index kind {kind}")
