"""Joint title/skill embedding training with pairwise ranking SGD.

Titles and skills share one k-dimensional space. Each sampled triplet
(x, y, z) contributes -ln sigmoid(<x,y> - <x,z>) to the objective; the
three relation graphs contribute their own triplet sums, plus an L2 term
on both matrices. Updates touch only the three rows of a triplet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import Vocabulary
from .errors import DataError, NumericalError
from .graphs import KIND_ORDER, GraphKind, RelationGraph, Triplet, sample_triplets

# rng stream tags so init, held-out, and per-epoch sampling never collide
_INIT_STREAM = 101
_HELDOUT_STREAM = 202
_EPOCH_STREAM = 303


@dataclass
class TrainConfig:
    k: int = 50
    lam: float = 0.01
    learning_rate: float = 0.05
    epochs: int = 100
    triplets_per_epoch: int | None = None
    seed: int = 0
    init_scale: float | None = None
    heldout_fraction: float = 0.1

    def validate(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.triplets_per_epoch is not None and self.triplets_per_epoch < 1:
            raise ValueError("triplets_per_epoch must be >= 1")
        if self.init_scale is not None and self.init_scale < 0:
            raise ValueError("init_scale must be >= 0")
        if not 0.0 < self.heldout_fraction <= 1.0:
            raise ValueError("heldout_fraction must be in (0, 1]")

    def resolved_init_scale(self) -> float:
        if self.init_scale is not None:
            return self.init_scale
        return 0.1 / math.sqrt(self.k)


@dataclass
class EmbeddingSpace:
    """Title and skill vectors sharing one latent dimension."""

    title_vecs: np.ndarray
    skill_vecs: np.ndarray

    @property
    def k(self) -> int:
        return self.title_vecs.shape[1]

    def rows_for(self, kind: GraphKind) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Matrices supplying the (x, y, z) rows of a triplet of this kind."""
        if kind is GraphKind.JOB_JOB:
            return self.title_vecs, self.title_vecs, self.title_vecs
        if kind is GraphKind.SKILL_SKILL:
            return self.skill_vecs, self.skill_vecs, self.skill_vecs
        return self.title_vecs, self.skill_vecs, self.skill_vecs

    def copy(self) -> "EmbeddingSpace":
        return EmbeddingSpace(self.title_vecs.copy(), self.skill_vecs.copy())


@dataclass
class LossEntry:
    epoch: int
    o_jj: float
    o_ss: float
    o_js: float
    reg: float
    total: float
    heldout_accuracy: float


@dataclass
class LossReport:
    entries: list[LossEntry] = field(default_factory=list)

    def initial_total(self) -> float:
        return self.entries[0].total

    def final_total(self) -> float:
        return self.entries[-1].total


def init_embeddings(num_titles: int, num_skills: int, cfg: TrainConfig) -> EmbeddingSpace:
    """I.i.d. uniform initialization in [-init_scale, +init_scale]."""
    cfg.validate()
    if num_titles < 1 or num_skills < 1:
        raise ValueError("vocabulary sizes must be >= 1")
    rng = np.random.default_rng([cfg.seed, _INIT_STREAM])
    scale = cfg.resolved_init_scale()
    title_vecs = rng.uniform(-scale, scale, size=(num_titles, cfg.k))
    skill_vecs = rng.uniform(-scale, scale, size=(num_skills, cfg.k))
    return EmbeddingSpace(title_vecs, skill_vecs)


def affinity(u: np.ndarray, v: np.ndarray) -> float:
    """Dot-product relatedness score of two embedding vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    return float(np.dot(u, v))


def stable_softplus(v: float) -> float:
    """ln(1 + e^v) without overflow."""
    return max(v, 0.0) + math.log1p(math.exp(-abs(v)))


def stable_sigmoid(v: float) -> float:
    if v >= 0:
        return 1.0 / (1.0 + math.exp(-v))
    e = math.exp(v)
    return e / (1.0 + e)


def _triplet_rows(space: EmbeddingSpace, t: Triplet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mx, my, mz = space.rows_for(t.kind)
    for idx, mat, label in ((t.x, mx, "x"), (t.y, my, "y"), (t.z, mz, "z")):
        if not 0 <= idx < mat.shape[0]:
            raise ValueError(f"triplet {label} id {idx} out of range for {t.kind.value}")
    return mx[t.x], my[t.y], mz[t.z]


def triplet_loss(space: EmbeddingSpace, t: Triplet) -> float:
    """-ln sigmoid(A_xy - A_xz), computed in the overflow-safe softplus form."""
    vx, vy, vz = _triplet_rows(space, t)
    d = float(np.dot(vx, vy) - np.dot(vx, vz))
    return stable_softplus(-d)


def joint_loss(
    space: EmbeddingSpace,
    batches: Mapping[GraphKind, Sequence[Triplet]],
    lam: float,
    epoch: int = -1,
    heldout_accuracy: float = float("nan"),
) -> LossEntry:
    """Triplet-loss totals per graph plus the L2 term on both matrices."""
    sums = {kind: 0.0 for kind in KIND_ORDER}
    for kind, batch in batches.items():
        for t in batch:
            if t.kind is not kind:
                raise ValueError(f"triplet of kind {t.kind.value} in {kind.value} batch")
            sums[kind] += triplet_loss(space, t)
    reg = lam * (float(np.sum(space.title_vecs**2)) + float(np.sum(space.skill_vecs**2)))
    total = sums[GraphKind.JOB_JOB] + sums[GraphKind.SKILL_SKILL] + sums[GraphKind.JOB_SKILL] + reg
    return LossEntry(
        epoch=epoch,
        o_jj=sums[GraphKind.JOB_JOB],
        o_ss=sums[GraphKind.SKILL_SKILL],
        o_js=sums[GraphKind.JOB_SKILL],
        reg=reg,
        total=total,
        heldout_accuracy=heldout_accuracy,
    )


def sgd_step(space: EmbeddingSpace, t: Triplet, eta: float, lam: float) -> None:
    """One stochastic update on the three rows touched by a triplet.

    With d = A_xy - A_xz and g = 1 - sigmoid(d), the rows move along the
    negative gradient of the triplet loss plus the L2 penalty on the touched
    rows. All right-hand sides read pre-update values.
    """
    mx, my, mz = space.rows_for(t.kind)
    if t.kind is not GraphKind.JOB_SKILL and len({t.x, t.y, t.z}) != 3:
        raise ValueError(f"same-domain triplet rows must be distinct, got {t}")
    if t.y == t.z and t.kind is GraphKind.JOB_SKILL:
        raise ValueError("positive and negative rows must differ")
    vx = mx[t.x]
    vy = my[t.y]
    vz = mz[t.z]
    d = float(np.dot(vx, vy) - np.dot(vx, vz))
    if not math.isfinite(d):
        raise NumericalError(
            "non-finite affinity during SGD; lower the learning rate or raise lam"
        )
    g = stable_sigmoid(-d)
    shrink = 2.0 * lam
    new_x = vx + eta * (g * (vy - vz) - shrink * vx)
    new_y = vy + eta * (g * vx - shrink * vy)
    new_z = vz + eta * (-g * vx - shrink * vz)
    mx[t.x] = new_x
    my[t.y] = new_y
    mz[t.z] = new_z


def ranking_accuracy(space: EmbeddingSpace, heldout: Sequence[Triplet]) -> float:
    """Fraction of triplets ranked correctly (A_xy > A_xz); ties count half."""
    if not heldout:
        raise ValueError("held-out triplet set is empty")
    score = 0.0
    for t in heldout:
        vx, vy, vz = _triplet_rows(space, t)
        d = float(np.dot(vx, vy) - np.dot(vx, vz))
        if d > 0:
            score += 1.0
        elif d == 0:
            score += 0.5
    return score / len(heldout)


def train(
    graphs: Mapping[GraphKind, RelationGraph],
    cfg: TrainConfig,
) -> tuple[EmbeddingSpace, LossReport]:
    """Run epochs of interleaved triplet SGD over the three graphs.

    Each epoch draws a fresh triplet sample per graph (size: configured
    count, defaulting to the graph's edge count) and applies the updates
    round-robin across graph kinds. Loss entries are evaluated on a fixed
    held-out triplet sample drawn once up front; entry 0 is the pre-training
    state. Fully deterministic for fixed (graphs, cfg).
    """
    cfg.validate()
    for kind in KIND_ORDER:
        if kind not in graphs:
            raise DataError(f"missing {kind.value} graph")
        if graphs[kind].num_edges == 0:
            raise DataError(f"{kind.value} graph has no edges")
    num_titles = graphs[GraphKind.JOB_JOB].left_count
    num_skills = graphs[GraphKind.SKILL_SKILL].left_count
    if graphs[GraphKind.JOB_SKILL].left_count != num_titles:
        raise DataError("job_skill and job_job graphs disagree on title count")
    if graphs[GraphKind.JOB_SKILL].right_count != num_skills:
        raise DataError("job_skill and skill_skill graphs disagree on skill count")

    per_epoch = {
        kind: (cfg.triplets_per_epoch or graphs[kind].num_edges) for kind in KIND_ORDER
    }
    heldout: dict[GraphKind, list[Triplet]] = {}
    for i, kind in enumerate(KIND_ORDER):
        n_held = max(1, round(cfg.heldout_fraction * per_epoch[kind]))
        heldout[kind] = sample_triplets(
            graphs[kind], n_held, np.random.default_rng([cfg.seed, _HELDOUT_STREAM, i])
        )
    heldout_all = [t for kind in KIND_ORDER for t in heldout[kind]]

    space = init_embeddings(num_titles, num_skills, cfg)
    report = LossReport()
    report.entries.append(
        joint_loss(space, heldout, cfg.lam, epoch=0, heldout_accuracy=ranking_accuracy(space, heldout_all))
    )

    for epoch in range(1, cfg.epochs + 1):
        batches = {
            kind: sample_triplets(
                graphs[kind],
                per_epoch[kind],
                np.random.default_rng([cfg.seed, _EPOCH_STREAM, i, epoch]),
            )
            for i, kind in enumerate(KIND_ORDER)
        }
        longest = max(len(b) for b in batches.values())
        for i in range(longest):
            for kind in KIND_ORDER:
                batch = batches[kind]
                if i < len(batch):
                    sgd_step(space, batch[i], cfg.learning_rate, cfg.lam)
        if not (np.isfinite(space.title_vecs).all() and np.isfinite(space.skill_vecs).all()):
            raise NumericalError(
                f"embeddings diverged at epoch {epoch}; lower the learning rate"
            )
        report.entries.append(
            joint_loss(
                space,
                heldout,
                cfg.lam,
                epoch=epoch,
                heldout_accuracy=ranking_accuracy(space, heldout_all),
            )
        )
    return space, report


# ---------------------------------------------------------------------------
# File formats: embedding text files and the loss-trace CSV
# ---------------------------------------------------------------------------

def write_embeddings(path, vocab: Vocabulary, matrix: np.ndarray) -> None:
    """Text format: first line `count dim`, then `token v1 ... vk` per line."""
    count, dim = matrix.shape
    if count != len(vocab):
        raise ValueError("matrix row count does not match vocabulary size")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{count} {dim}\n")
        for i in range(count):
            vals = " ".join(f"{v:.9g}" for v in matrix[i])
            fh.write(f"{vocab.token(i)} {vals}\n")


def read_embeddings(path) -> tuple[Vocabulary, np.ndarray]:
    """Parse the text format; tokens may contain spaces (values fill the tail)."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise DataError(f"{path}: bad embedding header")
        count, dim = int(header[0]), int(header[1])
        vocab = Vocabulary()
        matrix = np.zeros((count, dim), dtype=np.float64)
        for i in range(count):
            line = fh.readline()
            if not line:
                raise DataError(f"{path}: truncated at row {i}")
            parts = line.rstrip("\n").split(" ")
            if len(parts) < dim + 1:
                raise DataError(f"{path}: row {i} has too few fields")
            token = " ".join(parts[:-dim])
            if vocab.intern(token) != i:
                raise DataError(f"{path}: duplicate token {token!r}")
            matrix[i] = [float(v) for v in parts[-dim:]]
    return vocab, matrix


LOSS_CSV_HEADER = "epoch,o_jj,o_ss,o_js,reg,total,heldout_accuracy"


def write_loss_csv(path, report: LossReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(LOSS_CSV_HEADER + "\n")
        for e in report.entries:
            fh.write(
                f"{e.epoch},{e.o_jj:.9g},{e.o_ss:.9g},{e.o_js:.9g},"
                f"{e.reg:.9g},{e.total:.9g},{e.heldout_accuracy:.9g}\n"
            )


def read_loss_csv(path) -> LossReport:
    report = LossReport()
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != LOSS_CSV_HEADER:
            raise DataError(f"{path}: unexpected loss CSV header")
        for line in fh:
            if not line.strip():
                continue
            epoch, o_jj, o_ss, o_js, reg, total, acc = line.strip().split(",")
            report.entries.append(
                LossEntry(int(epoch), float(o_jj), float(o_ss), float(o_js), float(reg), float(total), float(acc))
            )
    return report
