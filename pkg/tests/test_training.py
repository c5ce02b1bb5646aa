import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jobspace.corpus import SynthConfig, Vocabulary, generate_synthetic
from jobspace.errors import DataError, NumericalError
from jobspace.graphs import (
    GraphKind,
    Triplet,
    build_job_job,
    build_job_skill,
    build_skill_skill,
    sample_triplets,
)
from jobspace.training import (
    EmbeddingSpace,
    TrainConfig,
    affinity,
    init_embeddings,
    joint_loss,
    ranking_accuracy,
    read_embeddings,
    read_loss_csv,
    sgd_step,
    train,
    triplet_loss,
    write_embeddings,
    write_loss_csv,
)

LN2 = math.log(2.0)


def small_space(num_titles=6, num_skills=8, k=4, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    return EmbeddingSpace(
        rng.uniform(-scale, scale, (num_titles, k)), rng.uniform(-scale, scale, (num_skills, k))
    )


def synthetic_graphs(seed=0, postings=400, tracks=4, noise=0.05):
    cfg = SynthConfig(num_postings=postings, num_tracks=tracks, noise=noise, num_sequences=120)
    data = generate_synthetic(cfg, seed=seed)
    return {
        GraphKind.JOB_JOB: build_job_job(data.sequences, len(data.titles)),
        GraphKind.SKILL_SKILL: build_skill_skill(data.postings, len(data.skills)),
        GraphKind.JOB_SKILL: build_job_skill(data.postings, len(data.titles), len(data.skills)),
    }


class TestInit:
    def test_shapes_match_vocabulary_sizes(self):
        cfg = TrainConfig(k=50, seed=1)
        space = init_embeddings(4325, 6214, cfg)
        assert space.title_vecs.shape == (4325, 50)
        assert space.skill_vecs.shape == (6214, 50)

    def test_zero_scale_gives_zero_matrices(self):
        cfg = TrainConfig(k=3, seed=1, init_scale=0.0)
        space = init_embeddings(4, 5, cfg)
        assert not space.title_vecs.any() and not space.skill_vecs.any()

    def test_deterministic(self):
        cfg = TrainConfig(k=8, seed=7)
        a = init_embeddings(10, 12, cfg)
        b = init_embeddings(10, 12, cfg)
        assert np.array_equal(a.title_vecs, b.title_vecs)
        assert np.array_equal(a.skill_vecs, b.skill_vecs)

    def test_scale_bound_and_default(self):
        cfg = TrainConfig(k=16, seed=3)
        space = init_embeddings(20, 20, cfg)
        bound = 0.1 / math.sqrt(16)
        assert np.abs(space.title_vecs).max() <= bound

    def test_empty_vocabulary_rejected(self):
        with pytest.raises(ValueError):
            init_embeddings(0, 5, TrainConfig(k=2))


class TestAffinity:
    def test_orthogonal(self):
        assert affinity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0

    def test_direct_arithmetic(self):
        assert affinity(np.array([1.0, 1.0]), np.array([1.0, 1.0])) == 2.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            affinity(np.zeros(3), np.zeros(4))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_symmetry(self, seed):
        rng = np.random.default_rng(seed)
        u, v = rng.standard_normal(5), rng.standard_normal(5)
        assert affinity(u, v) == pytest.approx(affinity(v, u), rel=1e-12)


class TestTripletLoss:
    def test_equal_affinities_give_ln2(self):
        space = small_space()
        space.title_vecs[:] = 0.0
        t = Triplet(0, 1, 2, GraphKind.JOB_JOB)
        assert triplet_loss(space, t) == pytest.approx(LN2, abs=1e-12)

    def test_saturation_limit(self):
        space = EmbeddingSpace(np.zeros((3, 2)), np.zeros((1, 2)))
        space.title_vecs[0] = [50.0, 0.0]
        space.title_vecs[1] = [50.0, 0.0]
        space.title_vecs[2] = [-50.0, 0.0]
        t = Triplet(0, 1, 2, GraphKind.JOB_JOB)
        assert 0.0 < triplet_loss(space, t) < 1e-300 or triplet_loss(space, t) == 0.0

    def test_matches_high_precision_oracle(self):
        # independent evaluation of -ln(1/(1+e^-d)) at 60 decimal digits
        mpmath.mp.dps = 60
        rng = np.random.default_rng(5)
        space = small_space(seed=5)
        for _ in range(50):
            x, y, z = rng.choice(6, size=3, replace=False)
            t = Triplet(int(x), int(y), int(z), GraphKind.JOB_JOB)
            d = affinity(space.title_vecs[x], space.title_vecs[y]) - affinity(
                space.title_vecs[x], space.title_vecs[z]
            )
            expected = -mpmath.log(1 / (1 + mpmath.e ** (-mpmath.mpf(d))))
            assert triplet_loss(space, t) == pytest.approx(float(expected), rel=1e-12)

    def test_strictly_decreasing_in_margin(self):
        space = EmbeddingSpace(np.zeros((3, 2)), np.zeros((1, 2)))
        space.title_vecs[1] = [1.0, 0.0]
        space.title_vecs[2] = [0.0, 0.0]
        losses = []
        for d in np.linspace(-5, 5, 41):
            space.title_vecs[0] = [d, 0.0]  # affinity gap equals d
            losses.append(triplet_loss(space, Triplet(0, 1, 2, GraphKind.JOB_JOB)))
        assert all(a > b for a, b in zip(losses, losses[1:]))

    def test_extreme_margins_are_finite_and_asymptotic(self):
        space = EmbeddingSpace(np.zeros((3, 1)), np.zeros((1, 1)))
        space.title_vecs[0] = [1.0]
        space.title_vecs[1] = [100.0]
        space.title_vecs[2] = [0.0]
        loss_pos = triplet_loss(space, Triplet(0, 1, 2, GraphKind.JOB_JOB))
        loss_neg = triplet_loss(space, Triplet(0, 2, 1, GraphKind.JOB_JOB))
        assert math.isfinite(loss_pos) and math.isfinite(loss_neg)
        assert abs(loss_pos - 0.0) < 1e-6
        assert abs(loss_neg - 100.0) < 1e-6

    def test_kind_selects_matrices(self):
        space = small_space()
        t = Triplet(0, 1, 2, GraphKind.JOB_SKILL)
        d = affinity(space.title_vecs[0], space.skill_vecs[1]) - affinity(
            space.title_vecs[0], space.skill_vecs[2]
        )
        assert triplet_loss(space, t) == pytest.approx(math.log1p(math.exp(-d)), rel=1e-12)

    def test_out_of_range_id(self):
        space = small_space()
        with pytest.raises(ValueError):
            triplet_loss(space, Triplet(0, 99, 2, GraphKind.JOB_JOB))


class TestJointLoss:
    def test_empty_batches_zero_lambda(self):
        space = small_space()
        entry = joint_loss(space, {k: [] for k in GraphKind}, lam=0.0)
        assert entry.total == 0.0

    def test_zero_matrices_give_n_ln2(self):
        space = EmbeddingSpace(np.zeros((4, 3)), np.zeros((5, 3)))
        batches = {
            GraphKind.JOB_JOB: [Triplet(0, 1, 2, GraphKind.JOB_JOB)] * 3,
            GraphKind.SKILL_SKILL: [Triplet(0, 1, 2, GraphKind.SKILL_SKILL)] * 2,
            GraphKind.JOB_SKILL: [Triplet(0, 1, 2, GraphKind.JOB_SKILL)],
        }
        entry = joint_loss(space, batches, lam=1.0)
        assert entry.reg == 0.0
        assert entry.total == pytest.approx(6 * LN2, rel=1e-12)

    def test_matches_brute_force_recomputation(self):
        rng = np.random.default_rng(12)
        space = small_space(seed=12)
        batches = {}
        for kind in GraphKind:
            rows = space.rows_for(kind)
            batch = []
            for _ in range(20):
                x = int(rng.integers(rows[0].shape[0]))
                y, z = rng.choice(rows[1].shape[0], size=2, replace=False)
                if kind is not GraphKind.JOB_SKILL:
                    while x in (y, z):
                        x = int(rng.integers(rows[0].shape[0]))
                batch.append(Triplet(int(x), int(y), int(z), kind))
            batches[kind] = batch
        lam = 0.3
        entry = joint_loss(space, batches, lam)
        # independent summation oracle
        expected = 0.0
        for kind, batch in batches.items():
            mx, my, mz = space.rows_for(kind)
            for t in batch:
                d = float(mx[t.x] @ my[t.y] - mx[t.x] @ mz[t.z])
                expected += -math.log(1.0 / (1.0 + math.exp(-d)))
        expected += lam * (np.sum(space.title_vecs**2) + np.sum(space.skill_vecs**2))
        assert entry.total == pytest.approx(expected, rel=1e-12)

    def test_decomposition_invariant(self):
        space = small_space(seed=3)
        batches = {
            GraphKind.JOB_JOB: [Triplet(0, 1, 2, GraphKind.JOB_JOB)],
            GraphKind.SKILL_SKILL: [Triplet(3, 4, 5, GraphKind.SKILL_SKILL)],
            GraphKind.JOB_SKILL: [Triplet(2, 0, 7, GraphKind.JOB_SKILL)],
        }
        entry = joint_loss(space, batches, lam=0.05)
        assert entry.total == pytest.approx(
            entry.o_jj + entry.o_ss + entry.o_js + entry.reg, rel=1e-9
        )


def finite_difference_gradient(space, t, lam, h=1e-6):
    """Central differences of triplet loss + L2 penalty on the touched rows."""

    def objective(sp):
        mx, my, mz = sp.rows_for(t.kind)
        penalty = lam * (
            float(mx[t.x] @ mx[t.x]) + float(my[t.y] @ my[t.y]) + float(mz[t.z] @ mz[t.z])
        )
        return triplet_loss(sp, t) + penalty

    grads = []
    for which, idx in (("x", t.x), ("y", t.y), ("z", t.z)):
        mats = {"x": 0, "y": 1, "z": 2}
        k = space.k
        grad = np.zeros(k)
        for c in range(k):
            sp_plus = space.copy()
            sp_plus.rows_for(t.kind)[mats[which]][idx, c] += h
            sp_minus = space.copy()
            sp_minus.rows_for(t.kind)[mats[which]][idx, c] -= h
            grad[c] = (objective(sp_plus) - objective(sp_minus)) / (2 * h)
        grads.append(grad)
    return np.concatenate(grads)


class TestSgdStep:
    def test_gain_at_zero_margin(self):
        # with all-zero embeddings d = 0, so the x row moves by eta * 0.5 * (y - z)
        space = EmbeddingSpace(np.zeros((3, 2)), np.zeros((1, 2)))
        space.title_vecs[1] = [1.0, 0.0]
        space.title_vecs[2] = [0.0, 1.0]
        sgd_step(space, Triplet(0, 1, 2, GraphKind.JOB_JOB), eta=1.0, lam=0.0)
        assert np.allclose(space.title_vecs[0], [0.5, -0.5])

    def test_zero_learning_rate_is_noop(self):
        space = small_space(seed=2)
        before = space.copy()
        sgd_step(space, Triplet(0, 1, 2, GraphKind.JOB_JOB), eta=0.0, lam=0.7)
        assert np.array_equal(space.title_vecs, before.title_vecs)

    def test_touches_only_three_rows(self):
        space = small_space(seed=4)
        before = space.copy()
        t = Triplet(1, 3, 5, GraphKind.JOB_SKILL)
        sgd_step(space, t, eta=0.1, lam=0.01)
        changed_titles = [
            i for i in range(6) if not np.array_equal(space.title_vecs[i], before.title_vecs[i])
        ]
        changed_skills = [
            i for i in range(8) if not np.array_equal(space.skill_vecs[i], before.skill_vecs[i])
        ]
        assert changed_titles == [1]
        assert sorted(changed_skills) == [3, 5]

    @pytest.mark.parametrize("lam", [0.0, 0.01, 0.1])
    @pytest.mark.parametrize("kind", list(GraphKind))
    def test_matches_finite_differences(self, lam, kind):
        rng = np.random.default_rng(hash((lam, kind.value)) % 2**32)
        space = small_space(seed=int(rng.integers(1000)), k=5)
        pool = space.rows_for(kind)[1].shape[0]
        y, z = (int(v) for v in rng.choice(pool, size=2, replace=False))
        x = int(rng.integers(space.rows_for(kind)[0].shape[0]))
        while kind is not GraphKind.JOB_SKILL and x in (y, z):
            x = int(rng.integers(space.rows_for(kind)[0].shape[0]))
        t = Triplet(x, y, z, kind)
        fd = finite_difference_gradient(space, t, lam)
        eta = 0.05
        before = space.copy()
        sgd_step(space, t, eta, lam)
        mx_a, my_a, mz_a = space.rows_for(kind)
        mx_b, my_b, mz_b = before.rows_for(kind)
        delta = np.concatenate(
            [mx_a[t.x] - mx_b[t.x], my_a[t.y] - my_b[t.y], mz_a[t.z] - mz_b[t.z]]
        )
        analytic = -delta / eta
        assert np.linalg.norm(analytic - fd) / max(np.linalg.norm(fd), 1e-12) < 1e-5

    def test_same_domain_rows_must_be_distinct(self):
        space = small_space()
        with pytest.raises(ValueError):
            sgd_step(space, Triplet(1, 1, 2, GraphKind.JOB_JOB), eta=0.1, lam=0.0)


class TestTrain:
    def test_zero_epochs_returns_initialization(self):
        graphs = synthetic_graphs(seed=1)
        cfg = TrainConfig(k=6, epochs=0, seed=5, triplets_per_epoch=50)
        space, report = train(graphs, cfg)
        init = init_embeddings(
            graphs[GraphKind.JOB_JOB].left_count, graphs[GraphKind.SKILL_SKILL].left_count, cfg
        )
        assert np.array_equal(space.title_vecs, init.title_vecs)
        assert np.array_equal(space.skill_vecs, init.skill_vecs)
        assert len(report.entries) == 1

    def test_deterministic_end_to_end(self):
        graphs = synthetic_graphs(seed=2)
        cfg = TrainConfig(k=5, epochs=3, seed=11, triplets_per_epoch=80, lam=1e-4)
        s1, r1 = train(graphs, cfg)
        s2, r2 = train(graphs, cfg)
        assert np.array_equal(s1.title_vecs, s2.title_vecs)
        assert np.array_equal(s1.skill_vecs, s2.skill_vecs)
        assert r1.entries == r2.entries

    def test_heldout_loss_decreases(self):
        graphs = synthetic_graphs(seed=3)
        cfg = TrainConfig(k=6, epochs=15, seed=1, triplets_per_epoch=300, lam=1e-4)
        _, report = train(graphs, cfg)
        assert report.final_total() < report.initial_total()
        assert all(math.isfinite(e.total) for e in report.entries)

    def test_missing_graph_rejected(self):
        graphs = synthetic_graphs(seed=4)
        del graphs[GraphKind.JOB_SKILL]
        with pytest.raises(DataError):
            train(graphs, TrainConfig(k=4, epochs=1))

    def test_divergence_aborts_with_numerical_error(self):
        graphs = synthetic_graphs(seed=5)
        cfg = TrainConfig(k=4, epochs=10, seed=2, triplets_per_epoch=200, learning_rate=1e9, lam=0.0)
        with pytest.raises(NumericalError):
            train(graphs, cfg)

    def test_all_entries_decompose(self):
        graphs = synthetic_graphs(seed=6)
        cfg = TrainConfig(k=4, epochs=4, seed=3, triplets_per_epoch=60, lam=0.01)
        _, report = train(graphs, cfg)
        for e in report.entries:
            assert e.total == pytest.approx(e.o_jj + e.o_ss + e.o_js + e.reg, rel=1e-9)


class TestRankingAccuracy:
    def test_all_zero_embeddings_give_half(self):
        space = EmbeddingSpace(np.zeros((4, 3)), np.zeros((4, 3)))
        triplets = [Triplet(0, 1, 2, GraphKind.JOB_JOB) for _ in range(10)]
        assert ranking_accuracy(space, triplets) == 0.5

    def test_perfectly_ordered_toy_embedding(self):
        space = EmbeddingSpace(np.array([[1.0], [1.0], [-1.0]]), np.zeros((1, 1)))
        triplets = [Triplet(0, 1, 2, GraphKind.JOB_JOB)]
        assert ranking_accuracy(space, triplets) == 1.0

    def test_random_embeddings_near_half(self):
        rng = np.random.default_rng(0)
        space = EmbeddingSpace(rng.standard_normal((50, 8)), rng.standard_normal((50, 8)))
        triplets = []
        n = 2000
        while len(triplets) < n:
            x, y, z = rng.choice(50, size=3, replace=False)
            triplets.append(Triplet(int(x), int(y), int(z), GraphKind.JOB_JOB))
        acc = ranking_accuracy(space, triplets)
        sigma = 0.5 / math.sqrt(n)
        assert abs(acc - 0.5) <= 3 * sigma + 0.02

    def test_empty_heldout_rejected(self):
        with pytest.raises(ValueError):
            ranking_accuracy(small_space(), [])


class TestEmbeddingFiles:
    def test_roundtrip_with_multiword_tokens(self, tmp_path):
        vocab = Vocabulary()
        vocab.intern("senior web developer")
        vocab.intern("nurse")
        matrix = np.array([[0.123456789, -1.5], [2.25, 3.5]])
        path = tmp_path / "emb.vec"
        write_embeddings(path, vocab, matrix)
        loaded_vocab, loaded = read_embeddings(path)
        assert loaded_vocab.entries == ["senior web developer", "nurse"]
        assert np.allclose(loaded, matrix, rtol=1e-8)
        assert path.read_text().splitlines()[0] == "2 2"

    def test_serialization_is_stable_after_first_cycle(self, tmp_path):
        rng = np.random.default_rng(8)
        vocab = Vocabulary()
        for i in range(10):
            vocab.intern(f"token {i}")
        matrix = rng.standard_normal((10, 6))
        p1, p2 = tmp_path / "a.vec", tmp_path / "b.vec"
        write_embeddings(p1, vocab, matrix)
        v1, m1 = read_embeddings(p1)
        write_embeddings(p2, v1, m1)
        assert p1.read_bytes() == p2.read_bytes()

    def test_loss_csv_roundtrip(self, tmp_path):
        graphs = synthetic_graphs(seed=7)
        cfg = TrainConfig(k=4, epochs=2, seed=4, triplets_per_epoch=40)
        _, report = train(graphs, cfg)
        path = tmp_path / "loss.csv"
        write_loss_csv(path, report)
        loaded = read_loss_csv(path)
        assert len(loaded.entries) == len(report.entries)
        for a, b in zip(loaded.entries, report.entries):
            assert a.epoch == b.epoch
            assert a.total == pytest.approx(b.total, rel=1e-8)
        header = path.read_text().splitlines()[0]
        assert header == "epoch,o_jj,o_ss,o_js,reg,total,heldout_accuracy"
