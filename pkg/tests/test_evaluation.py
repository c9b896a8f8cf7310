import numpy as np
import pytest

from recogsheet import datasets as D
from recogsheet import evaluation as E
from recogsheet import model as M
from recogsheet.errors import InvalidArgument


def two_class_set(n_per_class=4):
    feats = np.vstack([np.tile([1.0, 0.0], (n_per_class, 1)), np.tile([0.0, 1.0], (n_per_class, 1))])
    ids = np.repeat([0, 1], n_per_class)
    return D.FeatureDataset(
        name="two", class_names=["a", "b"], categories=["c", "c"], features=feats.astype(np.float32),
        class_id=ids, object_name=np.array(["a", "b"])[ids], day=np.ones(ids.size, int),
        split=["test"] * ids.size, variant=["v"] * ids.size, seq=np.tile(np.arange(n_per_class), 2),
    )


def drift_spec(seed, drift=0.2, days=4, T=28, n_f=220, dim=256, categories=7):
    return D.SynthSpec(num_classes=T, num_categories=categories, dim=dim, frames_per_session=n_f, num_days=days,
                       day_drift_sigma=drift, seed=seed)


def day_conditions(ds, days):
    return [(f"day{d}", D.select(ds, days=d, split="train"), D.select(ds, days=d, split="test")) for d in days]


class TestEvaluate:
    def test_perfect_model(self):
        test = two_class_set()
        model = M.fit_batch(test.features, test.class_id, 1e-3, 2)
        res = E.evaluate(model, test)
        assert res.accuracy == 1.0
        np.testing.assert_array_equal(res.per_class_accuracy, [1.0, 1.0])

    def test_constant_prediction_balanced(self):
        test = two_class_set()
        model = M.new_model(2, 2, 1.0)
        model.weights = np.array([[1.0, 0.0], [1.0, 0.0]])
        res = E.evaluate(model, test)
        assert res.accuracy == 0.5
        np.testing.assert_array_equal(res.per_class_correct, [4, 0])
        np.testing.assert_array_equal(res.per_class_total, [4, 4])

    def test_zero_noise_separable(self):
        spec = D.SynthSpec(num_classes=10, num_categories=5, dim=32, frames_per_session=20, num_days=1,
                           noise_sigma=0.0, day_drift_sigma=0.0, seed=2)
        ds = D.synth_generate(spec)
        train, test = D.select(ds, split="train"), D.select(ds, split="test")
        # oracle: nearest class mean labels every test frame correctly
        means = np.stack([train.features[train.class_id == c].mean(0) for c in range(10)])
        d2 = ((test.features[:, None] - means[None]) ** 2).sum(-1)
        assert np.all(d2.argmin(1) == test.class_id)
        model = M.fit_batch(train.features, train.class_id, 1e-3, 10)
        assert E.evaluate(model, test).accuracy == 1.0

    def test_order_invariant(self, small_ds, rng):
        train, test = D.select(small_ds, split="train"), D.select(small_ds, split="test")
        model = M.fit_batch(train.features, train.class_id, 1.0, train.num_classes)
        perm = rng.permutation(len(test))
        shuffled = D.FeatureDataset(
            name=test.name, class_names=test.class_names, categories=test.categories,
            features=test.features[perm], class_id=test.class_id[perm], object_name=test.object_name[perm],
            day=test.day[perm], split=test.split[perm], variant=test.variant[perm], seq=np.arange(len(test)),
        )
        assert E.evaluate(model, shuffled).accuracy == E.evaluate(model, test).accuracy

    def test_empty_rejected(self, small_ds):
        model = M.new_model(small_ds.dim, small_ds.num_classes)
        with pytest.raises(InvalidArgument):
            E.evaluate(model, small_ds._take([]))

    def test_dim_mismatch(self, small_ds):
        with pytest.raises(InvalidArgument):
            E.evaluate(M.new_model(small_ds.dim + 1, small_ds.num_classes), small_ds)


class TestBuildMixed:
    def test_four_sources_25(self):
        ds = D.synth_generate(drift_spec(0, T=6, dim=8, n_f=30, categories=3))
        sources = [D.select(ds, days=d, split="train") for d in (1, 2, 3, 4)]
        mixed = E.build_mixed(sources, 25)
        np.testing.assert_array_equal(D.class_counts(mixed), [100] * 6)

    def test_one_source(self, small_ds):
        src = D.select(small_ds, split="train")
        assert E.build_mixed([src], 7) == D.select(src, first_k=7)

    def test_too_large_names_class_and_source(self, small_ds):
        a = D.select(small_ds, days=1, split="train")
        b = D.select(small_ds, days=2, split="train")
        with pytest.raises(InvalidArgument, match=r"class 0 .*source 0"):
            E.build_mixed([a, b], 31)

    def test_vocabulary_mismatch(self, small_ds):
        a = D.select(small_ds, split="train")
        b = D.select(a, classes=[0, 1])
        with pytest.raises(InvalidArgument):
            E.build_mixed([a, b], 1)


class TestCrossMatrix:
    def test_single_condition(self, small_ds):
        train, test = D.select(small_ds, split="train"), D.select(small_ds, split="test")
        cm = E.cross_matrix([("only", train, test)], lam=1.0)
        assert cm.cells.shape == (1, 1)
        model = M.fit_batch(train.features, train.class_id, 1.0, train.num_classes)
        assert cm.cells[0, 0] == E.evaluate(model, test).accuracy

    def test_diagonal_equals_standalone(self, small_ds):
        conds = day_conditions(small_ds, (1, 2))
        cm = E.cross_matrix(conds, lam=1.0, train_k=30)
        assert cm.row_tags == ["day1", "day2", "all"]
        for tag, train, test in conds:
            model = M.fit_batch(train.features, train.class_id, 1.0, train.num_classes)
            assert cm.cell(tag, tag) == E.evaluate(model, test).accuracy

    def test_pooled_row_matches_mixed(self, small_ds):
        conds = day_conditions(small_ds, (1, 2))
        cm = E.cross_matrix(conds, lam=1.0, train_k=10)
        mixed = E.build_mixed([c[1] for c in conds], 5)
        model = M.fit_batch(mixed.features, mixed.class_id, 1.0, mixed.num_classes)
        np.testing.assert_array_equal(cm.cells[2], [E.evaluate(model, c[2]).accuracy for c in conds])
        np.testing.assert_allclose(cm.row_averages, cm.cells.mean(axis=1))

    def test_train_k_must_split_evenly(self, small_ds):
        with pytest.raises(InvalidArgument):
            E.cross_matrix(day_conditions(small_ds, (1, 2)), train_k=9)

    def test_no_drift_flat(self):
        ds = D.synth_generate(drift_spec(1, drift=0.0, days=2))
        cm = E.cross_matrix(day_conditions(ds, (1, 2)), pooled=False)
        assert abs(cm.cells[0, 0] - cm.cells[0, 1]) < 0.05
        assert abs(cm.cells[1, 1] - cm.cells[1, 0]) < 0.05

    def test_large_drift_diagonal_dominates(self):
        ds = D.synth_generate(drift_spec(2, drift=0.5, days=3, n_f=60, dim=64))
        cm = E.cross_matrix(day_conditions(ds, (1, 2, 3)), pooled=False)
        for i in range(3):
            off = np.delete(cm.cells[i], i)
            assert cm.cells[i, i] > off.max()

    def test_workers_do_not_matter(self, small_ds):
        conds = day_conditions(small_ds, (1, 2))
        a = E.cross_matrix(conds, workers=1)
        b = E.cross_matrix(conds, workers=3)
        np.testing.assert_array_equal(a.cells, b.cells)

    def test_csv(self, small_ds, tmp_path):
        cm = E.cross_matrix(day_conditions(small_ds, (1, 2)))
        lines = cm.write_csv(tmp_path / "x.csv").read_text().splitlines()
        assert lines[0] == "train\\test,day1,day2,average"
        assert [ln.split(",")[0] for ln in lines[1:]] == ["day1", "day2", "all"]


class TestIncremental:
    def test_final_point_equals_batch(self, small_ds):
        src = D.select(small_ds, days=1, split="train")
        test = D.select(small_ds, split="test")
        curve = E.incremental_curve([src], test, step=7, lam=1.0)
        model = M.fit_batch(src.features, src.class_id, 1.0, src.num_classes)
        assert abs(curve.accuracies[-1] - E.evaluate(model, test).accuracy) <= 1e-6
        assert curve.checkpoints == [7, 14, 21, 28, 30]
        assert np.all(np.diff(curve.checkpoints) > 0)

    def test_final_point_two_sources(self, small_ds):
        srcs = [D.select(small_ds, days=d, split="train") for d in (1, 2)]
        test = D.select(small_ds, split="test")
        curve = E.incremental_curve(srcs, test, step=10, tags=["d1", "d2"])
        both = D.concat(srcs)
        model = M.fit_batch(both.features, both.class_id, 1.0, both.num_classes)
        assert abs(curve.accuracies[-1] - E.evaluate(model, test).accuracy) <= 1e-6
        assert curve.segment_tags == ["d1"] * 3 + ["d2"] * 3
        assert curve.checkpoints == [10, 20, 30, 40, 50, 60]

    def test_deterministic(self, small_ds):
        srcs = [D.select(small_ds, days=d, split="train") for d in (1, 2)]
        test = D.select(small_ds, split="test")
        a = E.incremental_curve(srcs, test, step=3)
        b = E.incremental_curve(srcs, test, step=3)
        assert a.accuracies == b.accuracies

    def test_round_robin(self):
        ds = two_class_set(3)
        rounds = E.round_robin_order(ds)
        np.testing.assert_array_equal(np.concatenate(rounds), [0, 3, 1, 4, 2, 5])

    def test_bad_step(self, small_ds):
        with pytest.raises(InvalidArgument):
            E.incremental_curve([small_ds], small_ds, step=0)

    def test_jumps_at_new_days(self):
        """Held-out day 4; a fresh day's frames should not hurt, in most seeds."""
        nonneg = 0
        seeds = range(4)
        for seed in seeds:
            ds = D.synth_generate(drift_spec(seed, days=4, T=10, n_f=60, dim=64, categories=5))
            srcs = [D.select(ds, days=d, split="train") for d in (1, 2, 3)]
            test = D.select(ds, days=4, split="test")
            curve = E.incremental_curve(srcs, test, step=10, tags=["1", "2", "3"])
            tags = curve.segment_tags
            jumps = [curve.accuracies[i] - curve.accuracies[i - 1]
                     for i in range(1, len(tags)) if tags[i] != tags[i - 1]]
            assert len(jumps) == 2
            nonneg += all(j >= 0 for j in jumps)
        assert nonneg >= len(seeds) / 2
