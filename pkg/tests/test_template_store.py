import numpy as np
import pytest

from memory.models import Frame
from memory.template_store import TemplateStore, normalize_distance_kind, pairwise_distances, refresh_templates
from services.errors import ShapeError
from services.features import ExtractorConfig, FeatureExtractor


def _store(**kw):
    kw.setdefault("distance", "cosine")
    kw.setdefault("xi", 0.5)
    return TemplateStore(width=8, height=8, **kw)


class TestAddSupervision:
    def test_first_supervision(self):
        store = _store()
        store.add_supervision(np.array([1.0, 0.0]), 1, frame=3, coords=(2, 2))
        assert len(store) == 1
        assert store.known_classes == {1}

    def test_same_class_twice(self):
        store = _store()
        store.add_supervision(np.array([1.0, 0.0]), 2, 0, (1, 1))
        store.add_supervision(np.array([0.0, 1.0]), 2, 5, (1, 1))
        assert len(store) == 2 and store.known_classes == {2}

    def test_three_per_object(self):
        store = _store()
        for cls in (1, 2, 3):
            for t in range(3):
                store.add_supervision(np.ones(4) * cls, cls, t, (cls, t + 1))
        assert len(store) == 9
        assert store.known_classes == {1, 2, 3}

    def test_off_frame_coords(self):
        with pytest.raises(ShapeError):
            _store().add_supervision(np.ones(2), 1, 0, (9, 1))

    def test_unknown_class_rejected(self):
        with pytest.raises(ValueError):
            _store().add_supervision(np.ones(2), 0, 0, (1, 1))

    def test_dimension_mismatch(self):
        store = _store()
        store.add_supervision(np.ones(2), 1, 0, (1, 1))
        with pytest.raises(ShapeError):
            store.add_supervision(np.ones(3), 1, 0, (1, 1))


class TestPredict:
    def test_empty_store_is_unknown(self, rng):
        store = _store()
        assert store.predict(rng.normal(size=3)).class_id == 0
        cls, dist = store.nearest(rng.normal(size=(5, 3)))
        assert not cls.any() and np.all(np.isinf(dist))

    def test_exact_template(self):
        store = _store(distance="squared-euclidean", xi=0.01)
        store.add_supervision(np.array([0.5, 0.25]), 3, 0, (1, 1))
        pred = store.predict(np.array([0.5, 0.25]))
        assert pred.class_id == 3 and pred.min_distance == 0.0

    def test_orthogonal_is_unknown(self):
        store = _store(xi=0.5)
        store.add_supervision(np.array([1.0, 0.0]), 1, 0, (1, 1))
        pred = store.predict(np.array([0.0, 1.0]))
        assert pred.min_distance == 1.0
        assert pred.class_id == 0
        assert pred.scores == {1: -1.0}

    def test_ties_go_to_lowest_class(self):
        store = _store(distance="squared-euclidean", xi=10.0)
        store.add_supervision(np.array([1.0, 0.0]), 2, 0, (1, 1))
        store.add_supervision(np.array([-1.0, 0.0]), 1, 0, (1, 1))
        assert store.predict(np.array([0.0, 0.0])).class_id == 1

    def test_xi_monotonicity(self):
        rng = np.random.default_rng(99)
        for _ in range(1000):
            store = _store(distance=rng.choice(["cosine", "squared-euclidean"]))
            for cls in rng.integers(1, 4, size=int(rng.integers(1, 5))):
                store.add_supervision(rng.normal(size=3), int(cls), 0, (1, 1))
            q = rng.normal(size=3)
            big, small = sorted(rng.uniform(0, 2, size=2))[::-1]
            if store.predict(q, xi=big).class_id == 0:
                assert store.predict(q, xi=small).class_id == 0

    def test_predict_map(self):
        store = _store(distance="squared-euclidean", xi=0.1)
        store.add_supervision(np.array([1.0, 1.0]), 1, 0, (1, 1))
        rows = np.array([[1.0, 1.0], [1.1, 1.0], [5.0, 5.0]])
        np.testing.assert_array_equal(store.predict_map(rows), [1, 1, 0])

    def test_dimension_mismatch(self):
        store = _store()
        store.add_supervision(np.ones(2), 1, 0, (1, 1))
        with pytest.raises(ShapeError):
            store.predict(np.ones(3))


class TestDistances:
    def test_cosine_range_for_unit_vectors(self, rng):
        a = rng.normal(size=(6, 4))
        b = rng.normal(size=(9, 4))
        a /= np.linalg.norm(a, axis=1, keepdims=True)
        b /= np.linalg.norm(b, axis=1, keepdims=True)
        d = pairwise_distances(a, b, "cosine")
        assert d.shape == (9, 6)
        assert d.min() >= -1e-12 and d.max() <= 2.0 + 1e-12

    def test_zero_vector_is_at_distance_one(self):
        d = pairwise_distances(np.array([[1.0, 0.0]]), np.zeros((1, 2)), "cosine")
        assert d[0, 0] == 1.0

    def test_aliases(self):
        assert normalize_distance_kind("euclidean") == "squared-euclidean"
        with pytest.raises(ValueError):
            normalize_distance_kind("manhattan")


class TestRefresh:
    @pytest.fixture
    def setup(self, rng):
        ext = FeatureExtractor(ExtractorConfig(in_channels=1, kernel=3, hidden=(3,), out_dim=4, seed=1))
        frames = {t: Frame(pixels=rng.uniform(0, 1, size=(8, 8, 1)), index=t) for t in range(5)}
        store = _store(batch_cap=3)
        for t, xy in ((0, (2, 3)), (2, (5, 5)), (4, (8, 1))):
            store.add_supervision(ext.forward(frames[t]).restrict(xy), 1 + t // 2, t, xy)
        return ext, frames, store

    def test_unchanged_weights_is_a_no_op(self, setup):
        ext, frames, store = setup
        before = [e.template.copy() for e in store.entries]
        store.refresh(ext.forward, frames.get, all_frames=True)
        for b, e in zip(before, store.entries):
            np.testing.assert_array_equal(b, e.template)

    def test_matches_independent_forward(self, setup, rng):
        ext, frames, store = setup
        for p in ext.parameters():
            p.data += rng.normal(scale=0.1, size=p.shape)
        assert refresh_templates(store, ext.forward, frames.get, all_frames=True) == [0, 2, 4]
        for e in store.entries:
            np.testing.assert_array_equal(e.template, ext.forward(frames[e.frame]).restrict((e.x, e.y)))
            assert store.predict(e.template).min_distance == pytest.approx(0.0, abs=1e-12)

    def test_round_robin_batches(self, setup):
        ext, frames, store = setup
        assert store.refresh(ext.forward, frames.get) == [0, 2]
        assert store.refresh(ext.forward, frames.get) == [4, 0]
        assert store.refresh(ext.forward, frames.get) == [2, 4]

    def test_unrefreshed_entries_are_untouched(self, setup, rng):
        ext, frames, store = setup
        first, last = store.entries[0].template.copy(), store.entries[2].template.copy()
        for p in ext.parameters():
            p.data += 0.05
        store.refresh(ext.forward, frames.get)
        np.testing.assert_array_equal(store.entries[2].template, last)
        assert not np.array_equal(store.entries[0].template, first)

    def test_b_one_disables_refresh(self, setup):
        ext, frames, _ = setup
        store = _store(batch_cap=1)
        store.add_supervision(ext.forward(frames[0]).restrict((1, 1)), 1, 0, (1, 1))
        assert store.refresh(ext.forward, frames.get) == []

    def test_missing_frame_marks_stale(self, setup):
        ext, frames, store = setup
        del frames[2]
        done = store.refresh(ext.forward, frames.get, all_frames=True)
        assert done == [0, 4]
        assert [e.stale for e in store.entries] == [False, True, False]
        assert len(store) == 3

    def test_supervised_frames_order(self, setup):
        assert setup[2].supervised_frames() == [0, 2, 4]
