import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddf.classifiers import (
    ClassifierSpec,
    dumps_model,
    fit,
    gradient_check,
    load_model,
    loads_model,
    loss_and_grad,
    one_hot,
    predict,
    save_model,
)
from ddf.errors import (
    ConfigError,
    DataError,
    DivergedLoss,
    MissingClass,
    NonFiniteFeatures,
    ShapeMismatch,
)

KINDS = ("softmax_regression", "mlp", "knn")


def blobs(n_per=40, d=5, sep=10.0, seed=0, n_classes=2):
    rng = np.random.default_rng(seed)
    centres = sep * np.eye(n_classes, d)
    X = np.concatenate([c + rng.standard_normal((n_per, d)) for c in centres])
    y = np.repeat(np.arange(n_classes), n_per)
    return X, y


def _stochastic(Y):
    return Y.min() >= 0 and np.max(np.abs(Y.sum(axis=0) - 1)) < 1e-9


class TestFit:
    def test_separable_blobs_softmax(self):
        X, y = blobs()
        m = fit(ClassifierSpec("softmax_regression", epochs=500), X, y)
        assert np.array_equal(np.argmax(predict(m, X), axis=0), y)

    def test_knn_k1_memorizes(self):
        X = np.random.default_rng(1).standard_normal((30, 4))
        y = np.arange(30) % 3
        m = fit(ClassifierSpec("knn", k_neighbors=1), X, y)
        assert np.array_equal(np.argmax(predict(m, X), axis=0), y)

    def test_mlp_zero_epochs_reproducible(self):
        X, y = blobs(seed=2)
        a = predict(fit(ClassifierSpec("mlp", epochs=0, seed=4), X, y), X)
        b = predict(fit(ClassifierSpec("mlp", epochs=0, seed=4), X, y), X)
        c = predict(fit(ClassifierSpec("mlp", epochs=0, seed=5), X, y), X)
        assert a.tobytes() == b.tobytes()
        assert not np.array_equal(a, c)

    def test_mlp_learns_xor(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(-1, 1, (200, 2))
        y = ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(int)
        m = fit(ClassifierSpec("mlp", epochs=600, hidden_units=16, learning_rate=0.05), X, y)
        assert np.mean(np.argmax(predict(m, X), axis=0) == y) > 0.9

    def test_zero_weights_uniform(self):
        X, y = blobs(n_classes=3)
        m = fit(ClassifierSpec("softmax_regression", epochs=0, init_scale=0.0), X, y)
        np.testing.assert_allclose(predict(m, X), 1 / 3, rtol=0, atol=1e-15)

    @pytest.mark.parametrize("kind", KINDS)
    def test_seeded_determinism(self, kind):
        X, y = blobs(seed=3, sep=1.0)
        spec = ClassifierSpec(kind, epochs=50, seed=9)
        assert predict(fit(spec, X, y), X).tobytes() == predict(fit(spec, X, y), X).tobytes()

    @pytest.mark.parametrize("kind", KINDS)
    def test_permutation_invariance(self, kind):
        X, y = blobs(seed=4, sep=1.5, n_classes=3)
        perm = np.random.default_rng(0).permutation(len(y))
        spec = ClassifierSpec(kind, epochs=60, seed=1)
        Xq = np.random.default_rng(5).standard_normal((20, X.shape[1]))
        a = predict(fit(spec, X, y), Xq)
        b = predict(fit(spec, X[perm], y[perm]), Xq)
        # only float summation order differs
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-9)

    def test_missing_class(self):
        with pytest.raises(MissingClass):
            fit(ClassifierSpec(), np.zeros((4, 2)), np.array([0, 0, 2, 2]))

    def test_missing_class_with_explicit_count(self):
        with pytest.raises(MissingClass):
            fit(ClassifierSpec(), np.zeros((4, 2)), np.array([0, 1, 0, 1]), n_classes=3)

    def test_non_finite(self):
        X = np.ones((4, 2))
        X[1, 1] = np.nan
        with pytest.raises(NonFiniteFeatures):
            fit(ClassifierSpec(), X, np.array([0, 1, 0, 1]))

    def test_label_count_mismatch(self):
        with pytest.raises(ShapeMismatch):
            fit(ClassifierSpec(), np.ones((4, 2)), np.array([0, 1, 0]))

    def test_divergence(self):
        X, y = blobs()
        with pytest.raises(DivergedLoss):
            fit(ClassifierSpec("softmax_regression", epochs=5, learning_rate=1e308, l2=1e300), X, y)

    @pytest.mark.parametrize("field,value", [("kind", "cnn"), ("learning_rate", 0.0), ("epochs", -1),
                                             ("hidden_units", 0), ("l2", -1.0), ("k_neighbors", 0)])
    def test_invalid_spec(self, field, value):
        with pytest.raises(ConfigError):
            ClassifierSpec(**{field: value})

    def test_unknown_spec_field(self):
        with pytest.raises(ConfigError):
            ClassifierSpec.from_dict({"kind": "mlp", "dropout": 0.5})


class TestPredict:
    @settings(max_examples=30, deadline=None)
    @given(kind=st.sampled_from(KINDS), seed=st.integers(0, 10_000), scale=st.sampled_from([1e-3, 1.0, 1e3]))
    def test_column_stochastic(self, kind, seed, scale):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((24, 6))
        y = np.arange(24) % 4
        m = fit(ClassifierSpec(kind, epochs=20, seed=seed), X, y)
        assert _stochastic(predict(m, scale * rng.standard_normal((11, 6))))

    def test_knn_duplicate_point_gets_full_weight(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        m = fit(ClassifierSpec("knn", k_neighbors=3), X, np.array([0, 1, 0, 1]))
        np.testing.assert_array_equal(predict(m, np.array([[1.0]]))[:, 0], [0.0, 1.0])

    def test_knn_inverse_distance(self):
        X = np.array([[0.0], [3.0]])
        m = fit(ClassifierSpec("knn", k_neighbors=2), X, np.array([0, 1]))
        # standardized positions -1, 1; query 0.75 -> -0.5; distances 0.5, 1.5
        np.testing.assert_allclose(predict(m, np.array([[0.75]]))[:, 0], [0.75, 0.25], rtol=1e-12)

    def test_width_mismatch(self):
        X, y = blobs()
        m = fit(ClassifierSpec(epochs=1), X, y)
        with pytest.raises(ShapeMismatch):
            predict(m, np.ones((3, 4)))

    def test_extreme_scores_stay_finite(self):
        X, y = blobs(sep=1e6)
        m = fit(ClassifierSpec("softmax_regression", epochs=50, learning_rate=1.0), X, y)
        assert _stochastic(predict(m, X * 1e3))


class TestGradient:
    @pytest.mark.parametrize("seed", range(3))
    def test_softmax(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((12, 6))
        y = np.arange(12) % 3
        spec = ClassifierSpec("softmax_regression", init_scale=0.5, seed=seed)
        assert gradient_check(spec, X, y) < 1e-4

    @pytest.mark.parametrize("seed", range(3))
    def test_mlp(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((15, 8))
        y = np.arange(15) % 3
        spec = ClassifierSpec("mlp", hidden_units=5, l2=0.1, seed=seed)
        assert gradient_check(spec, X, y) < 1e-4

    def test_zero_weights_zero_input(self):
        X = np.zeros((6, 4))
        Y = one_hot(np.array([0, 1, 2, 0, 1, 2]), 3)
        for kind, params in [
            ("softmax_regression", {"W": np.zeros((3, 4)), "b": np.zeros(3)}),
            ("mlp", {"W1": np.zeros((5, 4)), "b1": np.zeros(5), "W2": np.zeros((3, 5)), "b2": np.zeros(3)}),
        ]:
            _, with_l2 = loss_and_grad(kind, params, X, Y, l2=0.3)
            _, without = loss_and_grad(kind, params, X, Y, l2=0.0)
            for k in with_l2:
                assert np.array_equal(with_l2[k], without[k])
                if k.startswith("W"):
                    assert np.all(with_l2[k] == 0)

    def test_knn_rejected(self):
        with pytest.raises(ConfigError):
            gradient_check(ClassifierSpec("knn"), np.ones((2, 2)), np.array([0, 1]))


class TestSerialization:
    @pytest.mark.parametrize("kind", KINDS)
    def test_roundtrip_bit_exact(self, kind, tmp_path):
        X, y = blobs(seed=7, sep=2.0, n_classes=3)
        m = fit(ClassifierSpec(kind, epochs=30, seed=3), X, y)
        path = tmp_path / "m.bin"
        save_model(path, m)
        back = load_model(path)
        assert back.spec == m.spec
        assert dumps_model(back) == path.read_bytes()
        assert predict(back, X).tobytes() == predict(m, X).tobytes()

    def test_layout(self):
        X, y = blobs()
        raw = dumps_model(fit(ClassifierSpec(epochs=1, seed=11), X, y))
        magic, header, block = raw.split(b"\n", 2)
        import json

        h = json.loads(header)
        assert h["seed"] == 11 and h["spec"]["kind"] == "softmax_regression"
        count = sum(int(np.prod(a["shape"])) for a in h["arrays"])
        assert len(block) == 8 * count

    def test_bad_magic(self):
        with pytest.raises(DataError):
            loads_model(b"nope\n{}\n")

    def test_trailing_bytes(self):
        X, y = blobs()
        raw = dumps_model(fit(ClassifierSpec(epochs=1), X, y))
        with pytest.raises(DataError):
            loads_model(raw + b"\0" * 8)
