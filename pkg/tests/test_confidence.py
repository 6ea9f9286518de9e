import numpy as np
import pytest

from phocconf import confidence as cf
from phocconf import nnet
from phocconf.estimator import AttributeEstimator, EstimatorConfig, estimate, train_estimator
from phocconf.evaluation import auroc
from phocconf.phoc import PhocConfig

SMALL = PhocConfig(tuple("abcd"), (1, 2))


def small_meta_config(iterations=400, **train):
    tc = nnet.TrainConfig(**{**dict(iterations=iterations, lr=1e-2, lr_schedule=(), weight_decay=5e-4,
                                    dropout_p=0.0, batch_size=10, seed=3), **train})
    return cf.MetaConfig(hidden=(16, 16), projection_width=8, pool_levels=(1, 2, 4), train=tc)


@pytest.fixture(scope="module")
def tiny_estimator():
    rng = np.random.default_rng(0)
    words = ["ab", "cd", "abc", "dca", "bad"]
    codes = rng.standard_normal((len(words), 12))
    idx = rng.integers(0, len(words), 80)
    X = codes[idx] + 0.05 * rng.standard_normal((80, 12))
    cfg = EstimatorConfig(12, (16, 16), None,
                          nnet.TrainConfig(iterations=300, lr=1e-2, lr_schedule=(), seed=1))
    return train_estimator(X, [words[i] for i in idx], SMALL, cfg), X


class TestActivation:
    def test_examples(self):
        assert cf.conf_activation([0.9, 0.6, 0.2]).raw == pytest.approx(0.75)
        assert cf.conf_activation([0.4, 0.4]).raw == 0.0
        assert cf.conf_activation(np.full(540, 1 - 1e-7)).raw == pytest.approx(1.0)

    def test_half_is_not_active(self):
        assert cf.activation_raw([[0.5, 0.7]])[0] == pytest.approx(0.7)

    def test_bounded(self):
        E = np.random.default_rng(1).uniform(0, 1, (100, 30))
        v = cf.activation_raw(E)
        assert np.all((v == 0) | ((v > 0.5) & (v <= 1)))


class TestOrientation:
    def test_dropout_negated(self):
        s = cf.ConfidenceScore("test_dropout", 0.01)
        assert s.oriented == -0.01

    @pytest.mark.parametrize("m", ["activation", "ti_meta", "td_meta"])
    def test_identity(self, m):
        assert cf.ConfidenceScore(m, 0.3).oriented == 0.3

    def test_unknown(self):
        with pytest.raises(ValueError):
            cf.orient("entropy", 1.0)


class TestDropout:
    def test_no_dropout_zero_variance(self, tiny_estimator):
        est, X = tiny_estimator
        net = est.net.copy()
        net.dropout_p = 0.0
        e0 = AttributeEstimator(net, est.phoc_config, est.tap_layers)
        v = cf.dropout_variance(e0, X[:5], 4, np.random.default_rng(0))
        np.testing.assert_array_equal(v, 0.0)
        assert cf.conf_test_dropout(e0, X[:1], 3, np.random.default_rng(0)).oriented == 0.0

    def test_population_variance(self):
        # two passes, one attribute, outputs 0.2 and 0.4 -> variance 0.01
        assert np.var([0.2, 0.4]) == pytest.approx(0.01)

    def test_bounds_and_determinism(self, tiny_estimator):
        est, X = tiny_estimator
        a = cf.dropout_variance(est, X, 10, np.random.default_rng(5))
        b = cf.dropout_variance(est, X, 10, np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)
        assert np.all((a >= 0) & (a <= 0.25))

    def test_chunking_is_the_stream_contract(self, tiny_estimator, monkeypatch):
        est, X = tiny_estimator
        monkeypatch.setattr(cf, "DROPOUT_CHUNK", 30)
        chunked = cf.dropout_variance(est, X, 5, np.random.default_rng(2))
        rng = np.random.default_rng(2)
        manual = np.concatenate([cf.dropout_variance(est, X[s:s + 30], 5, rng) for s in range(0, len(X), 30)])
        np.testing.assert_array_equal(chunked, manual)

    def test_too_few_passes(self, tiny_estimator):
        est, X = tiny_estimator
        with pytest.raises(ValueError):
            cf.dropout_variance(est, X[:2], 1, np.random.default_rng(0))


class TestPooling:
    def test_segment_means(self):
        np.testing.assert_allclose(cf.pyramid_pool_1d([1, 2, 3, 4], (1, 2)), [2.5, 1.5, 3.5])

    def test_constant(self):
        np.testing.assert_allclose(cf.pyramid_pool_1d(np.full(16, 3.0)), np.full(15, 3.0))

    def test_remainder_left(self):
        P = cf.pool_matrix(5, (2,))
        assert (P[:, 0] > 0).sum() == 3 and (P[:, 1] > 0).sum() == 2

    def test_too_short(self):
        with pytest.raises(ValueError):
            cf.pyramid_pool_1d([1.0, 2.0], (4,))

    def test_batch(self):
        V = np.random.default_rng(0).normal(size=(3, 16))
        np.testing.assert_allclose(cf.pyramid_pool_1d(V)[1], cf.pyramid_pool_1d(V[1]))


def blobs(rng, n=100, shift=4.0):
    X = rng.normal(size=(n, 2)) + shift
    O = rng.normal(size=(n, 2)) - shift
    return X, O


class TestTi:
    def test_separable_blobs(self):
        X, O = blobs(np.random.default_rng(0))
        meta = cf.train_ti_meta(X, O, small_meta_config())
        logits = cf.ti_logits(meta, np.vstack([X, O]))
        acc = np.mean((logits > 0) == cf.meta_labels(len(X), len(O)).astype(bool))
        assert acc >= 0.99

    def test_indistinguishable(self):
        rng = np.random.default_rng(1)
        X, O = rng.normal(size=(300, 2)), rng.normal(size=(300, 2))
        meta = cf.train_ti_meta(X, O, small_meta_config(300))
        A, B = rng.normal(size=(500, 2)), rng.normal(size=(500, 2))
        assert abs(auroc(cf.ti_logits(meta, A), cf.ti_logits(meta, B)) - 0.5) <= 0.1

    def test_logit_is_pre_sigmoid(self):
        X, O = blobs(np.random.default_rng(2), 20)
        meta = cf.train_ti_meta(X, O, small_meta_config(50))
        Z = np.vstack([X, O])
        logits = cf.ti_logits(meta, Z)
        np.testing.assert_allclose(nnet.sigmoid(logits), nnet.predict(meta.network, Z)[:, 0])
        np.testing.assert_array_equal(np.argsort(logits, kind="stable"),
                                      np.argsort(nnet.sigmoid(logits), kind="stable"))

    def test_zero_head_gives_bias(self):
        X, O = blobs(np.random.default_rng(3), 10)
        meta = cf.train_ti_meta(X, O, small_meta_config(10))
        meta.network.layers[-1].weight[:] = 0.0
        meta.network.layers[-1].bias[:] = 0.25
        np.testing.assert_array_equal(cf.ti_logits(meta, X), 0.25)
        assert cf.conf_ti(meta, X[0]).raw == 0.25

    def test_round_trip(self):
        X, O = blobs(np.random.default_rng(4), 10)
        meta = cf.train_ti_meta(X, O, small_meta_config(20))
        back = cf.TiMetaClassifier.loads(meta.dumps())
        np.testing.assert_array_equal(cf.ti_logits(back, X), cf.ti_logits(meta, X))

    def test_empty(self):
        with pytest.raises(ValueError):
            cf.train_ti_meta(np.zeros((0, 2)), np.ones((3, 2)), small_meta_config(5))

    def test_shape_mismatch(self):
        X, O = blobs(np.random.default_rng(5), 10)
        meta = cf.train_ti_meta(X, O, small_meta_config(5))
        with pytest.raises(ValueError):
            cf.ti_logits(meta, np.zeros((2, 3)))


class TestTd:
    def test_freeze_and_round_trip(self, tiny_estimator):
        est, X = tiny_estimator
        before = [p.copy() for p in est.net.params()]
        digest = est.digest()
        O = np.random.default_rng(6).normal(0, 3, X.shape)
        meta = cf.train_td_meta(est, X, O, small_meta_config(200))
        for p, q in zip(before, est.net.params()):
            np.testing.assert_array_equal(p, q)
        assert meta.estimator_digest == digest
        back = cf.TdMetaClassifier.loads(meta.dumps())
        np.testing.assert_array_equal(cf.td_logits(est, back, X), cf.td_logits(est, meta, X))
        assert meta.head_weight.shape[0] == 2 * 7 + 16

    def test_separates_shifted(self, tiny_estimator):
        est, X = tiny_estimator
        O = np.random.default_rng(7).normal(0, 3, X.shape)
        meta = cf.train_td_meta(est, X, O, small_meta_config(600))
        assert auroc(cf.td_logits(est, meta, X), cf.td_logits(est, meta, O)) > 0.9

    def test_zero_head_gives_bias(self, tiny_estimator):
        est, X = tiny_estimator
        meta = cf.train_td_meta(est, X, X + 1, small_meta_config(5))
        meta.head_weight[:] = 0.0
        meta.head_bias[:] = -1.5
        np.testing.assert_array_equal(cf.td_logits(est, meta, X), -1.5)
        assert cf.conf_td(est, meta, X[0]).oriented == -1.5

    def test_mismatched_estimator(self, tiny_estimator):
        est, X = tiny_estimator
        meta = cf.train_td_meta(est, X, X + 1, small_meta_config(5))
        other = AttributeEstimator(est.net.copy(), est.phoc_config, est.tap_layers)
        other.net.layers[0].bias[0] += 1.0
        with pytest.raises(cf.EstimatorMismatch):
            cf.td_logits(other, meta, X)

    def test_gradients(self, tiny_estimator):
        est, X = tiny_estimator
        from phocconf.estimator import hidden_taps
        meta = cf.train_td_meta(est, X, X + 1, small_meta_config(5))
        feats = hidden_taps(est, X[:4])
        labels = np.array([1.0, 0.0, 1.0, 0.0])
        _, grads = meta.loss_and_grads(feats.taps, feats.penultimate, labels)
        eps = 1e-6
        worst = 0.0
        for p, g in zip(meta.params(), grads):
            flat, gflat = p.reshape(-1), g.reshape(-1)
            for i in range(0, flat.size, max(1, flat.size // 7)):
                old = flat[i]
                flat[i] = old + eps
                lp, _ = meta.loss_and_grads(feats.taps, feats.penultimate, labels)
                flat[i] = old - eps
                lm, _ = meta.loss_and_grads(feats.taps, feats.penultimate, labels)
                flat[i] = old
                num = (lp - lm) / (2 * eps)
                worst = max(worst, abs(num - gflat[i]) / max(1e-8, abs(num) + abs(gflat[i])))
        assert worst < 1e-4


class TestMetaConfig:
    def test_projection_must_cover_pool(self):
        with pytest.raises(ValueError):
            cf.MetaConfig(projection_width=4, pool_levels=(1, 2, 4, 8))
