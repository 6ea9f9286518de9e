"""Confidence measures for attribute estimates.

Four measures, all oriented so that larger means more confident:

* ``activation``   mean sigmoid output over the active (> 0.5) attributes
* ``test_dropout`` negated mean per-attribute variance under MC dropout
* ``ti_meta``      logit of a metaclassifier on the raw features
* ``td_meta``      logit of a metaclassifier on the estimator's hidden layers
"""
import json
from dataclasses import dataclass, field

import numpy as np

from . import nnet
from ._jsonio import dumps_with_arrays
from .estimator import estimate_stochastic, hidden_taps

MEASURES = ("activation", "test_dropout", "ti_meta", "td_meta")
META_FORMAT = "phocconf-meta"
# samples per MC-dropout chunk; part of the random-stream contract
DROPOUT_CHUNK = 128


@dataclass(frozen=True)
class ConfidenceScore:
    measure: str
    raw: float

    @property
    def oriented(self):
        return orient(self.measure, self.raw)


def orient(measure, raw):
    if measure not in MEASURES:
        raise ValueError(f"unknown measure {measure!r}")
    return -raw if measure == "test_dropout" else raw


@dataclass
class MetaConfig:
    hidden: tuple = (512, 512)
    projection_width: int = 16
    leaky_slope: float = 0.01
    pool_levels: tuple = (1, 2, 4, 8)
    train: nnet.TrainConfig = field(default_factory=nnet.meta_train_config)

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.pool_levels = tuple(int(L) for L in self.pool_levels)
        if self.projection_width < max(self.pool_levels):
            raise ValueError("projection width must be at least the largest pool level")


# ---------------------------------------------------------------------------
# c1, c2
# ---------------------------------------------------------------------------

def activation_raw(estimates):
    """Row-wise mean of active (> 0.5) attributes; 0 when none is active."""
    E = np.atleast_2d(np.asarray(estimates, dtype=np.float64))
    active = E > 0.5
    n = active.sum(axis=1)
    s = np.where(active, E, 0.0).sum(axis=1)
    return np.where(n > 0, s / np.maximum(n, 1), 0.0)


def conf_activation(estimate):
    return ConfidenceScore("activation", float(activation_raw(estimate)[0]))


def dropout_variance(estimator, features, passes=100, rng=None):
    """Mean over attributes of the population variance across dropout passes.

    Batches are processed in fixed chunks of ``DROPOUT_CHUNK`` samples, each
    chunk drawing all of its passes before the next chunk starts.
    """
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    out = np.empty(len(X))
    for start in range(0, len(X), DROPOUT_CHUNK):
        chunk = X[start:start + DROPOUT_CHUNK]
        runs = estimate_stochastic(estimator, chunk, passes, rng)  # (passes, n, D)
        # shifting by the first pass keeps identical passes at exactly zero
        out[start:start + len(chunk)] = (runs - runs[0]).var(axis=0).mean(axis=1)
    return out


def conf_test_dropout(estimator, features, passes=100, rng=None):
    return ConfidenceScore("test_dropout", float(dropout_variance(estimator, features, passes, rng)[0]))


# ---------------------------------------------------------------------------
# 1-D pyramid pooling
# ---------------------------------------------------------------------------

def pool_matrix(length, levels=(1, 2, 4, 8)):
    """(length, sum(levels)) averaging matrix for pyramid pooling.

    Level L cuts the vector into L contiguous segments whose sizes differ by
    at most one, the larger ones first.
    """
    if length < max(levels):
        raise ValueError(f"vector of length {length} shorter than pyramid level {max(levels)}")
    P = np.zeros((length, sum(levels)))
    col = 0
    for L in levels:
        base, extra = divmod(length, L)
        start = 0
        for i in range(L):
            size = base + (1 if i < extra else 0)
            P[start:start + size, col] = 1.0 / size
            start += size
            col += 1
    return P


def pyramid_pool_1d(vector, levels=(1, 2, 4, 8)):
    v = np.asarray(vector, dtype=np.float64)
    return v @ pool_matrix(v.shape[-1], levels)


# ---------------------------------------------------------------------------
# task-independent metaclassifier
# ---------------------------------------------------------------------------

class TiMetaClassifier:
    def __init__(self, network):
        if network.output_dim != 1:
            raise ValueError("metaclassifier must end in a single neuron")
        self.network = network

    def dumps(self):
        header = {"measure": "ti_meta", "estimator_digest": None}
        return nnet.dumps_model(self.network, header, kind=META_FORMAT + "-ti")

    @classmethod
    def loads(cls, text):
        net, _ = nnet.loads_model(text, kind=META_FORMAT + "-ti")
        return cls(net)


def meta_labels(n_in, n_out):
    """1 for training-distribution samples, 0 for surrogate OD ones."""
    return np.concatenate([np.ones(n_in), np.zeros(n_out)])


def _split_seeds(seed):
    init_ss, batch_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_ss), int(batch_ss.generate_state(1)[0])


def train_ti_meta(train_features, surrogate_features, config=None):
    """Fit the feature-level ID/OD classifier on X (label 1) and O (label 0)."""
    config = config or MetaConfig()
    X = np.asarray(train_features, dtype=np.float64)
    O = np.asarray(surrogate_features, dtype=np.float64)
    if len(X) == 0 or len(O) == 0:
        raise ValueError("metaclassifier needs nonempty ID and surrogate sets")
    init_rng, batch_seed = _split_seeds(config.train.seed)
    widths = [X.shape[1], *config.hidden, 1]
    net = nnet.init_network(
        widths, ["relu"] * len(config.hidden) + ["sigmoid"], init_rng,
        dropout_after=[True] * len(config.hidden) + [False],
        dropout_p=config.train.dropout_p,
    )
    cfg = nnet.TrainConfig(**{**config.train.__dict__, "seed": batch_seed})
    nnet.train(net, np.vstack([X, O]), meta_labels(len(X), len(O)), cfg)
    return TiMetaClassifier(net)


def ti_logits(meta, features):
    trace = nnet.forward(meta.network, np.atleast_2d(np.asarray(features, dtype=np.float64)))
    return trace.pre[-1][:, 0]


def conf_ti(meta, features):
    return ConfidenceScore("ti_meta", float(ti_logits(meta, features)[0]))


# ---------------------------------------------------------------------------
# task-dependent metaclassifier
# ---------------------------------------------------------------------------

class TdMetaClassifier:
    """Per-tap projection + leaky ReLU + pyramid pooling, then one sigmoid neuron.

    The head sees the pooled taps followed by the estimator's last hidden
    activation.
    """

    def __init__(self, projections, head_weight, head_bias, pool_levels=(1, 2, 4, 8),
                 slope=0.01, estimator_digest=None):
        self.projections = projections  # [(W (tap_width, k), b (k,))]
        self.head_weight = head_weight  # (sum pooled + penultimate,)
        self.head_bias = head_bias  # shape (1,)
        self.pool_levels = tuple(pool_levels)
        self.slope = slope
        self.estimator_digest = estimator_digest
        widths = {W.shape[1] for W, _ in projections}
        if len(widths) > 1:
            raise ValueError("all tap projections must share one width")
        self._pool = pool_matrix(widths.pop(), self.pool_levels) if projections else None

    def params(self):
        out = [p for pair in self.projections for p in pair]
        return out + [self.head_weight, self.head_bias]

    @property
    def pooled_width(self):
        return len(self.projections) * sum(self.pool_levels)

    def forward(self, taps, penultimate):
        """Logits for a batch; also returns the cache needed by :meth:`backward`."""
        pooled, cache = [], []
        for tap, (W, b) in zip(taps, self.projections):
            z = tap @ W + b
            h = np.where(z > 0, z, self.slope * z)
            pooled.append(h @ self._pool)
            cache.append(z)
        concat = np.hstack(pooled + [penultimate])
        if concat.shape[1] != self.head_weight.shape[0]:
            raise ValueError("head input width does not match taps + penultimate")
        logits = concat @ self.head_weight + self.head_bias[0]
        return logits, (taps, cache, concat)

    def backward(self, cache, dlogits):
        taps, zs, concat = cache
        g_head_w = concat.T @ dlogits
        g_head_b = np.array([dlogits.sum()])
        dconcat = np.outer(dlogits, self.head_weight)
        k = sum(self.pool_levels)
        grads = []
        for i, (tap, z) in enumerate(zip(taps, zs)):
            dh = dconcat[:, i * k:(i + 1) * k] @ self._pool.T
            dz = dh * np.where(z > 0, 1.0, self.slope)
            grads += [tap.T @ dz, dz.sum(axis=0)]
        return grads + [g_head_w, g_head_b]

    def loss_and_grads(self, taps, penultimate, labels):
        logits, cache = self.forward(taps, penultimate)
        p = nnet.sigmoid(logits)
        loss = nnet.bce_loss(p, labels)
        return loss, self.backward(cache, (p - labels) / len(labels))

    def dumps(self):
        doc = {
            "format": META_FORMAT + "-td",
            "version": nnet.MODEL_VERSION,
            "header": {"measure": "td_meta", "estimator_digest": self.estimator_digest},
            "pool_levels": list(self.pool_levels),
            "slope": self.slope,
            "projections": [
                {"fan_in": int(W.shape[0]), "fan_out": int(W.shape[1]), "weight": W, "bias": b}
                for W, b in self.projections
            ],
            "head": {"fan_in": int(self.head_weight.shape[0]),
                     "weight": self.head_weight, "bias": self.head_bias},
        }
        return dumps_with_arrays(doc)

    @classmethod
    def loads(cls, text):
        doc = json.loads(text)
        if doc.get("format") != META_FORMAT + "-td":
            raise ValueError("not a task-dependent metaclassifier document")
        if doc.get("version") != nnet.MODEL_VERSION:
            raise ValueError(f"unsupported model version {doc.get('version')}")
        projections = [
            (np.asarray(p["weight"], dtype=np.float64).reshape(p["fan_in"], p["fan_out"]),
             np.asarray(p["bias"], dtype=np.float64))
            for p in doc["projections"]
        ]
        head = doc["head"]
        return cls(
            projections,
            np.asarray(head["weight"], dtype=np.float64),
            np.asarray(head["bias"], dtype=np.float64),
            doc["pool_levels"], float(doc["slope"]), doc["header"]["estimator_digest"],
        )


class EstimatorMismatch(ValueError):
    """A task-dependent metaclassifier was paired with a different estimator."""


def _init_td(taps, penultimate_width, config, rng):
    projections = []
    for tap in taps:
        fan_in = tap.shape[1]
        W = rng.standard_normal((fan_in, config.projection_width)) * np.sqrt(2.0 / fan_in)
        projections.append((W, np.zeros(config.projection_width)))
    head_in = len(taps) * sum(config.pool_levels) + penultimate_width
    head_w = rng.standard_normal(head_in) * np.sqrt(2.0 / head_in)
    return TdMetaClassifier(projections, head_w, np.zeros(1), config.pool_levels, config.leaky_slope)


def train_td_meta(estimator, train_features, surrogate_features, config=None):
    """Fit the hidden-feature ID/OD classifier; the estimator stays frozen.

    Taps are computed once in eval mode; only the projections and the head
    receive gradient updates.
    """
    config = config or MetaConfig()
    X = np.asarray(train_features, dtype=np.float64)
    O = np.asarray(surrogate_features, dtype=np.float64)
    if len(X) == 0 or len(O) == 0:
        raise ValueError("metaclassifier needs nonempty ID and surrogate sets")
    feats = hidden_taps(estimator, np.vstack([X, O]))
    labels = meta_labels(len(X), len(O))
    init_rng, batch_seed = _split_seeds(config.train.seed)
    meta = _init_td(feats.taps, feats.penultimate.shape[1], config, init_rng)
    meta.estimator_digest = estimator.digest()
    cfg = nnet.TrainConfig(**{**config.train.__dict__, "seed": batch_seed})

    def step(idx, rng):
        return meta.loss_and_grads([t[idx] for t in feats.taps], feats.penultimate[idx], labels[idx])

    nnet.run_training(meta.params(), step, len(labels), cfg)
    return meta


def td_logits(estimator, meta, features, check_digest=True):
    if check_digest and meta.estimator_digest is not None and meta.estimator_digest != estimator.digest():
        raise EstimatorMismatch("task-dependent metaclassifier was trained against a different estimator")
    feats = hidden_taps(estimator, np.atleast_2d(np.asarray(features, dtype=np.float64)))
    logits, _ = meta.forward(feats.taps, feats.penultimate)
    return logits


def conf_td(estimator, meta, features):
    return ConfidenceScore("td_meta", float(td_logits(estimator, meta, features)[0]))
