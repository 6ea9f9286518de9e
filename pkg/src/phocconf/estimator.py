"""Attribute estimator: feature vector -> PHOC probabilities."""
import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import nnet
from .nnet import CLAMP
from .phoc import PhocConfig, build_phoc_matrix, phoc_dimension

ESTIMATOR_FORMAT = "phocconf-estimator"


@dataclass
class EstimatorConfig:
    input_dim: int
    hidden: tuple = (512, 512)
    tap_layers: tuple = None  # None -> every hidden layer
    train: nnet.TrainConfig = field(default_factory=nnet.estimator_train_config)

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be positive")
        if self.tap_layers is None:
            self.tap_layers = tuple(range(len(self.hidden)))
        self.tap_layers = tuple(int(i) for i in self.tap_layers)
        if any(not 0 <= i < len(self.hidden) for i in self.tap_layers):
            raise ValueError("tap index out of range")


@dataclass
class FeatureTaps:
    taps: list
    penultimate: np.ndarray


class AttributeEstimator:
    """Trained network plus the embedding layout it predicts."""

    def __init__(self, net, phoc_config, tap_layers):
        self.net = net
        self.phoc_config = phoc_config
        self.tap_layers = tuple(tap_layers)
        self.loss_trace = []
        self._digest = None

    @property
    def input_dim(self):
        return self.net.input_dim

    def dumps(self):
        header = {
            "kind": ESTIMATOR_FORMAT,
            "phoc": self.phoc_config.to_dict(),
            "phoc_digest": self.phoc_config.digest(),
            "input_dim": self.input_dim,
            "tap_layers": list(self.tap_layers),
        }
        return nnet.dumps_model(self.net, header)

    def digest(self):
        """SHA-256 of the serialized model; cached, estimators are immutable once trained."""
        if self._digest is None:
            self._digest = hashlib.sha256(self.dumps().encode()).hexdigest()
        return self._digest

    @classmethod
    def loads(cls, text):
        net, header = nnet.loads_model(text)
        if header.get("kind") != ESTIMATOR_FORMAT:
            raise ValueError("model file is not an attribute estimator")
        phoc = PhocConfig.from_dict(header["phoc"])
        if phoc.digest() != header["phoc_digest"]:
            raise ValueError("estimator header PHOC digest does not match its PHOC config")
        if net.output_dim != phoc_dimension(phoc):
            raise ValueError("estimator output width does not match its PHOC config")
        return cls(net, phoc, header["tap_layers"])


def build_estimator_network(config, phoc_config, rng):
    widths = [config.input_dim, *config.hidden, phoc_dimension(phoc_config)]
    n_hidden = len(config.hidden)
    return nnet.init_network(
        widths,
        ["relu"] * n_hidden + ["sigmoid"],
        rng,
        dropout_after=[True] * n_hidden + [False],
        dropout_p=config.train.dropout_p,
    )


def train_estimator(features, transcriptions, phoc_config, config):
    """Fit an estimator on (features, PHOC(transcription)) pairs.

    Initialization draws from ``config.train.seed`` spawned apart from
    the minibatch stream, so the two never share random numbers.
    """
    X = np.asarray(features, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("empty train split")
    if X.shape[1] != config.input_dim:
        raise ValueError(f"features have width {X.shape[1]}, expected {config.input_dim}")
    if any(not t for t in transcriptions):
        raise ValueError("training transcriptions must be nonempty")
    Y = build_phoc_matrix(list(transcriptions), phoc_config).astype(np.float64)
    init_ss, batch_ss = np.random.SeedSequence(config.train.seed).spawn(2)
    net = build_estimator_network(config, phoc_config, np.random.default_rng(init_ss))
    train_cfg = nnet.TrainConfig(**{**config.train.__dict__, "seed": int(batch_ss.generate_state(1)[0])})
    _, trace = nnet.train(net, X, Y, train_cfg)
    est = AttributeEstimator(net, phoc_config, config.tap_layers)
    est.loss_trace = trace
    return est


def _check(estimator, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != estimator.input_dim:
        raise ValueError(f"feature width {x.shape[-1]} != estimator input {estimator.input_dim}")
    return x


def estimate(estimator, features):
    """Deterministic (dropout-off) attribute estimate, clamped to [1e-7, 1-1e-7]."""
    x = _check(estimator, features)
    return np.clip(nnet.predict(estimator.net, x), CLAMP, 1.0 - CLAMP)


def estimate_stochastic(estimator, features, passes=100, rng=None):
    """``passes`` estimates with dropout active on every hidden layer.

    Returns an array of shape (passes, D) for a single feature vector or
    (passes, N, D) for a batch.
    """
    if passes < 2:
        raise ValueError("need at least 2 passes")
    if rng is None:
        raise ValueError("stochastic inference needs a generator")
    x = _check(estimator, features)
    out = [
        np.clip(nnet.forward(estimator.net, x, rng).output, CLAMP, 1.0 - CLAMP)
        for _ in range(passes)
    ]
    return np.stack(out)


def hidden_taps(estimator, features):
    """Eval-mode hidden activations at the tap layers plus the last hidden layer."""
    x = _check(estimator, features)
    trace = nnet.forward(estimator.net, x)
    hidden = trace.outputs[:-1]
    return FeatureTaps([hidden[i] for i in estimator.tap_layers], hidden[-1])
