"""Minimal dense network: forward/backward, dropout, BCE, Adam."""
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from ._jsonio import dumps_with_arrays

logger = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "leaky_relu", "sigmoid", "identity")
CLAMP = 1e-7
MODEL_FORMAT = "phocconf-dense"
MODEL_VERSION = 1


@dataclass
class Layer:
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray
    activation: str = "relu"
    slope: float = 0.01
    dropout_after: bool = False

    @property
    def shape(self):
        return self.weight.shape

    def params(self):
        return [self.weight, self.bias]


@dataclass
class DenseNetwork:
    layers: list
    dropout_p: float = 0.0

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.weight.shape[1] != b.weight.shape[0]:
                raise ValueError(f"layer shapes do not compose: {a.shape} -> {b.shape}")
        for layer in self.layers:
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"unknown activation {layer.activation!r}")
            if layer.bias.shape != (layer.weight.shape[1],):
                raise ValueError("bias length must equal layer width")

    @property
    def input_dim(self):
        return self.layers[0].weight.shape[0]

    @property
    def output_dim(self):
        return self.layers[-1].weight.shape[1]

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def copy(self):
        return DenseNetwork(
            [replace(l, weight=l.weight.copy(), bias=l.bias.copy()) for l in self.layers],
            self.dropout_p,
        )


def init_network(widths, activations, rng, dropout_after=None, dropout_p=0.0, slope=0.01):
    """He-initialised network; ``widths`` includes the input width."""
    if len(activations) != len(widths) - 1:
        raise ValueError("need one activation per layer")
    if dropout_after is None:
        dropout_after = [False] * len(activations)
    layers = []
    for fan_in, fan_out, act, drop in zip(widths, widths[1:], activations, dropout_after):
        w = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
        layers.append(Layer(w, np.zeros(fan_out), act, slope, bool(drop)))
    return DenseNetwork(layers, dropout_p)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def activate(z, activation, slope=0.01):
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "leaky_relu":
        return np.where(z > 0, z, slope * z)
    if activation == "sigmoid":
        return sigmoid(z)
    return z


def activation_grad(z, y, activation, slope=0.01):
    """Derivative of the activation, given pre- (z) and post- (y) values."""
    if activation == "relu":
        return (z > 0).astype(np.float64)
    if activation == "leaky_relu":
        return np.where(z > 0, 1.0, slope)
    if activation == "sigmoid":
        return y * (1.0 - y)
    return np.ones_like(z)


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------

@dataclass
class ActivationTrace:
    inputs: list = field(default_factory=list)
    pre: list = field(default_factory=list)
    act: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    masks: list = field(default_factory=list)

    @property
    def output(self):
        return self.outputs[-1]


def forward(net, x, rng=None, dropout_p=None):
    """Run ``net`` on ``x`` (a vector or an (N, in) batch).

    With ``rng`` given the pass is in training mode: every layer flagged
    ``dropout_after`` zeroes units with probability ``dropout_p`` (defaults
    to ``net.dropout_p``) and scales survivors by ``1/(1-p)``.  Without it
    dropout is the identity.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != net.input_dim:
        raise ValueError(f"input width {h.shape[1]} != network input {net.input_dim}")
    p = net.dropout_p if dropout_p is None else dropout_p
    trace = ActivationTrace()
    for layer in net.layers:
        trace.inputs.append(h)
        z = h @ layer.weight + layer.bias
        y = activate(z, layer.activation, layer.slope)
        trace.pre.append(z)
        trace.act.append(y)
        mask = None
        if rng is not None and layer.dropout_after and p > 0.0:
            mask = (rng.random(y.shape) >= p) / (1.0 - p)
            y = y * mask
        trace.masks.append(mask)
        trace.outputs.append(y)
        h = y
    if single:
        trace.outputs = [o[0] for o in trace.outputs]
    return trace


def predict(net, x):
    """Eval-mode output."""
    return forward(net, x).output


def backward(net, trace, grad_out, grad_wrt_pre=False):
    """Backpropagate ``grad_out`` through the recorded trace.

    ``grad_out`` is dL/d(output) unless ``grad_wrt_pre`` says it is already
    the gradient w.r.t. the last layer's pre-activation.  Returns a list of
    ``(dW, db)`` per layer and dL/d(input).
    """
    grads = [None] * len(net.layers)
    g = np.asarray(grad_out, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if not (grad_wrt_pre and i == len(net.layers) - 1):
            if trace.masks[i] is not None:
                g = g * trace.masks[i]
            g = g * activation_grad(trace.pre[i], trace.act[i], layer.activation, layer.slope)
        grads[i] = (trace.inputs[i].T @ g, g.sum(axis=0))
        g = g @ layer.weight.T
    return grads, g


def bce_loss(predictions, targets):
    p = np.clip(np.asarray(predictions, dtype=np.float64), CLAMP, 1.0 - CLAMP)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    return float(np.mean(-(t * np.log(p) + (1.0 - t) * np.log1p(-p))))


def bce_output_grad(net, trace, targets):
    """Gradient of the mean BCE at the last layer.

    For a sigmoid output this is the stable ``(p - t) / M`` w.r.t. the
    logit, the gradient of the unclamped loss, so saturated wrong outputs
    keep learning.  Otherwise it is dL/dp with clamped entries zeroed.
    Returns ``(grad, wrt_pre)``.
    """
    p = trace.outputs[-1]
    p = p if p.ndim == 2 else p[None, :]
    t = np.asarray(targets, dtype=np.float64).reshape(p.shape)
    M = p.size
    if net.layers[-1].activation == "sigmoid" and trace.masks[-1] is None:
        return (p - t) / M, True
    pc = np.clip(p, CLAMP, 1.0 - CLAMP)
    g = (-t / pc + (1.0 - t) / (1.0 - pc)) / M
    g[(p < CLAMP) | (p > 1.0 - CLAMP)] = 0.0
    return g, False


def loss_and_grads(net, x, targets, rng=None, dropout_p=None):
    trace = forward(net, x, rng, dropout_p)
    out = trace.outputs[-1]
    loss = bce_loss(out, np.asarray(targets, dtype=np.float64).reshape(np.shape(out)))
    g, wrt_pre = bce_output_grad(net, trace, targets)
    grads, _ = backward(net, trace, g, grad_wrt_pre=wrt_pre)
    return loss, grads


# ---------------------------------------------------------------------------
# optimisation
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    iterations: int = 20000
    batch_size: int = 10
    lr: float = 1e-4
    lr_schedule: tuple = ((14000, 10.0),)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 5e-5
    dropout_p: float = 0.5
    seed: int = 0

    def __post_init__(self):
        self.lr_schedule = tuple((int(i), float(d)) for i, d in self.lr_schedule)
        its = [i for i, _ in self.lr_schedule]
        if any(b <= a for a, b in zip(its, its[1:])):
            raise ValueError("lr_schedule iterations must be strictly increasing")
        if its and its[-1] > self.iterations:
            raise ValueError("lr_schedule iteration beyond the training length")
        if self.batch_size < 1 or self.iterations < 0:
            raise ValueError("batch_size must be >= 1 and iterations >= 0")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must lie in [0, 1)")

    def lr_at(self, iteration):
        lr = self.lr
        for it, div in self.lr_schedule:
            if iteration >= it:
                lr /= div
        return lr

    def to_dict(self):
        d = dict(self.__dict__)
        d["lr_schedule"] = [list(s) for s in self.lr_schedule]
        return d


def estimator_train_config(iterations=20000, **overrides):
    """Attribute estimator recipe; the lr drop sits at 70% of training."""
    cfg = dict(
        iterations=iterations,
        lr=1e-4,
        lr_schedule=((int(0.7 * iterations), 10.0),) if iterations else (),
        weight_decay=5e-5,
        dropout_p=0.5,
    )
    cfg.update(overrides)
    return TrainConfig(**cfg)


def meta_train_config(iterations=25000, **overrides):
    """Metaclassifier recipe: lr 1e-2 dropped tenfold at 40/60/80%."""
    marks = (0.4, 0.6, 0.8)
    cfg = dict(
        iterations=iterations,
        lr=1e-2,
        lr_schedule=tuple((int(f * iterations), 10.0) for f in marks) if iterations else (),
        weight_decay=5e-4,
        dropout_p=0.0,
    )
    cfg.update(overrides)
    return TrainConfig(**cfg)


class AdamState:
    def __init__(self, params):
        self.m = [np.zeros(p.size) for p in params]
        self.v = [np.zeros(p.size) for p in params]
        self.t = 0


def adam_step(params, grads, state, config, iteration):
    """Apply one Adam update in place to ``params`` (list of arrays).

    Weight decay is coupled: ``weight_decay * w`` is added to the gradient
    before the moment updates.
    """
    state.t += 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    lr = config.lr_at(iteration)
    for p, g, m, v in zip(params, grads, state.m, state.v):
        _kernels.adam_update(
            p.reshape(-1), np.ascontiguousarray(g, dtype=np.float64).reshape(-1), m, v,
            lr, b1, b2, bc1, bc2, config.adam_eps, config.weight_decay,
        )


def run_training(params, step_fn, n_samples, config, log_every=100):
    """Generic minibatch loop shared by every trainable model.

    ``step_fn(idx, rng)`` returns ``(loss, grads)`` for the batch ``idx``,
    with grads aligned to ``params``.  Returns the per-``log_every`` mean
    loss trace.
    """
    if n_samples < 1:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(config.seed)
    state = AdamState(params)
    trace, window = [], []
    for it in range(config.iterations):
        idx = rng.integers(0, n_samples, size=config.batch_size)
        loss, grads = step_fn(idx, rng)
        adam_step(params, grads, state, config, it)
        window.append(loss)
        if len(window) == log_every:
            trace.append(float(np.mean(window)))
            window = []
            if len(trace) % 50 == 0:
                logger.info("iteration %d  loss %.5f", it + 1, trace[-1])
    if window:
        trace.append(float(np.mean(window)))
    return trace


def train(net, inputs, targets, config):
    """Train ``net`` in place on (inputs, targets) with BCE; returns (net, loss trace).

    Minibatches are drawn uniformly with replacement from a generator
    seeded by ``config.seed``, so identical inputs give identical weights.
    """
    X = np.asarray(inputs, dtype=np.float64)
    Y = np.asarray(targets, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("empty dataset")
    if Y.ndim == 1:
        Y = Y[:, None]
    params = net.params()

    def step(idx, rng):
        loss, grads = loss_and_grads(net, X[idx], Y[idx], rng, config.dropout_p)
        return loss, [g for pair in grads for g in pair]

    return net, run_training(params, step, len(X), config)


def gradient_check(net, x, targets, epsilon=1e-5):
    """Max relative error between analytic and central-difference gradients.

    Runs in eval mode.  Relative error per parameter is
    ``|ga - gn| / max(|ga|, |gn|, 1e-8)``.
    """
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)

    def loss_at():
        out = forward(net, x).output
        return bce_loss(out, t.reshape(np.shape(out)))

    _, grads = loss_and_grads(net, x, t)
    worst = 0.0
    for layer, (gw, gb) in zip(net.layers, grads):
        for p, ga in ((layer.weight, gw), (layer.bias, gb)):
            flat, gflat = p.reshape(-1), ga.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + epsilon
                up = loss_at()
                flat[i] = orig - epsilon
                down = loss_at()
                flat[i] = orig
                gn = (up - down) / (2 * epsilon)
                err = abs(gflat[i] - gn) / max(abs(gflat[i]), abs(gn), 1e-8)
                worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def layer_to_obj(layer):
    return {
        "fan_in": int(layer.weight.shape[0]),
        "fan_out": int(layer.weight.shape[1]),
        "activation": layer.activation,
        "slope": layer.slope,
        "dropout_after": layer.dropout_after,
        "weight": layer.weight,
        "bias": layer.bias,
    }


def layer_from_obj(obj):
    shape = (obj["fan_in"], obj["fan_out"])
    w = np.asarray(obj["weight"], dtype=np.float64).reshape(shape)
    b = np.asarray(obj["bias"], dtype=np.float64)
    return Layer(w, b, obj["activation"], float(obj["slope"]), bool(obj["dropout_after"]))


def network_to_obj(net):
    return {"dropout_p": net.dropout_p, "layers": [layer_to_obj(l) for l in net.layers]}


def network_from_obj(obj):
    return DenseNetwork([layer_from_obj(l) for l in obj["layers"]], float(obj["dropout_p"]))


def dumps_model(net, header=None, kind=MODEL_FORMAT):
    """Versioned JSON model document with 17-significant-digit parameters."""
    doc = {"format": kind, "version": MODEL_VERSION, "header": header or {}}
    doc.update(network_to_obj(net))
    return dumps_with_arrays(doc)


def loads_model(text, kind=MODEL_FORMAT):
    """Inverse of :func:`dumps_model`; returns ``(net, header)``."""
    doc = json.loads(text)
    if doc.get("format") != kind:
        raise ValueError(f"not a {kind} document")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')}")
    return network_from_obj(doc), doc["header"]
