"""Fully connected inference network with a replaceable first layer.

The model is a plain list of (weights, bias) layers with ReLU between them
and linear logits at the end, trained with mini-batch Adam on softmax
cross-entropy.  Training is deterministic for a fixed seed: He-uniform
initialization, shuffle order, and any pool draws all come from one seeded
generator, and all arithmetic runs in the weight dtype (float32 by
default), so repeated runs produce bitwise-identical weights.

The first layer L0 doubles as the target generator for the compression
regression: targets are its pre-activations plus seeded Gaussian noise.
Heads (everything after L0) can be retrained on re-expanded inputs, either
one per compression level or as a single head trained across a pool of
levels, with optional validation-split early stopping that keeps the best
epoch (including the unchanged starting point).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericalError


@dataclass
class TrainConfig:
    """Adam hyperparameters plus scheduling and early-stopping options.

    ``lr_decay_at`` drops the learning rate by ``lr_decay_factor`` from that
    epoch onward.  ``val_fraction`` > 0 holds out a seeded validation split,
    tracks accuracy on it after every epoch, and returns the best snapshot;
    an epoch must beat the current best by more than ``min_delta`` to be
    adopted, so a run that never improves returns the initial weights.
    """

    epochs: int = 30
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    lr_decay_at: int = None
    lr_decay_factor: float = 0.1
    val_fraction: float = 0.0
    min_delta: float = 0.0

    def __post_init__(self):
        if self.epochs < 0 or self.learning_rate < 0 or self.batch_size < 1:
            raise ValueError("epochs and learning_rate must be non-negative "
                             "and batch_size positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1
                and self.adam_eps > 0):
            raise ValueError("Adam moment decays must lie in [0, 1) and "
                             "eps must be positive")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")


@dataclass
class MlpModel:
    """Ordered (weights, bias) layers; ReLU between layers, linear logits."""

    layers: list

    def __post_init__(self):
        if not self.layers:
            raise DimensionError("a model needs at least one layer")
        for i in range(1, len(self.layers)):
            prev_out = self.layers[i - 1][0].shape[0]
            cur_in = self.layers[i][0].shape[1]
            if prev_out != cur_in:
                raise DimensionError("layer %d expects %d inputs but the "
                                     "previous layer emits %d"
                                     % (i, cur_in, prev_out))

    @property
    def layer_sizes(self):
        return [self.layers[0][0].shape[1]] + \
            [w.shape[0] for w, _ in self.layers]

    @property
    def dtype(self):
        return self.layers[0][0].dtype

    def copy(self):
        return MlpModel([(w.copy(), b.copy()) for w, b in self.layers])


@dataclass
class RegressionTargetSet:
    """First-layer pre-activations plus seeded noise, ready for regression."""

    x_tilde: np.ndarray
    y_tilde: np.ndarray
    noise_lambda: float


def init_mlp(layer_sizes, seed, dtype=np.float32):
    """He-uniform initialized model with zero biases."""
    if len(layer_sizes) < 2:
        raise DimensionError("need at least an input and an output size")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in)).astype(dtype)
        b = np.zeros(fan_out, dtype=dtype)
        layers.append((w, b))
    return MlpModel(layers)


def _forward_layers(layers, a):
    for i, (w, b) in enumerate(layers):
        a = a @ w.T + b
        if i < len(layers) - 1:
            a = np.maximum(a, 0)
    return a


def forward(model, x):
    """Logits for one input or a batch of row vectors."""
    a = np.asarray(x)
    single = a.ndim == 1
    if single:
        a = a[None, :]
    if a.shape[1] != model.layers[0][0].shape[1]:
        raise DimensionError("expected inputs of length %d, got shape %s"
                             % (model.layers[0][0].shape[1], np.shape(x)))
    out = _forward_layers(model.layers, a.astype(model.dtype, copy=False))
    return out[0] if single else out


def forward_from_layer(model, start_layer, x):
    """Forward pass entering at ``start_layer``.

    ``start_layer=0`` is the ordinary forward pass.  For ``start_layer>=1``
    the input is interpreted as the pre-activation that layer
    ``start_layer - 1`` would have produced: ReLU applies first, then the
    remaining layers.
    """
    if not 0 <= start_layer < len(model.layers):
        raise DimensionError("start_layer %d outside [0, %d)"
                             % (start_layer, len(model.layers)))
    if start_layer == 0:
        return forward(model, x)
    a = np.asarray(x)
    single = a.ndim == 1
    if single:
        a = a[None, :]
    if a.shape[1] != model.layers[start_layer][0].shape[1]:
        raise DimensionError("expected inputs of length %d, got shape %s"
                             % (model.layers[start_layer][0].shape[1],
                                np.shape(x)))
    a = np.maximum(a, 0).astype(model.dtype, copy=False)
    out = _forward_layers(model.layers[start_layer:], a)
    return out[0] if single else out


def accuracy(model, x, labels):
    """Fraction of argmax predictions matching the labels."""
    return float(np.mean(forward(model, x).argmax(axis=1) == labels))


def _batch_loss_grads(layers, xb, yb):
    """Softmax cross-entropy loss and per-layer gradients for one batch."""
    acts = [xb]
    a = xb
    for i, (w, b) in enumerate(layers):
        a = a @ w.T + b
        if i < len(layers) - 1:
            a = np.maximum(a, 0)
        acts.append(a)
    z = acts[-1] - acts[-1].max(axis=1, keepdims=True)
    ez = np.exp(z)
    p = ez / ez.sum(axis=1, keepdims=True)
    loss = -np.mean(np.log(p[np.arange(len(yb)), yb] + 1e-30))
    g = p.copy()
    g[np.arange(len(yb)), yb] -= 1.0
    g /= len(yb)
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        grads[i] = (g.T @ acts[i], g.sum(axis=0))
        if i > 0:
            g = (g @ w) * (acts[i] > 0)
    return float(loss), grads


def _train_core(layers, pools, labels, cfg):
    """Adam training over one or more aligned input pools.

    Every pool holds one representation of the same samples; each batch
    draws one pool uniformly (no draw is made for a single pool, so the
    single-pool case consumes exactly the same random stream as plain
    training).  Returns the trained layers and the per-epoch loss trace.
    """
    layers = [(w.copy(), b.copy()) for w, b in layers]
    rng = np.random.default_rng(cfg.seed)
    n = len(labels)

    if cfg.val_fraction > 0.0:
        perm = rng.permutation(n)
        n_val = int(round(cfg.val_fraction * n))
        val_idx, fit_idx = perm[:n_val], perm[n_val:]
        fit_pools = [p[fit_idx] for p in pools]
        fit_labels = labels[fit_idx]
        val_pools = [p[val_idx] for p in pools]
        val_labels = labels[val_idx]
    else:
        fit_pools, fit_labels = pools, labels
        val_pools = val_labels = None

    def val_accuracy(current):
        hits = 0.0
        for p in val_pools:
            logits = _forward_layers(current, p)
            hits += float(np.mean(logits.argmax(axis=1) == val_labels))
        return hits / len(val_pools)

    best = None
    best_val = -np.inf
    if val_pools is not None:
        best = [(w.copy(), b.copy()) for w, b in layers]
        best_val = val_accuracy(layers)

    ms = [(np.zeros_like(w), np.zeros_like(b)) for w, b in layers]
    vs = [(np.zeros_like(w), np.zeros_like(b)) for w, b in layers]
    beta1, beta2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
    t = 0
    n_fit = len(fit_labels)
    losses = []
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate
        if cfg.lr_decay_at is not None and epoch >= cfg.lr_decay_at:
            lr = lr * cfg.lr_decay_factor
        order = rng.permutation(n_fit)
        total = 0.0
        for start in range(0, n_fit, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            pool = rng.integers(len(fit_pools)) if len(fit_pools) > 1 else 0
            xb, yb = fit_pools[pool][idx], fit_labels[idx]
            loss, grads = _batch_loss_grads(layers, xb, yb)
            total += loss * len(yb)
            t += 1
            c1 = 1.0 - beta1 ** t
            c2 = 1.0 - beta2 ** t
            for (w, b), (gw, gb), (mw, mb), (vw, vb) in zip(layers, grads,
                                                            ms, vs):
                for par, grad, m, v in ((w, gw, mw, vw), (b, gb, mb, vb)):
                    m *= beta1
                    m += (1.0 - beta1) * grad
                    v *= beta2
                    v += (1.0 - beta2) * grad * grad
                    par -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
        epoch_loss = total / n_fit
        if not np.isfinite(epoch_loss):
            raise NumericalError("training diverged: epoch %d loss is %r"
                                 % (epoch, epoch_loss))
        losses.append(epoch_loss)
        if val_pools is not None:
            va = val_accuracy(layers)
            if va > best_val + cfg.min_delta:
                best_val = va
                best = [(w.copy(), b.copy()) for w, b in layers]
    if val_pools is not None:
        layers = best
    return layers, losses


def train(model, x, labels, cfg):
    """Train a model on labeled inputs; returns (model, per-epoch losses)."""
    x = np.asarray(x).astype(model.dtype, copy=False)
    labels = np.asarray(labels)
    if len(x) != len(labels):
        raise DimensionError("inputs and labels must have equal length")
    layers, losses = _train_core(model.layers, [x], labels, cfg)
    return MlpModel(layers), losses


def extract_l0(model):
    """Weights and bias of the first layer, copied."""
    w, b = model.layers[0]
    return w.copy(), b.copy()


def make_regression_targets(model, x_tilde, noise_lambda=None, seed=0):
    """First-layer pre-activations plus scaled Gaussian noise.

    When ``noise_lambda`` is None it defaults to 0.1 times the root mean
    pre-activation variance, which keeps the regression sub-task away from
    the deterministic degenerate case; the value actually used is stored on
    the returned set.
    """
    x = np.asarray(x_tilde, dtype=np.float64)
    w0, b0 = model.layers[0]
    pre = x @ w0.astype(np.float64).T + b0.astype(np.float64)
    if noise_lambda is None:
        noise_lambda = 0.1 * np.sqrt(np.mean(pre.var(axis=0)))
    noise_lambda = float(noise_lambda)
    y = pre
    if noise_lambda > 0.0:
        rng = np.random.default_rng(seed)
        y = pre + noise_lambda * rng.standard_normal(pre.shape)
    return RegressionTargetSet(x_tilde=x, y_tilde=y,
                               noise_lambda=noise_lambda)


def _relu32(values, dtype):
    return np.maximum(np.asarray(values), 0).astype(dtype)


def head_model(model):
    """The model with its first layer removed, copied."""
    if len(model.layers) < 2:
        raise DimensionError("model has no head beyond its first layer")
    return MlpModel([(w.copy(), b.copy()) for w, b in model.layers[1:]])


def retrain_head(model, reconstructed, labels, cfg):
    """Retrain layers 1..end on re-expanded pre-activations.

    The first layer is discarded; the reconstructed inputs pass through
    ReLU and feed the head directly.  Returns the head as its own model.
    """
    head = head_model(model)
    return finetune_head(head, reconstructed, labels, cfg)


def finetune_head(head, reconstructed, labels, cfg):
    """Continue training an existing head on re-expanded pre-activations."""
    pool = _relu32(reconstructed, head.dtype)
    labels = np.asarray(labels)
    layers, _ = _train_core(head.layers, [pool], labels, cfg)
    return MlpModel(layers)


def head_logits(head, reconstructed):
    """Logits of a head applied to re-expanded pre-activations."""
    return forward(head, np.maximum(np.asarray(reconstructed), 0))


def train_head_on_z(z, labels, head_sizes, cfg):
    """Train a fresh classifier that consumes compressed features directly."""
    z = np.asarray(z)
    if head_sizes[0] != z.shape[1]:
        raise DimensionError("head input size %d does not match n_z=%d"
                             % (head_sizes[0], z.shape[1]))
    head = init_mlp(head_sizes, cfg.seed)
    layers, _ = _train_core(head.layers, [z.astype(head.dtype)],
                            np.asarray(labels), cfg)
    return MlpModel(layers)


def train_multi_rho_head(model, pools, labels, cfg):
    """One head trained across re-expanded pools from several sizes.

    ``pools`` maps each compression size to that size's re-expanded
    training matrix (all aligned to the same samples).  Each mini-batch
    draws one pool uniformly, so the head amortizes over every size.  A
    single-entry mapping reduces exactly to retrain_head.
    """
    if not pools:
        raise ValueError("pools must contain at least one compression size")
    head = head_model(model)
    ordered = [_relu32(pools[k], head.dtype) for k in sorted(pools)]
    layers, _ = _train_core(head.layers, ordered, np.asarray(labels), cfg)
    return MlpModel(layers)
