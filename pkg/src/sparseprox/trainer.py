"""Stochastic proximal gradient training.

Every minibatch iteration does, for each layer: a gradient step on the
weights (plain SGD or Adam), then the proximal map of the configured
regularizer with step ``lambda * learning_rate`` (split by ``mu_l`` for
the two-term modes).  Biases get the gradient step only.
"""
import enum
import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import metrics, nn, prox
from .data import one_hot
from .errors import ConfigError, TrainingDivergence

TRACE_HEADER = "iteration,loss,accuracy,nonzero_fraction,flop_ratio,neurons_removed"


class Optimizer(str, enum.Enum):
    SGD = "sgd"
    ADAM = "adam"


class RegularizerMode(str, enum.Enum):
    NONE = "none"
    L2 = "l2"
    L1 = "l1"
    GROUP_ONLY = "group"
    TL1_ONLY = "tl1"
    SGL = "sgl"
    INTEGRATED_TL1 = "integrated_tl1"


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 1e-5
    s: float = 0.1
    learning_rate: float = 0.1
    batch_size: int = 32
    max_iterations: int = 1000
    loss_delta_tol: float = 1e-5
    seed: int = 0
    optimizer: Optimizer = Optimizer.SGD
    regularizer_mode: RegularizerMode = RegularizerMode.INTEGRATED_TL1
    a: float = 1.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        try:
            object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
            object.__setattr__(self, "regularizer_mode", RegularizerMode(self.regularizer_mode))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        checks = [
            (self.lam >= 0 and math.isfinite(self.lam), "lambda must be finite and >= 0"),
            (0 <= self.s <= 0.5, "s must lie in [0, 0.5]"),
            (self.learning_rate >= 0 and math.isfinite(self.learning_rate), "learning_rate must be >= 0"),
            (int(self.batch_size) == self.batch_size and self.batch_size >= 1, "batch_size must be a positive integer"),
            (int(self.max_iterations) == self.max_iterations and self.max_iterations >= 0, "max_iterations must be >= 0"),
            (self.loss_delta_tol >= 0, "loss_delta_tol must be >= 0"),
            (self.a > 0 and math.isfinite(self.a), "a must be finite and > 0"),
            (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1, "adam betas must lie in [0, 1)"),
            (self.adam_eps > 0, "adam_eps must be > 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "batch_size", int(self.batch_size))
        object.__setattr__(self, "max_iterations", int(self.max_iterations))

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


def mu_schedule(layer, num_layers, s):
    """Balance between the transformed-l1 and group terms for a 1-based layer
    index: ``s`` at the first layer rising linearly to ``1 - s`` at the last.
    A single-layer network gets 0.5."""
    if not 1 <= layer <= num_layers:
        raise ValueError(f"layer index {layer} outside 1..{num_layers}")
    if num_layers == 1:
        return 0.5
    return s + (1.0 - 2.0 * s) * (layer - 1) / (num_layers - 1)


# --------------------------------------------------------------------------
# Adam
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AdamMoments:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, arr):
        return cls(np.zeros_like(arr), np.zeros_like(arr), 0)


def adam_step(state, gradient, learning_rate, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns ``(new_state, direction)``
    where the parameter update is ``param + direction``."""
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * gradient
    v = beta2 * state.v + (1.0 - beta2) * gradient * gradient
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    direction = -learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    return AdamMoments(m, v, t), direction


# --------------------------------------------------------------------------
# single-layer update
# --------------------------------------------------------------------------


def partition_for(layer):
    """Neuron groups of a layer: outgoing rows for dense, filters for conv."""
    if layer.spec.kind is nn.LayerKind.CONV2D:
        return prox.GroupPartition.conv_filters(layer.weights.shape)
    return prox.GroupPartition.dense_rows(layer.weights.shape)


def regularize(W, config, mu_l, partition):
    """Apply the proximal map of ``config.regularizer_mode`` to ``W``."""
    mode = config.regularizer_mode
    step = config.lam * config.learning_rate
    if step == 0 or mode in (RegularizerMode.NONE, RegularizerMode.L2):
        return W
    if mode is RegularizerMode.INTEGRATED_TL1:
        return prox.integrated_prox(W, partition, config.lam, config.learning_rate, mu_l, config.a)
    if mode is RegularizerMode.TL1_ONLY:
        return prox.tl1_prox_matrix(W, prox.ProxStep(step, config.a))
    if mode is RegularizerMode.GROUP_ONLY:
        return prox.group_prox(W, partition, step)
    if mode is RegularizerMode.SGL:
        return prox.group_prox(prox.l1_prox(W, step * mu_l), partition, step * (1.0 - mu_l))
    if mode is RegularizerMode.L1:
        return prox.l1_prox(W, step)
    raise AssertionError(mode)  # pragma: no cover


def layer_update(W, grad, config, mu_l, partition, adam_state=None):
    """Gradient step then prox for one weight matrix.

    Returns ``(W_new, adam_state_new)``; the Adam state is ``None`` under SGD.
    """
    if config.regularizer_mode is RegularizerMode.L2 and config.lam != 0:
        grad = grad + config.lam * W
    if config.optimizer is Optimizer.ADAM:
        if adam_state is None:
            adam_state = AdamMoments.zeros_like(W)
        adam_state, direction = adam_step(
            adam_state, grad, config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps
        )
        W = W + direction
    else:
        W = W - config.learning_rate * grad
    if not np.all(np.isfinite(W)):
        raise TrainingDivergence("non-finite weights after the gradient step; lower the learning rate")
    return regularize(W, config, mu_l, partition), adam_state


def _bias_update(b, grad, config, adam_state):
    if config.optimizer is Optimizer.ADAM:
        if adam_state is None:
            adam_state = AdamMoments.zeros_like(b)
        adam_state, direction = adam_step(
            adam_state, grad, config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps
        )
        return b + direction, adam_state
    return b - config.learning_rate * grad, None


def train_step(model, x, y_onehot, config, iteration=0, optimizer_state=None):
    """One minibatch iteration over every layer.

    ``optimizer_state`` is a per-layer list of (weight, bias) Adam moments
    (or ``None``) and is updated in place. Returns ``(new_model, loss)``;
    the input model is not modified.
    """
    loss, grads = nn.loss_and_grads(model, x, y_onehot)
    if not math.isfinite(loss):
        raise TrainingDivergence(f"non-finite loss at iteration {iteration}; lower the learning rate")
    L = model.num_layers
    if optimizer_state is None:
        optimizer_state = [(None, None)] * L
    new_layers = []
    for i, (layer, (dW, db)) in enumerate(zip(model.layers, grads)):
        w_state, b_state = optimizer_state[i]
        mu = mu_schedule(i + 1, L, config.s)
        W, w_state = layer_update(layer.weights, dW, config, mu, partition_for(layer), w_state)
        b, b_state = _bias_update(layer.bias, db, config, b_state)
        optimizer_state[i] = (w_state, b_state)
        new_layers.append(nn.Layer(layer.spec, W, b))
    return nn.NetworkModel(model.input_shape, new_layers), loss


# --------------------------------------------------------------------------
# training loop
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    loss: float
    accuracy: float
    nonzero_fraction: float
    flop_ratio: float
    neurons_removed: int

    def csv_line(self):
        return (
            f"{self.iteration},{self.loss!r},{self.accuracy!r},"
            f"{self.nonzero_fraction!r},{self.flop_ratio!r},{self.neurons_removed}"
        )


@dataclass
class TrainTrace:
    """One row per (possibly partial) epoch."""

    rows: list = field(default_factory=list)

    def append(self, row):
        if self.rows and row.iteration <= self.rows[-1].iteration:
            raise ValueError("trace iterations must strictly increase")
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def to_csv(self):
        return "\n".join([TRACE_HEADER] + [r.csv_line() for r in self.rows]) + "\n"

    def write_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write(self.to_csv())


def epoch_permutation(seed, epoch, n):
    """Sample order of one epoch; a pure function of (seed, epoch)."""
    return np.random.default_rng([int(seed), int(epoch)]).permutation(n)


def train(model, train_data, config, eval_data=None, callback=None):
    """Run minibatch proximal SGD/Adam until the epoch-averaged training
    loss changes by less than ``loss_delta_tol`` or ``max_iterations``
    minibatch steps have run.

    Returns ``(final_model, trace)``. Trace accuracy is measured on
    ``eval_data`` when given, else on ``train_data``.
    """
    if config.batch_size > len(train_data):
        raise ConfigError(f"batch_size {config.batch_size} exceeds training set size {len(train_data)}")
    model = model.copy()
    trace = TrainTrace()
    if config.max_iterations == 0:
        return model, trace
    evaluation = eval_data if eval_data is not None else train_data
    x_all = train_data.features
    y_all = one_hot(train_data.labels, train_data.num_classes)
    n = len(train_data)
    state = [(None, None)] * model.num_layers
    iteration = 0
    prev_loss = None
    epoch = 0
    while iteration < config.max_iterations:
        order = epoch_permutation(config.seed, epoch, n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            model, loss = train_step(model, x_all[idx], y_all[idx], config, iteration, state)
            losses.append(loss)
            iteration += 1
            if iteration >= config.max_iterations:
                break
        epoch_loss = float(np.mean(losses))
        rep = metrics.sparsity_report(model, evaluation.features, evaluation.labels)
        row = TraceRow(iteration, epoch_loss, rep.accuracy, rep.nonzero_fraction, rep.flop_ratio, rep.neurons_removed)
        trace.append(row)
        if callback is not None:
            callback(epoch, model, row)
        if prev_loss is not None and abs(epoch_loss - prev_loss) < config.loss_delta_tol:
            break
        prev_loss = epoch_loss
        epoch += 1
    return model, trace
