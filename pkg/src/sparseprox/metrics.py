"""Sparsity, FLOP and accuracy accounting for a model snapshot.

"Zero" always means bitwise zero; the proximal operators produce exact
zeros so no tolerance is applied.

FLOP model: a multiply-accumulate counts as 2 FLOPs. A dense layer costs
2 * (nonzero weights) per sample; a conv layer costs 2 * (nonzero kernel
taps) at each output position. Weights attached to a removed unit on
either side are skipped. Activations and biases are not counted.
"""
from dataclasses import asdict, dataclass

import numpy as np

from .nn import LayerKind, predict_proba

FLOP_MODEL = "2*nonzero MACs per sample; conv taps counted per output position; activations excluded"


@dataclass(frozen=True)
class SparsityReport:
    nonzero_fraction: float
    neurons_total: int
    neurons_removed: int
    flop_ratio: float
    accuracy: float = float("nan")

    def to_dict(self):
        d = asdict(self)
        d["flop_model"] = FLOP_MODEL
        return d


def count_nonzero(model):
    """Nonzero weights over all layers (biases excluded): (nonzero, total, fraction)."""
    nz = sum(int(np.count_nonzero(layer.weights)) for layer in model.layers)
    total = sum(layer.weights.size for layer in model.layers)
    return nz, total, (nz / total if total else 0.0)


def _incoming_dead(layer):
    """Units of ``layer`` whose whole incoming weight vector (a column) is zero."""
    return ~np.any(layer.weights != 0, axis=0)


def _outgoing_dead(layer, next_layer):
    """Dense units of ``layer`` whose outgoing row in ``next_layer`` is all zero."""
    return ~np.any(next_layer.weights != 0, axis=1)


def removed_masks(model):
    """Per hidden layer, a boolean mask over its units marking removed ones.

    The output layer gets an all-False mask (output units are never removed).
    A dense unit is removed when its incoming or its outgoing weights are all
    zero; a conv filter is removed when all of its weights are zero.
    """
    masks = []
    last = model.num_layers - 1
    for i, layer in enumerate(model.layers):
        if i == last:
            masks.append(np.zeros(layer.spec.units, dtype=bool))
            continue
        dead = _incoming_dead(layer)
        if layer.spec.kind is LayerKind.DENSE:
            dead = dead | _outgoing_dead(layer, model.layers[i + 1])
        masks.append(dead)
    return masks


def count_removed_neurons(model):
    """(per-layer removed counts, total) over hidden layers; the output layer
    always reports 0."""
    per_layer = [int(m.sum()) for m in removed_masks(model)]
    return per_layer, sum(per_layer)


def neurons_total(model):
    return sum(layer.spec.units for layer in model.layers[:-1])


def _layer_flops(layer, out_shape, weights):
    nz = int(np.count_nonzero(weights))
    if layer.spec.kind is LayerKind.CONV2D:
        return 2 * nz * out_shape[0] * out_shape[1]
    return 2 * nz


def _effective_weights(model, masks):
    """Weights with connections of removed units zeroed."""
    eff = []
    for i, layer in enumerate(model.layers):
        w = layer.weights.copy()
        w[:, masks[i]] = 0.0
        if i > 0:
            # input rows cycle over the previous layer's units fastest
            dead_in = masks[i - 1]
            w[np.tile(dead_in, w.shape[0] // dead_in.size), :] = 0.0
        eff.append(w)
    return eff


def flop_counts(model):
    """(sparse FLOPs, dense FLOPs) of one forward pass per sample."""
    shapes = model.layer_shapes()
    masks = removed_masks(model)
    eff = _effective_weights(model, masks)
    sparse = dense = 0
    for layer, (_, out_shape), w in zip(model.layers, shapes, eff):
        sparse += _layer_flops(layer, out_shape, w)
        dense += _layer_flops(layer, out_shape, np.ones_like(w))
    return sparse, dense


def flop_ratio(model):
    sparse, dense = flop_counts(model)
    return sparse / dense if dense else 0.0


def accuracy(model, features, labels):
    """Fraction of samples whose argmax output equals the label; ties go to
    the smallest class index."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("accuracy: empty dataset")
    probs = predict_proba(model, features)
    return float(np.mean(np.argmax(probs, axis=1) == labels))


def sparsity_report(model, features=None, labels=None):
    _, _, frac = count_nonzero(model)
    _, removed = count_removed_neurons(model)
    acc = accuracy(model, features, labels) if features is not None else float("nan")
    return SparsityReport(
        nonzero_fraction=frac,
        neurons_total=neurons_total(model),
        neurons_removed=removed,
        flop_ratio=flop_ratio(model),
        accuracy=acc,
    )
