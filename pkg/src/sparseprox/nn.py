"""Minimal feedforward network: stride-1 valid Conv2D and Dense layers,
ReLU hidden activations, softmax output, cross-entropy loss and exact
backpropagation.  Everything is float64.

Weight layout
-------------
Dense   (fan_in, fan_out); row i holds the outgoing connections of input i.
Conv2D  (k*k*in_channels, filters); column f holds every weight of filter f,
        row order (di, dj, channel) to match ``im2col`` patches.
Images are NHWC. Conv output is flattened in (h, w, channel) order before
the first Dense layer.
"""
import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ShapeError

PROB_FLOOR = 1e-12
NORMAL_RANDOM_STD = 0.05


class LayerKind(str, enum.Enum):
    DENSE = "dense"
    CONV2D = "conv2d"


class Activation(str, enum.Enum):
    RELU = "relu"
    SOFTMAX = "softmax"
    IDENTITY = "identity"


class InitScheme(str, enum.Enum):
    XAVIER = "xavier"
    NORMAL_RANDOM = "normal"


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    fan_in: int = 0
    fan_out: int = 0
    filters: int = 0
    kernel_size: int = 0
    in_channels: int = 0
    activation: Activation = Activation.RELU

    def __post_init__(self):
        object.__setattr__(self, "kind", LayerKind(self.kind))
        object.__setattr__(self, "activation", Activation(self.activation))
        if self.kind is LayerKind.DENSE:
            if self.fan_in < 1 or self.fan_out < 1:
                raise ValueError(f"dense layer needs fan_in, fan_out >= 1, got {self.fan_in}, {self.fan_out}")
        elif self.filters < 1 or self.kernel_size < 1 or self.in_channels < 1:
            raise ValueError("conv2d layer needs filters, kernel_size, in_channels >= 1")

    @classmethod
    def dense(cls, fan_in, fan_out, activation=Activation.RELU):
        return cls(LayerKind.DENSE, fan_in=fan_in, fan_out=fan_out, activation=activation)

    @classmethod
    def conv2d(cls, filters, kernel_size, in_channels, activation=Activation.RELU):
        return cls(
            LayerKind.CONV2D,
            filters=filters,
            kernel_size=kernel_size,
            in_channels=in_channels,
            activation=activation,
        )

    @property
    def weight_shape(self):
        if self.kind is LayerKind.DENSE:
            return (self.fan_in, self.fan_out)
        return (self.kernel_size * self.kernel_size * self.in_channels, self.filters)

    @property
    def units(self):
        """Output units: dense neurons or conv filters."""
        return self.fan_out if self.kind is LayerKind.DENSE else self.filters


@dataclass
class Layer:
    spec: LayerSpec
    weights: np.ndarray
    bias: np.ndarray

    def copy(self):
        return Layer(self.spec, self.weights.copy(), self.bias.copy())


@dataclass
class NetworkModel:
    """Ordered layers plus the per-sample input shape.

    ``input_shape`` is ``(p,)`` for tabular input or ``(H, W, C)`` when the
    first layer is a convolution.
    """

    input_shape: tuple
    layers: list = field(default_factory=list)

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        self.validate()

    @property
    def num_layers(self):
        return len(self.layers)

    def copy(self):
        return NetworkModel(self.input_shape, [layer.copy() for layer in self.layers])

    def layer_shapes(self):
        """Per-layer (input_shape, output_shape), per sample."""
        shapes = []
        cur = self.input_shape
        for i, layer in enumerate(self.layers):
            s = layer.spec
            if s.kind is LayerKind.CONV2D:
                if len(cur) != 3:
                    raise ShapeError(f"layer {i} (conv2d): expects (H, W, C) input, got {cur}")
                h, w, c = cur
                k = s.kernel_size
                if c != s.in_channels:
                    raise ShapeError(f"layer {i} (conv2d): in_channels {s.in_channels} != input channels {c}")
                if k > min(h, w):
                    raise ShapeError(f"layer {i} (conv2d): kernel {k} larger than input {h}x{w}")
                out = (h - k + 1, w - k + 1, s.filters)
            else:
                flat = int(np.prod(cur))
                if flat != s.fan_in:
                    raise ShapeError(f"layer {i} (dense): fan_in {s.fan_in} != incoming size {flat}")
                out = (s.fan_out,)
            shapes.append((cur, out))
            cur = out
        return shapes

    def validate(self):
        seen_dense = False
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            s = layer.spec
            if s.kind is LayerKind.DENSE:
                seen_dense = True
            elif seen_dense:
                raise ShapeError(f"layer {i} (conv2d): convolutions must precede all dense layers")
            if s.activation is Activation.SOFTMAX and i != last:
                raise ShapeError(f"layer {i}: softmax is only allowed on the final layer")
            if layer.weights.shape != s.weight_shape:
                raise ShapeError(f"layer {i} ({s.kind.value}): weights {layer.weights.shape} != {s.weight_shape}")
            if layer.bias.shape != (s.units,):
                raise ShapeError(f"layer {i} ({s.kind.value}): bias {layer.bias.shape} != ({s.units},)")
        self.layer_shapes()


def init_weights(spec, scheme=InitScheme.XAVIER, seed=0):
    """Draw a weight matrix for ``spec``; deterministic given ``seed``.

    Xavier samples N(0, 2 / (fan_in + fan_out)), where a convolution's fans
    are k*k*in_channels and k*k*filters. NormalRandom samples N(0, 0.05^2).
    """
    scheme = InitScheme(scheme)
    rng = np.random.default_rng(seed)
    shape = spec.weight_shape
    if scheme is InitScheme.NORMAL_RANDOM:
        std = NORMAL_RANDOM_STD
    else:
        if spec.kind is LayerKind.DENSE:
            fan_in, fan_out = spec.fan_in, spec.fan_out
        else:
            k2 = spec.kernel_size * spec.kernel_size
            fan_in, fan_out = k2 * spec.in_channels, k2 * spec.filters
        std = math.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, std, size=shape)


def build_network(input_shape, layer_defs, init=InitScheme.XAVIER, seed=0):
    """Assemble a model from compact layer definitions.

    ``layer_defs`` items are ``{"kind": "conv2d", "filters": F,
    "kernel_size": k}`` or ``{"kind": "dense", "units": n}``; fan-in and
    channel counts are inferred. The last layer gets softmax, the others
    ReLU, unless an ``activation`` is given.  Layer ``l`` is initialised
    from the seed sequence ``(seed, l)``; biases start at zero.
    """
    cur = tuple(int(d) for d in input_shape)
    layers = []
    n = len(layer_defs)
    for i, d in enumerate(layer_defs):
        d = dict(d)
        kind = LayerKind(d.pop("kind"))
        default_act = Activation.SOFTMAX if i == n - 1 else Activation.RELU
        act = Activation(d.pop("activation", default_act))
        if kind is LayerKind.CONV2D:
            if len(cur) != 3:
                raise ShapeError(f"layer {i} (conv2d): expects (H, W, C) input, got {cur}")
            spec = LayerSpec.conv2d(int(d.pop("filters")), int(d.pop("kernel_size")), cur[2], act)
            k = spec.kernel_size
            if k > min(cur[0], cur[1]):
                raise ShapeError(f"layer {i} (conv2d): kernel {k} larger than input {cur[0]}x{cur[1]}")
            cur = (cur[0] - k + 1, cur[1] - k + 1, spec.filters)
        else:
            spec = LayerSpec.dense(int(np.prod(cur)), int(d.pop("units")), act)
            cur = (spec.fan_out,)
        if d:
            raise ValueError(f"layer {i}: unknown keys {sorted(d)}")
        w = init_weights(spec, init, seed=[int(seed), i])
        layers.append(Layer(spec, w, np.zeros(spec.units)))
    return NetworkModel(input_shape, layers)


def conv2d_forward(x, filters, bias):
    """Valid stride-1 cross-correlation.

    ``x`` is (N, H, W, C_in) or a single (H, W, C_in) image; ``filters`` is
    either the (k*k*C_in, F) matrix or a (k, k, C_in, F) tensor.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 3
    if single:
        x = x[None]
    filters = np.asarray(filters, dtype=np.float64)
    c_in = x.shape[3]
    if filters.ndim == 4:
        k = filters.shape[0]
        filters = filters.reshape(-1, filters.shape[3])
    else:
        k = int(round(math.sqrt(filters.shape[0] / c_in)))
        if k * k * c_in != filters.shape[0]:
            raise ShapeError(f"conv2d: filter matrix rows {filters.shape[0]} incompatible with {c_in} channels")
    if k > min(x.shape[1], x.shape[2]):
        raise ShapeError(f"conv2d: kernel {k} larger than input {x.shape[1]}x{x.shape[2]}")
    out = _kernels.im2col(x, k) @ filters + bias
    return out[0] if single else out


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _activate(act, z):
    if act is Activation.RELU:
        return np.maximum(z, 0.0)
    if act is Activation.SOFTMAX:
        return _softmax(z)
    return z


def _check_batch(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 2 or x.shape[1:] != model.input_shape:
        first = model.layers[0].spec.kind.value if model.layers else "input"
        raise ShapeError(f"layer 0 ({first}): batch shape {x.shape} does not match input shape (N, {model.input_shape})")
    if x.shape[0] == 0:
        raise ShapeError("empty batch")
    return x


def forward(model, x):
    """Run the network; returns ``(outputs, cache)``.

    ``cache`` holds, per layer, the layer input, the im2col patches (conv),
    the pre-activation ``z`` and the activation output.
    """
    x = _check_batch(model, x)
    cache = []
    cur = x
    for layer in model.layers:
        s = layer.spec
        entry = {"input": cur}
        if s.kind is LayerKind.CONV2D:
            cols = _kernels.im2col(cur, s.kernel_size)
            entry["cols"] = cols
            z = cols @ layer.weights + layer.bias
        else:
            flat = cur.reshape(cur.shape[0], -1)
            entry["flat"] = flat
            z = flat @ layer.weights + layer.bias
        out = _activate(s.activation, z)
        entry["z"] = z
        entry["out"] = out
        cache.append(entry)
        cur = out
    return cur, cache


def predict_proba(model, x):
    return forward(model, x)[0]


def loss_and_grads(model, x, labels_onehot):
    """Mean cross-entropy and its exact gradient.

    Returns ``(loss, grads)`` with ``grads[l] = (dW, db)`` per layer. The
    final layer must be softmax.
    """
    if not model.layers or model.layers[-1].spec.activation is not Activation.SOFTMAX:
        raise ShapeError("loss_and_grads requires a softmax final layer")
    probs, cache = forward(model, x)
    y = np.asarray(labels_onehot, dtype=np.float64)
    if y.shape != probs.shape:
        raise ShapeError(f"labels shape {y.shape} != output shape {probs.shape}")
    n = probs.shape[0]
    p_true = np.sum(probs * y, axis=1)
    loss = float(-np.mean(np.log(np.maximum(p_true, PROB_FLOOR))))

    grads = [None] * len(model.layers)
    dz = (probs - y) / n
    for li in range(len(model.layers) - 1, -1, -1):
        layer, entry = model.layers[li], cache[li]
        s = layer.spec
        if s.kind is LayerKind.CONV2D:
            cols = entry["cols"]
            kk = cols.shape[-1]
            dz2 = dz.reshape(-1, s.filters)
            dW = cols.reshape(-1, kk).T @ dz2
            db = dz2.sum(axis=0)
            if li > 0:
                dcols = dz @ layer.weights.T
                dinput = _kernels.col2im(dcols, entry["input"].shape, s.kernel_size)
        else:
            flat = entry["flat"]
            dW = flat.T @ dz
            db = dz.sum(axis=0)
            if li > 0:
                dinput = (dz @ layer.weights.T).reshape(entry["input"].shape)
        grads[li] = (dW, db)
        if li > 0:
            prev = model.layers[li - 1].spec.activation
            if prev is Activation.RELU:
                dz = dinput * (cache[li - 1]["z"] > 0)
            elif prev is Activation.IDENTITY:
                dz = dinput
            else:  # pragma: no cover - rejected by validate()
                raise ShapeError("softmax on a hidden layer")
    return loss, grads


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------

CHECKPOINT_FORMAT = "sparseprox-checkpoint"


def model_to_dict(model):
    layers = []
    for layer in model.layers:
        s = layer.spec
        d = {"kind": s.kind.value, "activation": s.activation.value}
        if s.kind is LayerKind.DENSE:
            d.update(fan_in=s.fan_in, fan_out=s.fan_out)
        else:
            d.update(filters=s.filters, kernel_size=s.kernel_size, in_channels=s.in_channels)
        d["weights"] = layer.weights.tolist()
        d["bias"] = layer.bias.tolist()
        layers.append(d)
    return {"format": CHECKPOINT_FORMAT, "version": 1, "input_shape": list(model.input_shape), "layers": layers}


def model_from_dict(d):
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a {CHECKPOINT_FORMAT} document")
    layers = []
    for ld in d["layers"]:
        ld = dict(ld)
        w = np.array(ld.pop("weights"), dtype=np.float64)
        b = np.array(ld.pop("bias"), dtype=np.float64)
        spec = LayerSpec(**ld)
        layers.append(Layer(spec, w.reshape(spec.weight_shape), b))
    return NetworkModel(tuple(d["input_shape"]), layers)


def save_checkpoint(model, path):
    # repr-based float formatting round-trips float64 exactly
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))
