import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparseprox import _kernels, nn
from sparseprox.data import one_hot
from sparseprox.errors import ShapeError


def naive_conv(x, k4, bias):
    # direct loop over output positions, independent of im2col
    n, h, w, c = x.shape
    k, _, _, f = k4.shape
    out = np.zeros((n, h - k + 1, w - k + 1, f))
    for b in range(n):
        for i in range(h - k + 1):
            for j in range(w - k + 1):
                patch = x[b, i : i + k, j : j + k, :]
                for q in range(f):
                    out[b, i, j, q] = np.sum(patch * k4[..., q]) + bias[q]
    return out


def toy_model(seed=0, classes=3):
    return nn.build_network(
        (6, 6, 2),
        [
            {"kind": "conv2d", "filters": 4, "kernel_size": 3},
            {"kind": "dense", "units": 32},
            {"kind": "dense", "units": classes},
        ],
        seed=seed,
    )


def numeric_grads(model, x, y, eps=1e-6):
    out = []
    for layer in model.layers:
        pair = []
        for arr in (layer.weights, layer.bias):
            g = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                old = arr[idx]
                arr[idx] = old + eps
                lp = nn.loss_and_grads(model, x, y)[0]
                arr[idx] = old - eps
                lm = nn.loss_and_grads(model, x, y)[0]
                arr[idx] = old
                g[idx] = (lp - lm) / (2 * eps)
            pair.append(g)
        out.append(tuple(pair))
    return out


def test_finite_difference_gradients():
    rng = np.random.default_rng(0)
    model = toy_model()
    for layer in model.layers:
        layer.bias[:] = rng.normal(scale=0.1, size=layer.bias.shape)
    x = rng.normal(size=(5, 6, 6, 2))
    y = one_hot(rng.integers(0, 3, size=5), 3)
    _, grads = nn.loss_and_grads(model, x, y)
    num = numeric_grads(model, x, y)
    for (dW, db), (nW, nb) in zip(grads, num):
        for a, b in ((dW, nW), (db, nb)):
            denom = np.maximum(np.abs(a) + np.abs(b), 1e-8)
            assert np.max(np.abs(a - b) / denom) <= 1e-4


def test_conv_example_ones_kernel():
    x = np.arange(1, 10, dtype=float).reshape(1, 3, 3, 1)
    out = nn.conv2d_forward(x, np.ones((2, 2, 1, 1)), np.zeros(1))
    np.testing.assert_array_equal(out[0, :, :, 0], [[12, 16], [24, 28]])
    # same result from the flattened filter matrix
    out2 = nn.conv2d_forward(x[0], np.ones((4, 1)), np.zeros(1))
    np.testing.assert_array_equal(out2[:, :, 0], [[12, 16], [24, 28]])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(3, 7), st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(0, 10**6))
def test_conv_matches_direct_loop(n, size, c, f, k, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, size, size, c))
    k4 = rng.normal(size=(k, k, c, f))
    bias = rng.normal(size=f)
    np.testing.assert_allclose(nn.conv2d_forward(x, k4, bias), naive_conv(x, k4, bias), rtol=1e-12, atol=1e-12)


def test_conv_kernel_too_large():
    with pytest.raises(ShapeError):
        nn.conv2d_forward(np.zeros((1, 2, 2, 1)), np.ones((3, 3, 1, 1)), np.zeros(1))


def test_softmax_rows_sum_to_one():
    model = toy_model()
    x = np.random.default_rng(1).normal(scale=10, size=(8, 6, 6, 2))
    p = nn.predict_proba(model, x)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(p >= 0)


def test_forward_deterministic():
    x = np.random.default_rng(2).normal(size=(4, 6, 6, 2))
    a = nn.predict_proba(toy_model(seed=3), x)
    b = nn.predict_proba(toy_model(seed=3), x)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, nn.predict_proba(toy_model(seed=4), x))


def test_zeroed_weights_match_pruned_network():
    # zeroing a hidden unit's row and column equals deleting the unit
    rng = np.random.default_rng(5)
    model = nn.build_network((5,), [{"kind": "dense", "units": 4}, {"kind": "dense", "units": 3}], seed=0)
    model.layers[0].weights[:, 2] = 0
    model.layers[0].bias[2] = 0
    model.layers[1].weights[2, :] = 0
    keep = [0, 1, 3]
    small = nn.NetworkModel(
        (5,),
        [
            nn.Layer(nn.LayerSpec.dense(5, 3), model.layers[0].weights[:, keep], model.layers[0].bias[keep]),
            nn.Layer(
                nn.LayerSpec.dense(3, 3, nn.Activation.SOFTMAX), model.layers[1].weights[keep], model.layers[1].bias
            ),
        ],
    )
    x = rng.normal(size=(10, 5))
    np.testing.assert_allclose(nn.predict_proba(model, x), nn.predict_proba(small, x), atol=1e-14)


def test_xavier_variance():
    spec = nn.LayerSpec.dense(100, 100)
    w = nn.init_weights(spec, "xavier", seed=0)
    assert abs(w.var() - 0.01) <= 0.2 * 0.01
    w = nn.init_weights(spec, "normal", seed=0)
    assert abs(w.std() - 0.05) <= 0.2 * 0.05


def test_conv_xavier_fans():
    spec = nn.LayerSpec.conv2d(16, 3, 4)
    w = nn.init_weights(spec, "xavier", seed=0)
    assert w.shape == (36, 16)
    expected = 2.0 / (36 + 9 * 16)
    assert abs(w.var() - expected) <= 0.2 * expected


def test_checkpoint_round_trip(tmp_path):
    model = toy_model(seed=7)
    path = tmp_path / "ck.json"
    nn.save_checkpoint(model, path)
    back = nn.load_checkpoint(path)
    for a, b in zip(model.layers, back.layers):
        assert a.spec == b.spec
        np.testing.assert_array_equal(a.weights, b.weights)
        np.testing.assert_array_equal(a.bias, b.bias)
    nn.save_checkpoint(back, tmp_path / "ck2.json")
    assert path.read_bytes() == (tmp_path / "ck2.json").read_bytes()


def test_checkpoint_rejects_foreign_document():
    with pytest.raises(ValueError):
        nn.model_from_dict({"format": "other", "layers": []})


def test_shape_errors_name_the_layer():
    with pytest.raises(ShapeError, match="layer 1"):
        nn.NetworkModel(
            (4,),
            [
                nn.Layer(nn.LayerSpec.dense(4, 3), np.zeros((4, 3)), np.zeros(3)),
                nn.Layer(nn.LayerSpec.dense(5, 2, "softmax"), np.zeros((5, 2)), np.zeros(2)),
            ],
        )
    with pytest.raises(ShapeError, match="layer 0"):
        nn.NetworkModel((4,), [nn.Layer(nn.LayerSpec.dense(4, 3), np.zeros((3, 3)), np.zeros(3))])
    with pytest.raises(ShapeError, match="layer 0"):
        nn.predict_proba(toy_model(), np.zeros((2, 5, 5, 2)))


def test_conv_after_dense_rejected():
    with pytest.raises(ShapeError):
        nn.NetworkModel(
            (4,),
            [
                nn.Layer(nn.LayerSpec.dense(4, 9), np.zeros((4, 9)), np.zeros(9)),
                nn.Layer(nn.LayerSpec.conv2d(1, 1, 1), np.zeros((1, 1)), np.zeros(1)),
            ],
        )


def test_softmax_only_on_last_layer():
    with pytest.raises(ShapeError):
        nn.build_network((4,), [{"kind": "dense", "units": 3, "activation": "softmax"}, {"kind": "dense", "units": 2}])


def test_loss_floor_keeps_loss_finite():
    model = nn.build_network((2,), [{"kind": "dense", "units": 2}], seed=0)
    model.layers[0].weights[:] = [[1000.0, -1000.0], [0.0, 0.0]]
    loss, _ = nn.loss_and_grads(model, np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]))
    assert loss == pytest.approx(-np.log(1e-12))


@pytest.mark.parametrize("backend", ["numpy", "numba"])
def test_im2col_col2im_adjoint(backend):
    im2col = _kernels.BACKENDS[backend]["im2col"]
    col2im = _kernels.BACKENDS[backend]["col2im"]
    rng = np.random.default_rng(9)
    x = rng.normal(size=(2, 5, 6, 3))
    cols = im2col(x, 2)
    y = rng.normal(size=cols.shape)
    # <im2col(x), y> == <x, col2im(y)>
    assert np.sum(cols * y) == pytest.approx(np.sum(x * col2im(y, x.shape, 2)), rel=1e-12)


def test_backends_bitwise_equal_for_im2col():
    rng = np.random.default_rng(10)
    x = rng.normal(size=(3, 7, 7, 2))
    a = _kernels.BACKENDS["numpy"]["im2col"](x, 3)
    b = _kernels.BACKENDS["numba"]["im2col"](x, 3)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(
        _kernels.BACKENDS["numpy"]["col2im"](a, x.shape, 3), _kernels.BACKENDS["numba"]["col2im"](b, x.shape, 3)
    )
