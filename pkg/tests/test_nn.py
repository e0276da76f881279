"""Parameter store, encodings, MLP, Adam, and checkpoint blob tests."""

import numpy as np
import pytest

from layerfields import autodiff as ad
from layerfields import nn
from layerfields.autodiff import Tensor
from layerfields.errors import ConfigError, DataError, NumericalError


def test_param_store_rejects_duplicates():
    s = nn.ParamStore()
    s.add("w", np.ones(2))
    with pytest.raises(ConfigError):
        s.add("w", np.ones(2))


def test_param_store_set_shape_check():
    s = nn.ParamStore()
    s.add("w", np.ones((2, 3)))
    with pytest.raises(ConfigError):
        s.set("w", np.ones((3, 2)))


def test_encoding_out_dim():
    assert nn.Encoding(10, include_identity=True).out_dim(2) == 42
    assert nn.Encoding(4, include_identity=True).out_dim(1) == 9
    assert nn.Encoding(4, include_identity=False).out_dim(3) == 24


def test_positional_encode_zero_input():
    # x=0: identity channel 0, then (sin, cos) pairs = (0, 1) per frequency
    enc = nn.Encoding(2, include_identity=True)
    out = nn.positional_encode(np.array([[0.0]]), enc)
    np.testing.assert_allclose(out.data, [[0.0, 0.0, 1.0, 0.0, 1.0]])


def test_positional_encode_frequencies_doubling():
    enc = nn.Encoding(3, include_identity=False)
    x = 0.3
    out = nn.positional_encode(np.array([[x]]), enc).data[0]
    expect = []
    for k in range(3):
        f = (2.0 ** k) * np.pi
        expect += [np.sin(f * x), np.cos(f * x)]
    np.testing.assert_allclose(out, expect, rtol=1e-12)


def test_positional_encode_numeric_twin_matches_graph():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (17, 3))
    enc = nn.Encoding(6, include_identity=True)
    a = nn.positional_encode(x, enc).data
    b = nn.positional_encode_np(x, enc)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=0)


def test_mlp_init_bounds_and_shapes():
    store = nn.ParamStore()
    mlp = nn.MLP(store, "f", [5, 8, 2], "relu", np.random.default_rng(0))
    w0 = store["f.w0"].data
    assert w0.shape == (5, 8)
    assert np.all(np.abs(w0) <= 1.0 / np.sqrt(5))
    assert store["f.b1"].data.shape == (2,)
    out = mlp(Tensor(np.zeros((3, 5))))
    assert out.shape == (3, 2)


def test_mlp_rejects_bad_input_dim():
    store = nn.ParamStore()
    mlp = nn.MLP(store, "f", [5, 2], "relu", np.random.default_rng(0))
    with pytest.raises(ConfigError):
        mlp(Tensor(np.zeros((3, 4))))


def test_mlp_forward_np_float64_matches_graph():
    store = nn.ParamStore()
    mlp = nn.MLP(store, "f", [4, 16, 16, 1], "softplus", np.random.default_rng(1))
    x = np.random.default_rng(2).normal(size=(11, 4))
    np.testing.assert_allclose(mlp.forward_np(x), mlp(Tensor(x)).data,
                               rtol=1e-12, atol=0)


def test_mlp_forward_np_float32_close():
    store = nn.ParamStore()
    mlp = nn.MLP(store, "f", [4, 32, 1], "softplus", np.random.default_rng(1))
    x = np.random.default_rng(2).normal(size=(11, 4))
    f32 = mlp.forward_np(x.astype(np.float32))
    assert f32.dtype == np.float32
    np.testing.assert_allclose(f32, mlp(Tensor(x)).data, rtol=1e-4, atol=1e-5)


def test_hidden_weight_names_excludes_final_layer():
    store = nn.ParamStore()
    mlp = nn.MLP(store, "f", [3, 7, 7, 2], "relu", np.random.default_rng(0))
    assert mlp.hidden_weight_names() == ["f.w0", "f.w1"]


def test_adam_minimizes_quadratic():
    store = nn.ParamStore()
    x = store.add("x", np.array([5.0, -3.0]))
    opt = nn.Adam(store)
    for _ in range(800):
        store.zero_grads()
        loss = ad.tsum(ad.square(x))
        loss.backward()
        opt.step(0.05)
    assert float(np.abs(x.data).max()) < 1e-3


def test_adam_rejects_nonfinite_gradient():
    store = nn.ParamStore()
    x = store.add("x", np.ones(2))
    x.grad = np.array([np.nan, 0.0])
    with pytest.raises(NumericalError):
        nn.Adam(store).step(0.01)


def test_adam_skips_parameters_without_gradient():
    store = nn.ParamStore()
    x = store.add("x", np.ones(2))
    before = x.data.copy()
    nn.Adam(store).step(0.01)
    np.testing.assert_array_equal(x.data, before)


def test_blob_round_trip_bit_exact(tmp_path):
    path = tmp_path / "b.bin"
    rng = np.random.default_rng(0)
    arrays = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(7,)),
              "s": np.array(2.5)}
    header = {"kind": "t", "nested": {"x": [1, 2, 3]}}
    nn.save_blob(path, header, arrays)
    h2, a2 = nn.load_blob(path)
    assert h2["kind"] == "t" and h2["nested"] == {"x": [1, 2, 3]}
    for k in arrays:
        assert a2[k].tobytes() == np.ascontiguousarray(arrays[k]).tobytes()


def test_blob_rejects_bad_magic(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(DataError):
        nn.load_blob(p)


def test_blob_rejects_truncation_and_trailing(tmp_path):
    p = tmp_path / "x.bin"
    nn.save_blob(p, {"k": 1}, {"a": np.ones(8)})
    raw = p.read_bytes()
    p.write_bytes(raw[:-4])
    with pytest.raises(DataError):
        nn.load_blob(p)
    p.write_bytes(raw + b"\x00")
    with pytest.raises(DataError):
        nn.load_blob(p)
