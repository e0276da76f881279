"""Texture field heads, frame codes, and interpolation."""

import numpy as np
import pytest

from layerfields import autodiff as ad
from layerfields.appearance import (CODE_DIM, TextureField, embed_frame,
                                    interpolate_codes, texture_eval)
from layerfields.errors import ConfigError


def small_field(n_frames=3, seed=0):
    return TextureField(n_frames, trunk_width=32, trunk_depth=2, seed=seed)


def test_zero_initialized_heads():
    """Fresh field: rgb exactly 0, alpha exactly 0.5, vd exactly 0."""
    f = small_field()
    uv = np.array([[0.2, -0.3], [0.0, 0.0]])
    code = np.zeros((2, CODE_DIM))
    rgb, alpha, vd = f.eval_t(uv, np.array([0.5, 0.6]), code,
                              view_dir=np.array([[1.0, 0, 0], [0, 0, 1.0]]))
    np.testing.assert_array_equal(rgb.data, 0.0)
    np.testing.assert_array_equal(alpha.data, 0.5)
    np.testing.assert_array_equal(vd.data, 0.0)


def test_rgb_clamped_alpha_sigmoid_ranges():
    f = small_field()
    rng = np.random.default_rng(0)
    for name in f.store.names():
        if name.startswith("texture."):
            f.store.set(name, rng.normal(0, 2.0, f.store[name].data.shape))
    uv = rng.uniform(-1, 1, (64, 2))
    code = rng.normal(0, 1, (64, CODE_DIM))
    rgb, alpha, vd = f.eval_t(uv, np.full(64, 0.5), code)
    assert rgb.data.min() >= 0.0 and rgb.data.max() <= 1.0
    assert alpha.data.min() >= 0.0 and alpha.data.max() <= 1.0
    np.testing.assert_array_equal(vd.data, 0.0)  # view branch bypassed


def test_view_dependent_residual_is_achromatic():
    f = small_field()
    rng = np.random.default_rng(1)
    for name in f.store.names():
        if name.startswith("texture."):
            f.store.set(name, rng.normal(0, 0.5, f.store[name].data.shape))
    uv = rng.uniform(-0.9, 0.9, (8, 2))
    code = rng.normal(0, 0.1, (8, CODE_DIM))
    view = np.tile([0.0, 0.0, 1.0], (8, 1))
    rgb_no, _, _ = f.eval_t(uv, np.full(8, 0.5), code)
    rgb_v, _, vd = f.eval_t(uv, np.full(8, 0.5), code, view_dir=view)
    # the residual shifts all three channels by the same scalar
    delta = rgb_v.data - rgb_no.data
    np.testing.assert_allclose(
        delta, np.repeat(vd.data[:, None], 3, axis=1), rtol=1e-12, atol=1e-15)


def test_view_residual_unbounded():
    f = small_field()
    f.store.set("texture.vd.b0", np.array([50.0]))
    uv = np.array([[0.1, 0.1]])
    rgb, _, vd = f.eval_t(uv, np.array([0.5]), np.zeros((1, CODE_DIM)),
                          view_dir=np.array([[0.0, 0, 1.0]]))
    assert vd.data[0] == pytest.approx(50.0)
    assert rgb.data[0, 0] == pytest.approx(50.0)  # 0 + 50, not clamped


def test_non_unit_view_dir_warns_and_normalizes():
    f = small_field()
    with pytest.warns(UserWarning):
        f.eval_t(np.array([[0.0, 0.0]]), np.array([0.5]),
                 np.zeros((1, CODE_DIM)), view_dir=np.array([[0.0, 0.0, 2.0]]))


def test_frame_code_shape_and_range_check():
    f = small_field(n_frames=4)
    codes = f.code_t(np.array([1, 4]))
    assert codes.shape == (2, CODE_DIM)
    with pytest.raises(ConfigError):
        f.code_t(np.array([0]))
    with pytest.raises(ConfigError):
        f.code_t(np.array([5]))


def test_embed_frame_matches_table():
    f = small_field(n_frames=3)
    np.testing.assert_array_equal(embed_frame(f, 2),
                                  f.store["embed.table"].data[1])


def test_interpolate_codes_endpoints_and_midpoint():
    a = np.arange(CODE_DIM, dtype=np.float64)
    b = -a
    np.testing.assert_array_equal(interpolate_codes(a, b, 0.0), a)
    np.testing.assert_array_equal(interpolate_codes(a, b, 1.0), b)
    np.testing.assert_allclose(interpolate_codes(a, b, 0.5), np.zeros(CODE_DIM))
    with pytest.raises(ConfigError):
        interpolate_codes(a, b, 1.5)


def test_texture_eval_single_query():
    f = small_field()
    r, g, b, a = texture_eval(f, (0.1, 0.2), 0.5, np.zeros(CODE_DIM))
    assert (r, g, b) == (0.0, 0.0, 0.0)
    assert a == 0.5
    with pytest.raises(ConfigError):
        texture_eval(f, (1.5, 0.0), 0.5, np.zeros(CODE_DIM))


def test_rejects_zero_frames():
    with pytest.raises(ConfigError):
        TextureField(0)


def test_arch_round_trip():
    f = small_field(n_frames=2, seed=5)
    f2 = TextureField.from_arch(f.arch_spec())
    assert f2.store.names() == f.store.names()
    for k in f.store.names():
        np.testing.assert_array_equal(f.store[k].data, f2.store[k].data)


def test_gradients_flow_to_codes_and_trunk():
    f = small_field()
    uv = ad.Tensor(np.array([[0.3, 0.1]]), requires_grad=True)
    code = f.code_t(np.array([1]))
    rgb, alpha, _ = f.eval_t(uv, np.array([0.5]), code)
    ad.tsum(ad.add(ad.tsum(rgb), alpha)).backward()
    assert f.store["embed.table"].grad is not None
    assert f.store["texture.trunk.w0"].grad is not None
    assert f.store["texture.vi.w0"].grad is not None
    assert uv.grad is not None
