"""Ray-isosurface intersection against analytic oracles."""

import numpy as np
import pytest

from layerfields import autodiff as ad
from layerfields.autodiff import Tensor
from layerfields.errors import ConfigError, NumericalError
from layerfields.geometry import Ray, UvMapper
from layerfields.manifold import (ManifoldField, TraceConfig, init_sphere_field,
                                  intersect, intersect_batch)

CENTER = np.array([-0.25, 0.0, 0.0])
BIG_BBOX = (np.full(3, -10.0), np.full(3, 10.0))


class AnalyticField:
    """Closed-form scalar field exposing the tracing protocol."""

    def __init__(self, fn, s_values, center=CENTER, bbox=BIG_BBOX):
        self.fn = fn
        self.s_values = np.asarray(s_values, dtype=np.float64)
        self.center = np.asarray(center, dtype=np.float64)
        self.bbox = (np.asarray(bbox[0], dtype=np.float64),
                     np.asarray(bbox[1], dtype=np.float64))
        self.mapper = UvMapper(self.center)

    def eval_points(self, pts, fast=False):
        return self.fn(np.asarray(pts, dtype=np.float64))

    def eval_points_t(self, pts):
        return Tensor(self.fn(np.asarray(ad.value(pts), dtype=np.float64)))


def radial_field(q):
    q = np.asarray(q, dtype=np.float64)
    return lambda p: np.linalg.norm(p - q, axis=-1)


def bisect_root(f, lo, hi, iters=80):
    flo = f(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if flo * fm <= 0:
            hi = mid
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


def test_sphere_field_exact_crossings():
    """Against an exact radial field the crossing t's solve |o + t d - q| = s."""
    field = AnalyticField(radial_field(CENTER), [0.3, 0.5])
    ray = Ray(CENTER + np.array([2.0, 0.0, 0.0]), np.array([-1.0, 0.0, 0.0]),
              0.05, 4.0)
    cfg = TraceConfig(M=512, t_near=0.05, t_far=4.0)
    samples = intersect(field, ray, cfg)
    # entering and leaving both spheres: expected t = 2 -+ s
    expect = sorted([2 - 0.5, 2 - 0.3, 2 + 0.3, 2 + 0.5])
    assert len(samples) == 4
    got = [s.t for s in samples]
    np.testing.assert_allclose(got, expect, atol=1e-3)
    assert got == sorted(got)
    assert [s.layer for s in samples] == [1, 0, 0, 1]
    # the far-side crossings are behind the chart
    assert [s.in_chart for s in samples] == [True, True, False, False]


def test_intersection_oracle_100_random_fields():
    """Linear-interpolated crossings vs bisection roots: |dt| < 1e-4 at M=256."""
    rng = np.random.default_rng(42)
    cfg = TraceConfig(M=256, t_near=0.05, t_far=3.0,
                      max_crossings_per_manifold=8)
    worst = 0.0
    checked = 0
    for trial in range(100):
        q = rng.uniform(-0.2, 0.2, 3)
        a = rng.uniform(-2, 2, 3)
        b = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.0, 0.05)

        def fn(p, q=q, a=a, b=b, amp=amp):
            p = np.asarray(p, dtype=np.float64)
            return (np.linalg.norm(p - q, axis=-1)
                    + amp * np.sin(p @ a + b))

        s_values = np.sort(rng.uniform(0.3, 1.2, rng.integers(1, 4)))
        s_values = np.unique(s_values)
        field = AnalyticField(fn, s_values)
        o = q + rng.uniform(1.5, 2.0) * _unit(rng.normal(size=3))
        # small impact parameter keeps every crossing transverse, where the
        # linear-interpolation estimator is well-conditioned
        d = _unit(q - o + rng.normal(0, 0.05, 3))
        batch = intersect_batch(field, o[None], d[None], cfg,
                                keep_out_of_chart=True)
        dt = (cfg.t_far - cfg.t_near) / (cfg.M - 1)
        for i in range(len(batch.ray_index)):
            t_lin = float(batch.t.data[i])
            s = batch.s_value[i]

            def g(t, s=s):
                return fn(o + t * d) - s

            lo, hi = t_lin - dt, t_lin + dt
            if g(lo) * g(hi) > 0:
                continue  # tangent-grazing bracket; no isolated root
            t_ref = bisect_root(g, lo, hi)
            worst = max(worst, abs(t_lin - t_ref))
            checked += 1
    assert checked > 200
    assert worst < 1e-4


def _unit(v):
    return v / np.linalg.norm(v)


def test_crossing_cap_per_manifold():
    # wiggly field crossing one level many times along the ray
    def fn(p):
        return 0.5 + 0.4 * np.sin(8.0 * np.pi * np.asarray(p)[..., 0])

    field = AnalyticField(fn, [0.5])
    cfg = TraceConfig(M=1024, t_near=0.05, t_far=3.0,
                      max_crossings_per_manifold=4)
    o = np.array([[2.0, 0.1, 0.0]])
    d = np.array([[-1.0, 0.0, 0.0]])
    batch = intersect_batch(field, o, d, cfg, keep_out_of_chart=True)
    assert len(batch.ray_index) == 4


def test_crossings_sorted_by_ray_then_t():
    field = AnalyticField(radial_field(CENTER), [0.3, 0.45, 0.6])
    rng = np.random.default_rng(0)
    o = CENTER + rng.uniform(1.2, 2.0, (16, 3)) * np.array([1, 0.3, 0.3])
    d = _unit_rows(CENTER - o + rng.normal(0, 0.1, (16, 3)))
    cfg = TraceConfig(M=128, t_near=0.05, t_far=4.0)
    batch = intersect_batch(field, o, d, cfg, keep_out_of_chart=True)
    assert np.all(np.diff(batch.ray_index) >= 0)
    t = batch.t.data
    for r in range(16):
        tr = t[batch.ray_index == r]
        assert np.all(np.diff(tr) >= 0)
    np.testing.assert_array_equal(
        np.bincount(batch.ray_index, minlength=16), batch.counts)


def _unit_rows(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def test_out_of_chart_dropped_by_default():
    field = AnalyticField(radial_field(CENTER), [0.4])
    o = CENTER + np.array([[2.0, 0.0, 0.0]])
    d = np.array([[-1.0, 0.0, 0.0]])
    cfg = TraceConfig(M=256, t_near=0.05, t_far=4.0)
    kept = intersect_batch(field, o, d, cfg)
    both = intersect_batch(field, o, d, cfg, keep_out_of_chart=True)
    assert len(kept.ray_index) == 1 and kept.in_chart.all()
    assert len(both.ray_index) == 2


def test_miss_produces_no_crossings():
    field = AnalyticField(radial_field(CENTER), [0.2])
    o = np.array([[5.0, 5.0, 5.0]])
    d = np.array([[0.0, 0.0, 1.0]])
    cfg = TraceConfig(M=64, t_near=0.05, t_far=1.0)
    batch = intersect_batch(field, o, d, cfg, keep_out_of_chart=True)
    assert len(batch.ray_index) == 0
    assert batch.counts.sum() == 0


def test_intersection_gradient_matches_finite_difference():
    """d t* / d field-params via the graph vs central differences."""
    geo = init_sphere_field(CENTER, (0.4, 0.6), seed=0, n_manifolds=2,
                            widths=(16, 16), enc_l=2, fit_steps=400,
                            fit_batch=256, tol=0.2)
    cfg = TraceConfig(M=64, t_near=0.05, t_far=3.0, fast_detection=False)
    o = CENTER + np.array([[1.5, 0.1, -0.05]])
    d = _unit_rows(CENTER - o)

    def loss():
        b = intersect_batch(geo, o, d, cfg, keep_out_of_chart=True)
        return ad.tsum(b.t)

    total = loss()
    geo.store.zero_grads()
    total.backward()
    rng = np.random.default_rng(1)
    for name, t in geo.store.items():
        flat = t.data.reshape(-1)
        k = int(rng.integers(flat.size))
        h = 1e-6
        old = flat[k]
        flat[k] = old + h
        fp = float(loss().data)
        flat[k] = old - h
        fm = float(loss().data)
        flat[k] = old
        fd = (fp - fm) / (2 * h)
        an = float(t.grad.reshape(-1)[k])
        assert an == pytest.approx(fd, rel=1e-5, abs=1e-9), name


def test_manifold_field_validation():
    with pytest.raises(ConfigError):
        ManifoldField([0.5, 0.4], CENTER)
    with pytest.raises(ConfigError):
        ManifoldField([], CENTER)


def test_trace_config_validation():
    with pytest.raises(ConfigError):
        TraceConfig(M=1)
    with pytest.raises(ConfigError):
        TraceConfig(t_near=1.0, t_far=0.5)


def test_sphere_init_fits_radial_distance():
    geo = init_sphere_field(CENTER, (0.52, 0.67), seed=3, n_manifolds=4,
                            widths=(32, 32), enc_l=4, fit_steps=1500,
                            tol=0.02)
    assert len(geo.s_values) == 4
    np.testing.assert_allclose(geo.s_values, np.linspace(0.52, 0.67, 4))
    rng = np.random.default_rng(0)
    pts = rng.uniform(-0.7, 0.7, (2000, 3))
    target = np.linalg.norm(pts - CENTER, axis=-1)
    err = np.abs(geo.eval_points(pts) - target).mean()
    assert err < 0.02


def test_sphere_init_raises_when_unreachable():
    with pytest.raises(NumericalError):
        init_sphere_field(CENTER, (0.4, 0.6), seed=0, n_manifolds=2,
                          widths=(8,), enc_l=0, fit_steps=5, tol=1e-6)


def test_fast_eval_close_to_double():
    geo = init_sphere_field(CENTER, (0.4, 0.6), seed=0, n_manifolds=2,
                            widths=(16, 16), enc_l=2, fit_steps=200, tol=1.0)
    pts = np.random.default_rng(0).uniform(-0.5, 0.5, (500, 3))
    a = geo.eval_points(pts)
    b = geo.eval_points(pts, fast=True)
    assert np.abs(a - b).max() < 1e-4


def test_arch_spec_round_trip():
    geo = ManifoldField([0.4, 0.6], CENTER, widths=(8, 8), enc_l=2, seed=9)
    geo2 = ManifoldField.from_arch(geo.arch_spec())
    pts = np.random.default_rng(0).uniform(-0.5, 0.5, (50, 3))
    np.testing.assert_array_equal(geo.eval_points(pts), geo2.eval_points(pts))
