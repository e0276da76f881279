"""Training-time neural rendering: composite crossings and form the loss.

Compositing is the standard front-to-back over-operator:
``C = sum_k c_k a_k prod_{j<k}(1 - a_j) + bg * prod_k(1 - a_k)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, NumericalError
from .manifold import TraceConfig, intersect_batch


@dataclass
class CompositeSample:
    color: np.ndarray
    alpha: float
    t: float


def composite(samples: list[CompositeSample], background) -> tuple[np.ndarray, float]:
    """Over-composite t-sorted samples onto a background color."""
    bg = np.asarray(background, dtype=np.float64).reshape(3)
    ts = [s.t for s in samples]
    if any(b < a for a, b in zip(ts, ts[1:])):
        raise ConfigError("composite requires samples sorted ascending by t")
    out = np.zeros(3)
    trans = 1.0
    for s in samples:
        if not 0.0 <= s.alpha <= 1.0:
            raise ConfigError(f"alpha {s.alpha} outside [0, 1]")
        out += np.asarray(s.color, dtype=np.float64) * s.alpha * trans
        trans *= 1.0 - s.alpha
    return out + bg * trans, 1.0 - trans


def composite_batch_t(rgb: Tensor, alpha: Tensor, background) -> tuple[Tensor, Tensor]:
    """Differentiable over-compositing of padded per-ray sample stacks.

    ``rgb`` is (R, L, 3) and ``alpha`` (R, L), front to back along L; padded
    slots must carry alpha == 0, which leaves the result untouched.
    Returns (colors (R, 3), accumulated alpha (R,)).
    """
    n_rays, n_slots = alpha.shape
    bg = np.asarray(background, dtype=np.float64).reshape(3)
    out = Tensor(np.zeros((n_rays, 3)))
    trans = Tensor(np.ones((n_rays, 1)))
    for k in range(n_slots):
        a_k = ad.reshape(ad.gather(alpha, (slice(None), slice(k, k + 1))),
                         (n_rays, 1))
        c_k = ad.reshape(ad.gather(rgb, (slice(None), slice(k, k + 1))),
                         (n_rays, 3))
        out = ad.add(out, ad.mul(ad.mul(c_k, a_k), trans))
        trans = ad.mul(trans, ad.sub(1.0, a_k))
    out = ad.add(out, ad.mul(trans, bg))
    acc = ad.reshape(ad.sub(1.0, trans), (n_rays,))
    return out, acc


def _pad_stacks(batch, rgb: Tensor, alpha: Tensor, vd: Tensor):
    """Scatter flattened crossings into (R, L) padded stacks (alpha=0 pad)."""
    n = len(batch.ray_index)
    n_rays = batch.n_rays
    n_slots = int(batch.counts.max()) if n else 1
    starts = np.concatenate([[0], np.cumsum(batch.counts)[:-1]])
    slot = np.arange(n) - starts[batch.ray_index]
    flat_pos = batch.ray_index * n_slots + slot

    srcmap = np.zeros(n_rays * n_slots, dtype=np.int64)
    mask = np.zeros(n_rays * n_slots, dtype=bool)
    srcmap[flat_pos] = np.arange(n)
    mask[flat_pos] = True

    if n == 0:
        a_pad = Tensor(np.zeros((n_rays, n_slots)))
        c_pad = Tensor(np.zeros((n_rays, n_slots, 3)))
        return c_pad, a_pad

    a_pad = ad.where_const(mask, ad.gather(alpha, (srcmap,)), 0.0)
    a_pad = ad.reshape(a_pad, (n_rays, n_slots))
    c_pad = ad.where_const(mask[:, None], ad.gather(rgb, (srcmap,)), 0.0)
    c_pad = ad.reshape(c_pad, (n_rays, n_slots, 3))
    return c_pad, a_pad


@dataclass
class LossBreakdown:
    total: float
    rec: float
    vd: float
    reg: float
    lambda_vd: float
    lambda_reg: float
    n_crossings: int = 0


def render_batch_t(geo, app, origins, dirs, frame_index, cfg: TraceConfig,
                   background, with_view: bool):
    """Differentiable render of a ray batch; returns (colors, acc, vd, batch)."""
    batch = intersect_batch(geo, origins, dirs, cfg)
    n = len(batch.ray_index)
    frames = np.asarray(frame_index, dtype=np.int64)
    codes = app.code_t(frames[batch.ray_index]) if n else Tensor(np.zeros((0, 32)))
    view_dir = np.asarray(dirs)[batch.ray_index] if with_view else None
    rgb, alpha, vd = app.eval_t(batch.uv, batch.s_value, codes, view_dir=view_dir)
    c_pad, a_pad = _pad_stacks(batch, rgb, alpha, vd)
    colors, acc = composite_batch_t(c_pad, a_pad, background)
    return colors, acc, vd, batch


def loss_batch(geo, app, origins, dirs, gt_pixels, frame_index,
               lambda_vd: float, lambda_reg: float, cfg: TraceConfig,
               background=(0.0, 0.0, 0.0), with_view: bool = True):
    """Eq-style training loss: l1 reconstruction + view penalty + weight reg.

    Returns (scalar loss Tensor, LossBreakdown).  The reconstruction term is
    the mean absolute error over pixels and channels; the view penalty is the
    mean squared view-dependent scalar over all composited crossings; the
    regularizer is the summed square of the geometry MLP's weight matrices
    excluding the final layer.
    """
    gt = np.asarray(gt_pixels, dtype=np.float64).reshape(-1, 3)
    if len(gt) == 0 or len(gt) != len(np.asarray(origins).reshape(-1, 3)):
        raise ConfigError("loss_batch needs matching, non-empty rays and pixels")
    colors, _, vd, batch = render_batch_t(
        geo, app, origins, dirs, frame_index, cfg, background, with_view)
    rec = ad.tmean(ad.absolute(ad.sub(colors, gt)))
    if len(batch.ray_index):
        vd_term = ad.tmean(ad.square(vd))
    else:
        vd_term = Tensor(np.zeros(()))
    reg = Tensor(np.zeros(()))
    for name in geo.mlp.hidden_weight_names():
        reg = ad.add(reg, ad.tsum(ad.square(geo.store[name])))
    total = ad.add(rec, ad.add(ad.mul(vd_term, lambda_vd),
                               ad.mul(reg, lambda_reg)))
    for label, t in (("rec", rec), ("vd", vd_term), ("reg", reg)):
        if not np.isfinite(t.data):
            raise NumericalError(f"non-finite {label} loss term")
    breakdown = LossBreakdown(
        total=float(rec.data) + lambda_vd * float(vd_term.data)
              + lambda_reg * float(reg.data),
        rec=float(rec.data), vd=float(vd_term.data), reg=float(reg.data),
        lambda_vd=lambda_vd, lambda_reg=lambda_reg,
        n_crossings=len(batch.ray_index))
    return total, breakdown


def render_ray(geo, app, ray, code_or_frame, cfg: TraceConfig,
               background=(0.0, 0.0, 0.0), with_view: bool = True) -> np.ndarray:
    """Render one ray to an RGB triple (no gradients)."""
    with ad.no_grad():
        rgb = render_rays(geo, app, ray.origin[None], ray.direction[None],
                          code_or_frame, cfg, background, with_view)
    return rgb[0]


def render_rays(geo, app, origins, dirs, code_or_frame, cfg: TraceConfig,
                background=(0.0, 0.0, 0.0), with_view: bool = True) -> np.ndarray:
    """Render a ray batch with one shared frame code (no gradients)."""
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    with ad.no_grad():
        batch = intersect_batch(geo, origins, dirs, cfg)
        n = len(batch.ray_index)
        if np.isscalar(code_or_frame) or np.asarray(code_or_frame).ndim == 0:
            code_row = app.store["embed.table"].data[int(code_or_frame) - 1]
        else:
            code_row = np.asarray(code_or_frame, dtype=np.float64)
        codes = np.broadcast_to(code_row, (n, code_row.shape[-1])).copy()
        view_dir = dirs[batch.ray_index] if with_view else None
        rgb, alpha, _ = app.eval_t(batch.uv, batch.s_value, codes,
                                   view_dir=view_dir)
        c_pad, a_pad = _pad_stacks(batch, rgb, alpha, None)
        colors, _ = composite_batch_t(c_pad, a_pad, background)
        return colors.data


def render_image(geo, app, cam, code_or_frame, cfg: TraceConfig,
                 background=(0.0, 0.0, 0.0), with_view: bool = True,
                 chunk: int = 16384) -> np.ndarray:
    """Render a full camera view to an (H, W, 3) image (no gradients)."""
    from .geometry import camera_rays

    center, dirs = camera_rays(cam)
    flat_dirs = dirs.reshape(-1, 3)
    origins = np.broadcast_to(center, flat_dirs.shape)
    out = np.empty_like(flat_dirs)
    for i in range(0, len(flat_dirs), chunk):
        out[i:i + chunk] = render_rays(
            geo, app, origins[i:i + chunk], flat_dirs[i:i + chunk],
            code_or_frame, cfg, background, with_view)
    return out.reshape(cam.height, cam.width, 3)
