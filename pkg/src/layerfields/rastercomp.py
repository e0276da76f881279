"""Software reference renderer for exported assets, plus PSNR/SSIM.

Each layer is rasterized on its own (perspective-correct, nearest hit per
pixel), then the per-pixel fragments are sorted by camera-space depth and
over-composited.  This is the ground truth for what an external engine
should produce from the same asset.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ConfigError


def _gaussian_kernel(win_size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = (win_size - 1) // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    w = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return w / w.sum()


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for unit-range images (cap 99)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return 99.0
    return min(-10.0 * np.log10(mse), 99.0)


def ssim(a: np.ndarray, b: np.ndarray, k1: float = 0.01, k2: float = 0.03,
         win_size: int = 11, sigma: float = 1.5) -> float:
    """Mean local SSIM with a Gaussian window, averaged over channels.

    Matches the common reference formulation: 11x11 Gaussian (sigma 1.5),
    population covariances, border cropped to valid window positions.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigError(f"ssim: shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if a.shape[0] < win_size or a.shape[1] < win_size:
        raise ConfigError(f"ssim needs images of at least {win_size}px")
    kern = _gaussian_kernel(win_size, sigma)
    c1 = k1 * k1
    c2 = k2 * k2
    pad = (win_size - 1) // 2

    def filt(img):
        out = correlate1d(img, kern, axis=0, mode="nearest")
        return correlate1d(out, kern, axis=1, mode="nearest")

    scores = []
    for ch in range(a.shape[2]):
        x, y = a[..., ch], b[..., ch]
        ux, uy = filt(x), filt(y)
        uxx, uyy, uxy = filt(x * x), filt(y * y), filt(x * y)
        vx = uxx - ux * ux
        vy = uyy - uy * uy
        vxy = uxy - ux * uy
        s = ((2 * ux * uy + c1) * (2 * vxy + c2)) / (
            (ux * ux + uy * uy + c1) * (vx + vy + c2))
        scores.append(np.mean(s[pad:-pad, pad:-pad]))
    return float(np.mean(scores))


# -- rasterization ------------------------------------------------------------


def _project_vertices(cam, positions: np.ndarray):
    """World -> (screen xy, camera z)."""
    pc = (positions.astype(np.float64) - cam.translation) @ cam.rotation
    z = pc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = cam.fx * pc[:, 0] / z + cam.cx
        sy = cam.fy * pc[:, 1] / z + cam.cy
    return np.stack([sx, sy], axis=-1), z


def _rasterize_layer(cam, mesh, width: int, height: int):
    """Nearest-hit depth and perspective-correct UV per pixel for one layer.

    Returns (depth (H, W), uv (H, W, 2), hit (H, W)).  Back faces are kept:
    layers are open shells that must stay visible from grazing angles.
    """
    depth = np.full((height, width), np.inf)
    uv_buf = np.zeros((height, width, 2))
    hit = np.zeros((height, width), dtype=bool)
    if len(mesh.faces) == 0:
        return depth, uv_buf, hit
    scr, z = _project_vertices(cam, mesh.positions)
    inv_z = np.where(z > 1e-9, 1.0 / np.maximum(z, 1e-12), 0.0)
    uv_over_z = mesh.uvs.astype(np.float64) * inv_z[:, None]
    for f in mesh.faces:
        if np.any(z[f] <= 1e-6):
            continue  # no near-plane clipping; drop straddling triangles
        p0, p1, p2 = scr[f]
        xmin = max(int(np.floor(min(p0[0], p1[0], p2[0]))), 0)
        xmax = min(int(np.ceil(max(p0[0], p1[0], p2[0]))), width - 1)
        ymin = max(int(np.floor(min(p0[1], p1[1], p2[1]))), 0)
        ymax = min(int(np.ceil(max(p0[1], p1[1], p2[1]))), height - 1)
        if xmin > xmax or ymin > ymax:
            continue
        area = ((p1[0] - p0[0]) * (p2[1] - p0[1])
                - (p2[0] - p0[0]) * (p1[1] - p0[1]))
        if abs(area) < 1e-12:
            continue
        xs = np.arange(xmin, xmax + 1) + 0.5
        ys = np.arange(ymin, ymax + 1) + 0.5
        px, py = np.meshgrid(xs, ys)
        w0 = ((p1[0] - px) * (p2[1] - py) - (p2[0] - px) * (p1[1] - py)) / area
        w1 = ((p2[0] - px) * (p0[1] - py) - (p0[0] - px) * (p2[1] - py)) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        izf = w0 * inv_z[f[0]] + w1 * inv_z[f[1]] + w2 * inv_z[f[2]]
        zf = 1.0 / np.maximum(izf, 1e-12)
        sub_d = depth[ymin:ymax + 1, xmin:xmax + 1]
        closer = inside & (zf < sub_d)
        if not closer.any():
            continue
        uvf = (w0[..., None] * uv_over_z[f[0]] + w1[..., None] * uv_over_z[f[1]]
               + w2[..., None] * uv_over_z[f[2]]) * zf[..., None]
        sub_d[closer] = zf[closer]
        uv_buf[ymin:ymax + 1, xmin:xmax + 1][closer] = uvf[closer]
        hit[ymin:ymax + 1, xmin:xmax + 1] |= closer
    return depth, uv_buf, hit


def _sample_tile(atlas_f: np.ndarray, r0: int, c0: int, r_t: int,
                 uv: np.ndarray) -> np.ndarray:
    """Bilinear RGBA lookup of (..., 2) UVs inside one atlas tile.

    Texel centers sit at uv = -1 + 2(k + 0.5)/R_t; u indexes tile rows,
    v indexes tile columns.  Straight (non-premultiplied) interpolation.
    """
    fr = np.clip((uv[..., 0] + 1.0) * 0.5 * r_t - 0.5, 0.0, r_t - 1.0)
    fc = np.clip((uv[..., 1] + 1.0) * 0.5 * r_t - 0.5, 0.0, r_t - 1.0)
    r_lo = np.floor(fr).astype(np.int64)
    c_lo = np.floor(fc).astype(np.int64)
    r_hi = np.minimum(r_lo + 1, r_t - 1)
    c_hi = np.minimum(c_lo + 1, r_t - 1)
    wr = (fr - r_lo)[..., None]
    wc = (fc - c_lo)[..., None]
    t00 = atlas_f[r0 + r_lo, c0 + c_lo]
    t01 = atlas_f[r0 + r_lo, c0 + c_hi]
    t10 = atlas_f[r0 + r_hi, c0 + c_lo]
    t11 = atlas_f[r0 + r_hi, c0 + c_hi]
    top = t00 * (1 - wc) + t01 * wc
    bot = t10 * (1 - wc) + t11 * wc
    return top * (1 - wr) + bot * wr


def rasterize_layers(asset, cam, frame_j: int, resolution=None,
                     layer_mask=None, background=None) -> np.ndarray:
    """Render an asset frame to (H, W, 4) float RGBA in [0, 1].

    Fragments are sorted per pixel by depth before compositing, so the
    result is independent of layer submission order.  The output alpha is
    the accumulated coverage; RGB is composited premultiplied and then
    un-premultiplied (pixels with zero coverage stay transparent black
    unless a background color is supplied).
    """
    n_frames = asset.manifest["n_frames"]
    if not 1 <= frame_j <= n_frames:
        raise ConfigError(f"frame {frame_j} out of range 1..{n_frames}")
    if resolution is not None:
        cam = cam.resize(resolution[0], resolution[1])
    width, height = cam.width, cam.height
    n_layers = asset.manifest["n_layers"]
    if layer_mask is None:
        layer_mask = [True] * n_layers
    r_t = asset.manifest["texture_resolution"]
    cols = asset.manifest["atlas_cols"]
    atlas_f = asset.atlases[frame_j - 1].astype(np.float64) / 255.0

    depths = np.full((n_layers, height, width), np.inf)
    rgbas = np.zeros((n_layers, height, width, 4))
    for li in range(n_layers):
        if not layer_mask[li]:
            continue
        depth, uv, hit = _rasterize_layer(cam, asset.meshes[li], width, height)
        r0, c0 = (li // cols) * r_t, (li % cols) * r_t
        rgba = _sample_tile(atlas_f, r0, c0, r_t, uv)
        rgba[~hit] = 0.0
        depths[li] = np.where(hit, depth, np.inf)
        rgbas[li] = rgba

    order = np.argsort(depths, axis=0, kind="stable")
    d_sorted = np.take_along_axis(depths, order, axis=0)
    rgba_sorted = np.take_along_axis(rgbas, order[..., None], axis=0)
    out = np.zeros((height, width, 3))
    trans = np.ones((height, width))
    for k in range(n_layers):
        a = np.where(np.isfinite(d_sorted[k]), rgba_sorted[k, ..., 3], 0.0)
        out += rgba_sorted[k, ..., :3] * (a * trans)[..., None]
        trans = trans * (1.0 - a)
    acc = 1.0 - trans
    if background is not None:
        rgb = out + trans[..., None] * np.asarray(background, dtype=np.float64)
    else:
        # un-premultiply where covered; uncovered pixels stay transparent black
        rgb = np.where(acc[..., None] > 1e-9,
                       out / np.maximum(acc, 1e-9)[..., None], 0.0)
    return np.concatenate([np.clip(rgb, 0.0, 1.0),
                           np.clip(acc, 0.0, 1.0)[..., None]], axis=-1)


def composite_over_background(rgba: np.ndarray, background) -> np.ndarray:
    """Straight-alpha RGBA image over a constant background -> RGB."""
    bg = np.asarray(background, dtype=np.float64).reshape(3)
    a = rgba[..., 3:4]
    return rgba[..., :3] * a + bg * (1.0 - a)


@dataclass
class QualityReport:
    rows: list[dict] = dc_field(default_factory=list)

    def add(self, **kw):
        self.rows.append(kw)

    def summary(self) -> dict:
        ps = np.array([r["psnr"] for r in self.rows])
        ss = np.array([r["ssim"] for r in self.rows])
        return {"count": len(self.rows),
                "psnr_mean": float(ps.mean()), "psnr_std": float(ps.std()),
                "ssim_mean": float(ss.mean()), "ssim_std": float(ss.std())}
