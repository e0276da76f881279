"""Cameras, rays, the spherical UV chart, and hemisphere sampling.

All types are immutable value types.  The UV chart projects a point through
a fixed center ``c`` onto the unit sphere and maps the frontal hemisphere
(x' > 0) to [-1, 1]^2 via ``u = (2/pi) asin(z')``, ``v = (2/pi) atan(y'/x')``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DegeneratePointError, OutOfChartError

_POLE_EPS = 1e-12


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: x right, y down, z forward in camera coordinates.

    ``rotation`` and ``translation`` are world-from-camera: a camera-space
    point p maps to ``rotation @ p + translation``; the camera center is
    ``translation``.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray
    translation: np.ndarray
    cam_id: str = ""

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        if self.fx <= 0 or self.fy <= 0:
            raise ConfigError("focal lengths must be positive")
        err = np.linalg.norm(R.T @ R - np.eye(3))
        if err > 1e-9:
            raise ConfigError(
                f"camera rotation not orthonormal (||R'R - I|| = {err:.2e})")

    @property
    def center(self) -> np.ndarray:
        return self.translation

    def resize(self, width: int, height: int) -> "Camera":
        """Rescale intrinsics to a new pixel resolution (similarity)."""
        sx, sy = width / self.width, height / self.height
        return Camera(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy,
                      width, height, self.rotation, self.translation, self.cam_id)

    def project(self, p: np.ndarray) -> np.ndarray:
        """World point(s) (..., 3) -> pixel coordinates (..., 2)."""
        p = np.asarray(p, dtype=np.float64)
        pc = (p - self.translation) @ self.rotation
        x = self.fx * pc[..., 0] / pc[..., 2] + self.cx
        y = self.fy * pc[..., 1] / pc[..., 2] + self.cy
        return np.stack([x, y], axis=-1)

    def pixel_dirs(self, px: np.ndarray, py: np.ndarray) -> np.ndarray:
        """Unit world-space directions through the given pixel centers."""
        px = np.asarray(px, dtype=np.float64)
        py = np.asarray(py, dtype=np.float64)
        d = np.stack([(px - self.cx) / self.fx,
                      (py - self.cy) / self.fy,
                      np.ones_like(px)], axis=-1)
        d = d @ self.rotation.T
        return d / np.linalg.norm(d, axis=-1, keepdims=True)


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_near: float = 0.0
    t_far: float = np.inf

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64).reshape(3)
        d = np.asarray(self.direction, dtype=np.float64).reshape(3)
        n = np.linalg.norm(d)
        if abs(n - 1.0) > 1e-12:
            d = d / n
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)
        if not self.t_near < self.t_far:
            raise ConfigError("ray requires t_near < t_far")

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


def camera_ray(cam: Camera, pixel: tuple[float, float]) -> Ray:
    """Backproject a pixel center into a world-space ray."""
    px, py = pixel
    if not (0 <= px < cam.width and 0 <= py < cam.height):
        raise ConfigError(f"pixel {pixel} outside {cam.width}x{cam.height} image")
    d = cam.pixel_dirs(np.float64(px), np.float64(py))
    return Ray(cam.center, d)


def camera_rays(cam: Camera) -> tuple[np.ndarray, np.ndarray]:
    """Origins (3,) broadcastable and unit directions (H, W, 3) for all pixels."""
    py, px = np.mgrid[0:cam.height, 0:cam.width].astype(np.float64)
    dirs = cam.pixel_dirs(px, py)
    return cam.center, dirs


@dataclass(frozen=True)
class UvMapper:
    """Spherical UV chart through a fixed projection center."""

    center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(
            self, "center", np.asarray(self.center, dtype=np.float64).reshape(3))

    def project(self, p: np.ndarray) -> np.ndarray:
        """Point(s) (..., 3) -> (u, v) in [-1, 1]^2; raises off-chart."""
        p = np.asarray(p, dtype=np.float64)
        rel = p - self.center
        norm = np.linalg.norm(rel, axis=-1)
        if np.any(norm < 1e-9):
            raise DegeneratePointError("point coincides with projection center")
        pn = rel / norm[..., None]
        z = pn[..., 2]
        at_pole = np.abs(z) >= 1.0 - _POLE_EPS
        if np.any(~at_pole & (pn[..., 0] <= 0.0)):
            raise OutOfChartError("point behind the chart's frontal half-space")
        u = (2.0 / np.pi) * np.arcsin(np.clip(z, -1.0, 1.0))
        # v at the poles is defined as 0
        with np.errstate(divide="ignore", invalid="ignore"):
            v = (2.0 / np.pi) * np.arctan(pn[..., 1] / pn[..., 0])
        v = np.where(at_pole, 0.0, v)
        u = np.where(at_pole, np.sign(z), u)
        return np.stack([u, v], axis=-1)

    def project_masked(self, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Like project but returns (uv, in_chart mask) instead of raising."""
        p = np.asarray(p, dtype=np.float64)
        rel = p - self.center
        norm = np.linalg.norm(rel, axis=-1)
        safe = norm >= 1e-9
        pn = rel / np.where(safe, norm, 1.0)[..., None]
        ok = safe & (pn[..., 0] > 0.0)
        u = (2.0 / np.pi) * np.arcsin(np.clip(pn[..., 2], -1.0, 1.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            v = (2.0 / np.pi) * np.arctan(pn[..., 1] / np.where(ok, pn[..., 0], 1.0))
        uv = np.stack([u, np.where(ok, v, 0.0)], axis=-1)
        return uv, ok

    def project_t(self, p: Tensor) -> Tensor:
        """Differentiable chart projection for in-chart points (..., 3)."""
        rel = ad.sub(p, self.center)
        norm = ad.sqrt(ad.tsum(ad.square(rel), axis=-1, keepdims=True))
        pn = ad.div(rel, norm)
        x = pn[..., 0]
        y = pn[..., 1]
        z = pn[..., 2]
        u = ad.mul(ad.arcsin(z), 2.0 / np.pi)
        v = ad.mul(ad.arctan(ad.div(y, x)), 2.0 / np.pi)
        lead = u.shape + (1,)
        return ad.concat([ad.reshape(u, lead), ad.reshape(v, lead)], axis=-1)

    def unproject(self, u, v) -> np.ndarray:
        """(u, v) in [-1, 1]^2 -> unit vector(s) from the center, (..., 3)."""
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        elev = u * (np.pi / 2.0)
        azim = v * (np.pi / 2.0)
        ce = np.cos(elev)
        return np.stack([ce * np.cos(azim), ce * np.sin(azim), np.sin(elev)],
                        axis=-1)


def uv_project(p: np.ndarray, mapper: UvMapper) -> tuple[float, float]:
    uv = mapper.project(p)
    return float(uv[..., 0]), float(uv[..., 1])


def uv_unproject(u: float, v: float, mapper: UvMapper) -> np.ndarray:
    return mapper.unproject(u, v)


def hemisphere_grid(R: int, mapper: UvMapper, clamp: bool = False):
    """R x R grid of inward rays over the frontal hemisphere.

    Elevation (index i, maps to u) and azimuth (index j, maps to v) are
    uniform over [-pi/2, pi/2].  With ``clamp`` the elevations are scaled to
    |u| <= 1 - 1/R so the singular pole rows are avoided (used by the
    exporter).  Returns (origins (R, R, 3), directions (R, R, 3),
    uv (R, R, 2)); each ray points from the unit sphere toward the center,
    so every hit along it shares the grid's own UV.
    """
    if R < 2:
        raise ConfigError("hemisphere grid needs R >= 2")
    u = np.linspace(-1.0, 1.0, R)
    if clamp:
        u = u * (1.0 - 1.0 / R)
    v = np.linspace(-1.0, 1.0, R)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    dirs_out = mapper.unproject(uu, vv)  # (R, R, 3) unit, from center outward
    origins = mapper.center + dirs_out
    directions = -dirs_out
    uv = np.stack([uu, vv], axis=-1)
    return origins, directions, uv


def hemisphere_rays(R: int, mapper: UvMapper, clamp: bool = False) -> list[Ray]:
    """hemisphere_grid flattened into Ray objects (row-major in (u, v))."""
    origins, directions, _ = hemisphere_grid(R, mapper, clamp=clamp)
    return [Ray(o, d) for o, d in
            zip(origins.reshape(-1, 3), directions.reshape(-1, 3))]


def ray_box_range(origin, direction, lo, hi):
    """Entry/exit parameters of rays against an axis-aligned box.

    Vectorized over leading axes; returns (t0, t1, hit mask) with t0 >= 0.
    """
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        ta = (lo - o) * inv
        tb = (hi - o) * inv
    # parallel-axis rays: +-inf bounds sort out correctly except 0*inf
    ta = np.where(np.isnan(ta), -np.inf, ta)
    tb = np.where(np.isnan(tb), np.inf, tb)
    t0 = np.maximum(np.minimum(ta, tb).max(axis=-1), 0.0)
    t1 = np.maximum(ta, tb).min(axis=-1)
    return t0, t1, t1 > t0
