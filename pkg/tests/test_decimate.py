"""Quadric edge-collapse simplification."""

import numpy as np
import pytest

from layerfields.decimate import Mesh, decimate
from layerfields.errors import ConfigError


def sphere_mesh(n_lat=16, n_lon=24, radius=1.0):
    """Closed UV sphere: pole fans plus quad strips."""
    verts = [np.array([0.0, 0.0, radius]), np.array([0.0, 0.0, -radius])]
    ring_start = []
    for i in range(1, n_lat):
        phi = np.pi * i / n_lat
        ring_start.append(len(verts))
        for j in range(n_lon):
            th = 2 * np.pi * j / n_lon
            verts.append(radius * np.array([np.sin(phi) * np.cos(th),
                                            np.sin(phi) * np.sin(th),
                                            np.cos(phi)]))
    faces = []
    for j in range(n_lon):
        jn = (j + 1) % n_lon
        faces.append((0, ring_start[0] + j, ring_start[0] + jn))
        faces.append((1, ring_start[-1] + jn, ring_start[-1] + j))
    for i in range(len(ring_start) - 1):
        a, b = ring_start[i], ring_start[i + 1]
        for j in range(n_lon):
            jn = (j + 1) % n_lon
            faces.append((a + j, b + j, b + jn))
            faces.append((a + j, b + jn, a + jn))
    pos = np.asarray(verts)
    uv = np.zeros((len(pos), 2))
    return Mesh(pos, uv, np.asarray(faces, dtype=np.int64))


def grid_mesh(n=12):
    """Flat open square [0,1]^2 in the z=0 plane."""
    xs = np.linspace(0, 1, n)
    xx, yy = np.meshgrid(xs, xs, indexing="ij")
    pos = np.stack([xx, yy, np.zeros_like(xx)], axis=-1).reshape(-1, 3)
    faces = []
    for i in range(n - 1):
        for j in range(n - 1):
            v = i * n + j
            faces.append((v, v + n, v + n + 1))
            faces.append((v, v + n + 1, v + 1))
    return Mesh(pos, np.zeros((len(pos), 2)), np.asarray(faces, dtype=np.int64))


def euler_characteristic(mesh):
    edges = set()
    for a, b, c in mesh.faces:
        for u, w in ((a, b), (b, c), (c, a)):
            edges.add((min(u, w), max(u, w)))
    return len(mesh.positions) - len(edges) + mesh.n_faces


def face_areas(mesh):
    p = mesh.positions
    f = mesh.faces
    n = np.cross(p[f[:, 1]] - p[f[:, 0]], p[f[:, 2]] - p[f[:, 0]])
    return 0.5 * np.linalg.norm(n, axis=-1)


def test_budget_at_or_above_is_identity_copy():
    m = sphere_mesh(6, 8)
    out = decimate(m, m.n_faces)
    assert out is not m
    np.testing.assert_array_equal(out.positions, m.positions)
    np.testing.assert_array_equal(out.faces, m.faces)


def test_invalid_budget():
    with pytest.raises(ConfigError):
        decimate(sphere_mesh(4, 6), 0)


def test_sphere_decimation_stays_on_sphere():
    m = sphere_mesh()
    assert m.n_faces == 2 * 24 + 2 * 14 * 24  # 720
    out = decimate(m, 200)
    assert out.n_faces <= 200
    # indices valid and faces non-degenerate
    assert out.faces.min() >= 0 and out.faces.max() < len(out.positions)
    assert face_areas(out).min() > 1e-12
    # collapsed vertices stay near the unit sphere
    r = np.linalg.norm(out.positions, axis=-1)
    assert np.abs(r - 1.0).max() < 0.08


def test_sphere_decimation_preserves_topology():
    m = sphere_mesh(12, 16)
    out = decimate(m, 150)
    assert euler_characteristic(m) == 2
    assert euler_characteristic(out) == 2


def test_total_area_roughly_preserved():
    m = sphere_mesh()
    out = decimate(m, 250)
    a0, a1 = face_areas(m).sum(), face_areas(out).sum()
    assert abs(a1 - a0) / a0 < 0.1


def test_open_grid_boundary_preserved():
    m = grid_mesh()
    out = decimate(m, 60)
    assert out.n_faces <= 60
    # boundary quadrics keep the square footprint and the plane
    assert np.abs(out.positions[:, 2]).max() < 1e-6
    lo = out.positions[:, :2].min(axis=0)
    hi = out.positions[:, :2].max(axis=0)
    np.testing.assert_allclose(lo, [0, 0], atol=0.02)
    np.testing.assert_allclose(hi, [1, 1], atol=0.02)
    # the four corners survive (within tolerance)
    for corner in ([0, 0], [0, 1], [1, 0], [1, 1]):
        d = np.linalg.norm(out.positions[:, :2] - corner, axis=-1).min()
        assert d < 0.02


def test_input_mesh_unmodified():
    m = sphere_mesh(10, 12)
    snapshot = (m.positions.copy(), m.faces.copy())
    decimate(m, 50)
    np.testing.assert_array_equal(m.positions, snapshot[0])
    np.testing.assert_array_equal(m.faces, snapshot[1])


def test_progressive_budgets_monotone():
    m = sphere_mesh()
    counts = [decimate(m, b).n_faces for b in (512, 256, 128, 64)]
    assert all(c <= b for c, b in zip(counts, (512, 256, 128, 64)))
    assert counts == sorted(counts, reverse=True)
