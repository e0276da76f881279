"""Quadric-error-metric edge-collapse mesh simplification.

Open-shell aware: boundary edges contribute perpendicular constraint planes
so the rim of a layer does not erode.  Collapses that would flip a face
normal by 90 degrees or more, or pinch the surface non-manifold, are
rejected.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ExportError

BOUNDARY_WEIGHT = 1e3


@dataclass
class Mesh:
    positions: np.ndarray   # (V, 3)
    uvs: np.ndarray         # (V, 2)
    faces: np.ndarray       # (F, 3) int

    def copy(self) -> "Mesh":
        return Mesh(self.positions.copy(), self.uvs.copy(), self.faces.copy())

    @property
    def n_faces(self) -> int:
        return len(self.faces)


def _face_quadric(p0, p1, p2) -> np.ndarray | None:
    n = np.cross(p1 - p0, p2 - p0)
    area2 = np.linalg.norm(n)
    if area2 < 1e-18:
        return None
    n = n / area2
    d = -np.dot(n, p0)
    plane = np.append(n, d)
    return np.outer(plane, plane) * (0.5 * area2)


def _boundary_quadric(p0, p1, face_normal) -> np.ndarray:
    e = p1 - p0
    n = np.cross(e, face_normal)
    ln = np.linalg.norm(n)
    if ln < 1e-18:
        return np.zeros((4, 4))
    n = n / ln
    d = -np.dot(n, p0)
    plane = np.append(n, d)
    return np.outer(plane, plane) * (BOUNDARY_WEIGHT * np.linalg.norm(e))


def _optimal_position(Q: np.ndarray, pa, pb):
    A = Q[:3, :3]
    b = -Q[:3, 3]
    try:
        if abs(np.linalg.det(A)) > 1e-10:
            x = np.linalg.solve(A, b)
            return x, _vertex_cost(Q, x)
    except np.linalg.LinAlgError:
        pass
    best, cost = None, np.inf
    for cand in (pa, pb, 0.5 * (pa + pb)):
        c = _vertex_cost(Q, cand)
        if c < cost:
            best, cost = cand, c
    return best, cost


def _vertex_cost(Q: np.ndarray, p) -> float:
    h = np.append(p, 1.0)
    return float(h @ Q @ h)


def decimate(mesh: Mesh, triangle_budget: int) -> Mesh:
    """Collapse edges until the face count is at or below the budget.

    Returns a new compacted mesh; the input is unmodified.  Collapsed
    vertices keep their quadric-optimal position; UVs are expected to be
    reassigned afterwards (nearest bake sample), but a collapse carries the
    surviving endpoint's UV so the intermediate mesh stays renderable.
    """
    if triangle_budget < 1:
        raise ConfigError("triangle budget must be >= 1")
    if mesh.n_faces <= triangle_budget:
        return mesh.copy()

    pos = [p.copy() for p in mesh.positions]
    uvs = [u.copy() for u in mesh.uvs]
    faces = {i: tuple(int(v) for v in f) for i, f in enumerate(mesh.faces)}
    vert_faces: dict[int, set[int]] = {i: set() for i in range(len(pos))}
    for fi, f in faces.items():
        for v in f:
            vert_faces[v].add(fi)

    quadrics = [np.zeros((4, 4)) for _ in pos]
    edge_count: dict[tuple[int, int], int] = {}
    edge_face: dict[tuple[int, int], int] = {}
    for fi, (a, b, c) in faces.items():
        K = _face_quadric(pos[a], pos[b], pos[c])
        if K is not None:
            for v in (a, b, c):
                quadrics[v] += K
        for u, w in ((a, b), (b, c), (c, a)):
            key = (min(u, w), max(u, w))
            edge_count[key] = edge_count.get(key, 0) + 1
            edge_face[key] = fi
    for key, cnt in edge_count.items():
        if cnt == 1:  # boundary edge
            a, b = key
            fi = edge_face[key]
            fa, fb, fc = faces[fi]
            n = np.cross(pos[fb] - pos[fa], pos[fc] - pos[fa])
            ln = np.linalg.norm(n)
            if ln > 1e-18:
                Kb = _boundary_quadric(pos[a], pos[b], n / ln)
                quadrics[a] += Kb
                quadrics[b] += Kb

    version = [0] * len(pos)
    alive = [True] * len(pos)
    heap: list = []
    counter = 0

    def push_edge(a: int, b: int):
        nonlocal counter
        if a == b or not (alive[a] and alive[b]):
            return
        Q = quadrics[a] + quadrics[b]
        target, cost = _optimal_position(Q, pos[a], pos[b])
        counter += 1
        heapq.heappush(heap, (cost, counter, a, b, version[a], version[b],
                              target))

    neighbors: dict[int, set[int]] = {i: set() for i in range(len(pos))}
    for a, b in edge_count:
        neighbors[a].add(b)
        neighbors[b].add(a)
        push_edge(a, b)

    n_faces = len(faces)

    def collapse_ok(a: int, b: int, target) -> bool:
        shared_faces = vert_faces[a] & vert_faces[b]
        # link condition: common neighbors must all come from shared faces
        third = set()
        for fi in shared_faces:
            third.update(v for v in faces[fi] if v not in (a, b))
        if (neighbors[a] & neighbors[b]) - third:
            return False
        # reject normal flips among surviving faces
        for v, other in ((a, b), (b, a)):
            for fi in vert_faces[v] - shared_faces:
                f = faces[fi]
                old = [pos[x] for x in f]
                new = [target if x in (a, b) else pos[x] for x in f]
                n_old = np.cross(old[1] - old[0], old[2] - old[0])
                n_new = np.cross(new[1] - new[0], new[2] - new[0])
                nn = np.linalg.norm(n_new)
                if nn < 1e-18 or np.dot(n_old, n_new) <= 0.0:
                    return False
        return True

    while n_faces > triangle_budget and heap:
        cost, _, a, b, va, vb, target = heapq.heappop(heap)
        if not (alive[a] and alive[b]):
            continue
        if version[a] != va or version[b] != vb:
            continue
        if b not in neighbors[a]:
            continue
        if not collapse_ok(a, b, target):
            continue
        # merge b into a at the target position
        shared = vert_faces[a] & vert_faces[b]
        pos[a] = np.asarray(target, dtype=np.float64)
        quadrics[a] = quadrics[a] + quadrics[b]
        alive[b] = False
        for fi in shared:
            for v in faces[fi]:
                vert_faces[v].discard(fi)
            del faces[fi]
            n_faces -= 1
        for fi in list(vert_faces[b]):
            f = faces[fi]
            faces[fi] = tuple(a if v == b else v for v in f)
            vert_faces[a].add(fi)
        vert_faces[b] = set()
        for nb in neighbors[b]:
            neighbors[nb].discard(b)
            if nb != a:
                neighbors[nb].add(a)
                neighbors[a].add(nb)
        neighbors[a].discard(a)
        neighbors[b] = set()
        version[a] += 1
        for nb in neighbors[a]:
            push_edge(a, nb)

    if n_faces > triangle_budget:
        raise ExportError(
            f"decimation stalled at {n_faces} faces (budget {triangle_budget})")

    remap = {}
    out_pos, out_uv = [], []
    out_faces = []
    for f in faces.values():
        idx = []
        for v in f:
            if v not in remap:
                remap[v] = len(out_pos)
                out_pos.append(pos[v])
                out_uv.append(uvs[v])
            idx.append(remap[v])
        out_faces.append(idx)
    return Mesh(np.asarray(out_pos, dtype=np.float64),
                np.asarray(out_uv, dtype=np.float64),
                np.asarray(out_faces, dtype=np.int64))
