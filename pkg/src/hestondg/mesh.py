"""Conforming triangulations of the (v, x) rectangle.

Triangles are stored as ``(newest, a, b)`` in counter-clockwise order; the
refinement edge ``(a, b)`` is opposite the newest vertex. Local edge ``i`` is
the edge opposite local vertex ``i``, so local edge 0 is the refinement edge.
"""
from __future__ import annotations

from collections import deque
from pathlib import Path
from typing import Iterable

import numpy as np

from .model import SIDES, Domain


class Mesh:
    """Immutable triangle mesh with edge connectivity and boundary side tags.

    Attributes
    ----------
    vertices : (n_vertices, 2) array of (v, x)
    triangles : (n_triangles, 3) int array
    edges : (n_edges, 2) int array, ordered as seen from ``edge_elements[:, 0]``
    edge_elements : (n_edges, 2) int array, second column -1 on the boundary
    edge_local : (n_edges, 2) local edge index inside each incident triangle
    triangle_edges : (n_triangles, 3) global edge id of each local edge
    edge_side : (n_edges,) side index into ``SIDES`` or -1 for interior edges
    """

    def __init__(self, vertices, triangles, domain: Domain):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.domain = domain
        if len(self.triangles) == 0:
            raise ValueError("empty mesh")
        self.vertices.setflags(write=False)
        self.triangles.setflags(write=False)
        self._build_geometry()
        self._build_edges()

    def _build_geometry(self):
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        if np.any(det <= 0):
            raise ValueError("triangles must have positive orientation and area")
        self.areas = 0.5 * det
        # Side lengths opposite each local vertex.
        lengths = np.stack(
            [
                np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
                np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
                np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
            ],
            axis=1,
        )
        self.diameters = lengths.max(axis=1)
        l0, l1, l2 = lengths.T
        cos = np.stack(
            [
                (l1**2 + l2**2 - l0**2) / (2 * l1 * l2),
                (l0**2 + l2**2 - l1**2) / (2 * l0 * l2),
                (l0**2 + l1**2 - l2**2) / (2 * l0 * l1),
            ],
            axis=1,
        )
        self.angles = np.arccos(np.clip(cos, -1.0, 1.0))

    def _build_edges(self):
        t = self.triangles
        n = len(t)
        # local edge i = (t[i+1], t[i+2])
        local = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1).reshape(-1, 2)
        key = np.sort(local, axis=1)
        uniq, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        if np.any(counts > 2):
            raise ValueError("non-manifold mesh: an edge has more than two triangles")
        owner = np.repeat(np.arange(n), 3)
        loc = np.tile(np.arange(3), n)
        order = np.lexsort((owner, inverse))  # group by edge, lowest triangle first
        ne = len(uniq)
        first = np.full(ne, -1, dtype=np.int64)
        second = np.full(ne, -1, dtype=np.int64)
        first_loc = np.full(ne, -1, dtype=np.int64)
        second_loc = np.full(ne, -1, dtype=np.int64)
        inv_sorted = inverse[order]
        is_first = np.ones(len(order), dtype=bool)
        is_first[1:] = inv_sorted[1:] != inv_sorted[:-1]
        first[inv_sorted[is_first]] = owner[order][is_first]
        first_loc[inv_sorted[is_first]] = loc[order][is_first]
        second[inv_sorted[~is_first]] = owner[order][~is_first]
        second_loc[inv_sorted[~is_first]] = loc[order][~is_first]

        self.edge_elements = np.stack([first, second], axis=1)
        self.edge_local = np.stack([first_loc, second_loc], axis=1)
        self.edges = local[3 * first + first_loc]
        self.triangle_edges = inverse.reshape(n, 3)
        ev = self.vertices[self.edges]
        self.edge_lengths = np.linalg.norm(ev[:, 1] - ev[:, 0], axis=1)

        boundary = second < 0
        mid = ev.mean(axis=1)
        d = self.domain
        scale = max(d.v_max - d.v_min, d.x_max - d.x_min)
        tol = 1e-10 * scale
        side = np.full(ne, -1, dtype=np.int64)
        side[boundary & (np.abs(mid[:, 0] - d.v_min) < tol)] = 0
        side[boundary & (np.abs(mid[:, 0] - d.v_max) < tol)] = 1
        side[boundary & (np.abs(mid[:, 1] - d.x_min) < tol)] = 2
        side[boundary & (np.abs(mid[:, 1] - d.x_max) < tol)] = 3
        if np.any(side[boundary] < 0):
            raise ValueError("boundary edge not on the domain rectangle")
        self.edge_side = side

    # -- queries ---------------------------------------------------------

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def min_angle(self) -> float:
        return float(self.angles.min())

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_elements[:, 1] >= 0)

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_elements[:, 1] < 0)

    def neighbor(self, tri: int, local_edge: int) -> int:
        """Triangle across ``local_edge`` of ``tri`` (-1 on the boundary)."""
        e = self.triangle_edges[tri, local_edge]
        a, b = self.edge_elements[e]
        return b if a == tri else a

    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def locate(self, points, tol: float = 1e-12) -> np.ndarray:
        """Index of the lowest-numbered triangle containing each point (-1 if none)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        p = self.vertices[self.triangles]
        lo = p.min(axis=1)
        hi = p.max(axis=1)
        scale = max(self.domain.v_max - self.domain.v_min, self.domain.x_max - self.domain.x_min)
        slack = tol * scale
        x0 = p[:, 0]
        e1 = p[:, 1] - x0
        e2 = p[:, 2] - x0
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        out = np.full(len(pts), -1, dtype=np.int64)
        chunk = max(1, 2_000_000 // max(1, len(p)))
        for s in range(0, len(pts), chunk):
            q = pts[s : s + chunk]
            box = np.all(q[:, None, :] >= lo[None] - slack, axis=2) & np.all(q[:, None, :] <= hi[None] + slack, axis=2)
            qi, ti = np.nonzero(box)
            r = q[qi] - x0[ti]
            l1 = (r[:, 0] * e2[ti, 1] - r[:, 1] * e2[ti, 0]) / det[ti]
            l2 = (e1[ti, 0] * r[:, 1] - e1[ti, 1] * r[:, 0]) / det[ti]
            inside = (l1 >= -tol) & (l2 >= -tol) & (l1 + l2 <= 1 + tol)
            qi, ti = qi[inside], ti[inside]
            # nonzero() is row-major, so the first hit per point has the lowest id
            uq, first = np.unique(qi, return_index=True)
            out[s + uq] = ti[first]
        return out

    def write_text(self, path) -> None:
        """Plain-text dump: a vertex table followed by a triangle table."""
        path = Path(path)
        with path.open("w") as fh:
            fh.write(f"# vertices {self.n_vertices}\n# id v x\n")
            for i, (v, x) in enumerate(self.vertices):
                fh.write(f"{i} {float(v)!r} {float(x)!r}\n")
            fh.write(f"# triangles {self.n_triangles}\n# id a b c\n")
            for i, (a, b, c) in enumerate(self.triangles):
                fh.write(f"{i} {a} {b} {c}\n")

    def __repr__(self) -> str:
        return f"Mesh(n_triangles={self.n_triangles}, n_vertices={self.n_vertices}, n_edges={self.n_edges})"


def uniform_mesh(d: Domain, n_v: int, n_x: int, diagonal: str = "main") -> Mesh:
    """Split the rectangle into ``n_v x n_x`` cells, two right triangles each.

    ``diagonal="main"`` cuts every cell along the (1, 1) direction of the
    (v, x) plane, ``"anti"`` along (1, -1). The right-angle corner is the
    newest vertex, so the shared diagonal is the refinement edge of both halves.
    """
    if n_v < 1 or n_x < 1:
        raise ValueError("n_v and n_x must be >= 1")
    vs = np.linspace(d.v_min, d.v_max, n_v + 1)
    xs = np.linspace(d.x_min, d.x_max, n_x + 1)
    V, X = np.meshgrid(vs, xs, indexing="ij")
    verts = np.stack([V.ravel(), X.ravel()], axis=1)
    idx = np.arange((n_v + 1) * (n_x + 1)).reshape(n_v + 1, n_x + 1)
    p00 = idx[:-1, :-1].ravel()
    p10 = idx[1:, :-1].ravel()
    p01 = idx[:-1, 1:].ravel()
    p11 = idx[1:, 1:].ravel()
    if diagonal == "main":
        first = np.stack([p10, p11, p00], axis=1)
        second = np.stack([p01, p00, p11], axis=1)
    elif diagonal == "anti":
        first = np.stack([p00, p10, p01], axis=1)
        second = np.stack([p11, p01, p10], axis=1)
    else:
        raise ValueError(f"diagonal must be 'main' or 'anti', got {diagonal!r}")
    tris = np.stack([first, second], axis=1).reshape(-1, 3)
    return Mesh(verts, tris, d)


def refine(m: Mesh, marked: Iterable[int]) -> Mesh:
    """Newest-vertex bisection of the marked triangles plus conforming closure."""
    marked = np.unique(np.asarray(list(marked), dtype=np.int64))
    if marked.size == 0:
        return m
    if marked.min() < 0 or marked.max() >= m.n_triangles:
        raise IndexError("marked triangle id out of range")

    # Closure: a triangle with any marked edge must have its refinement edge marked.
    edge_marked = np.zeros(m.n_edges, dtype=bool)
    queue = deque()
    for t in marked:
        e = m.triangle_edges[t, 0]
        if not edge_marked[e]:
            edge_marked[e] = True
            queue.append(e)
    while queue:
        e = queue.popleft()
        for t in m.edge_elements[e]:
            if t < 0:
                continue
            r = m.triangle_edges[t, 0]
            if not edge_marked[r]:
                edge_marked[r] = True
                queue.append(r)

    marked_keys = {tuple(sorted(map(int, m.edges[e]))) for e in np.flatnonzero(edge_marked)}
    verts = [tuple(v) for v in m.vertices]
    midpoint: dict[tuple[int, int], int] = {}
    tris = [tuple(map(int, t)) for t in m.triangles]

    while True:
        out = []
        changed = False
        for n0, a, b in tris:
            key = (a, b) if a < b else (b, a)
            if key not in marked_keys:
                out.append((n0, a, b))
                continue
            p = midpoint.get(key)
            if p is None:
                va, vb = verts[a], verts[b]
                p = len(verts)
                verts.append((0.5 * (va[0] + vb[0]), 0.5 * (va[1] + vb[1])))
                midpoint[key] = p
            out.append((p, n0, a))
            out.append((p, b, n0))
            changed = True
        tris = out
        if not changed:
            break
    return Mesh(np.array(verts), np.array(tris, dtype=np.int64), m.domain)


def refine_uniformly(m: Mesh, times: int = 1) -> Mesh:
    for _ in range(times):
        m = refine(m, range(m.n_triangles))
    return m


__all__ = ["Mesh", "uniform_mesh", "refine", "refine_uniformly", "SIDES"]
