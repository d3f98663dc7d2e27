"""Discontinuous piecewise-polynomial spaces on triangle meshes.

The local basis on the reference triangle (0,0), (1,0), (0,1) is the
Gram-Schmidt orthonormalisation of the monomials up to degree ``k``, so the
physical mass matrix of element ``K`` is ``|det J_K| * I``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .mesh import Mesh

REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


@lru_cache(maxsize=None)
def gauss_segment(n: int):
    """n-point Gauss-Legendre rule on [0, 1]; exact for degree 2n - 1."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_quadrature(degree: int):
    """Collapsed (Duffy) Gauss rule on the reference triangle, exact to ``degree``."""
    n = degree // 2 + 1
    a, wa = gauss_segment(n)
    b, wb = gauss_segment(n + 1)
    A, B = np.meshgrid(a, b, indexing="ij")
    WA, WB = np.meshgrid(wa, wb, indexing="ij")
    xi = A * (1.0 - B)
    eta = B
    w = WA * WB * (1.0 - B)
    return np.stack([xi.ravel(), eta.ravel()], axis=1), w.ravel()


def _exponents(k: int):
    return [(i - j, j) for i in range(k + 1) for j in range(i + 1)]


def _monomials(k, pts):
    e = _exponents(k)
    xi, eta = pts[:, 0], pts[:, 1]
    vals = np.stack([xi**p * eta**q for p, q in e], axis=1)
    dxi = np.stack([p * xi ** max(p - 1, 0) * eta**q if p else 0 * xi for p, q in e], axis=1)
    deta = np.stack([q * xi**p * eta ** max(q - 1, 0) if q else 0 * xi for p, q in e], axis=1)
    hess = np.zeros((len(pts), len(e), 2, 2))
    for j, (p, q) in enumerate(e):
        if p >= 2:
            hess[:, j, 0, 0] = p * (p - 1) * xi ** (p - 2) * eta**q
        if q >= 2:
            hess[:, j, 1, 1] = q * (q - 1) * xi**p * eta ** (q - 2)
        if p >= 1 and q >= 1:
            hess[:, j, 0, 1] = hess[:, j, 1, 0] = p * q * xi ** (p - 1) * eta ** (q - 1)
    return vals, np.stack([dxi, deta], axis=2), hess


@lru_cache(maxsize=None)
def _orthonormal_coefficients(k: int) -> np.ndarray:
    pts, w = triangle_quadrature(2 * k + 2)
    vals, _, _ = _monomials(k, pts)
    gram = (vals * w[:, None]).T @ vals
    L = np.linalg.cholesky(gram)
    return np.linalg.inv(L)


class ReferenceBasis:
    """Orthonormal P_k basis on the reference triangle."""

    def __init__(self, degree: int):
        if degree not in (0, 1, 2):
            raise ValueError("supported degrees are 0, 1 and 2")
        self.degree = degree
        self.n = (degree + 1) * (degree + 2) // 2
        self._C = _orthonormal_coefficients(degree)

    def values(self, pts) -> np.ndarray:
        v, _, _ = _monomials(self.degree, np.atleast_2d(pts))
        return v @ self._C.T

    def gradients(self, pts) -> np.ndarray:
        _, g, _ = _monomials(self.degree, np.atleast_2d(pts))
        return np.einsum("ij,pjd->pid", self._C, g)

    def hessians(self, pts) -> np.ndarray:
        _, _, h = _monomials(self.degree, np.atleast_2d(pts))
        return np.einsum("ij,pjab->piab", self._C, h)


class DGSpace:
    """Broken P_k space on a mesh with affine element maps.

    Element ``K`` maps reference points ``xi`` to ``z0[K] + J[K] @ xi``.
    Global DoF ``K * n_local + j`` is basis function ``j`` of element ``K``.
    """

    def __init__(self, mesh: Mesh, degree: int = 1, quad_degree: int | None = None):
        if degree not in (1, 2):
            raise ValueError("polynomial degree must be 1 or 2")
        self.mesh = mesh
        self.degree = degree
        self.basis = ReferenceBasis(degree)
        self.n_local = self.basis.n
        self.quad_degree = 2 * degree + 1 if quad_degree is None else quad_degree
        p = mesh.vertices[mesh.triangles]
        self.z0 = p[:, 0]
        self.J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        self.detJ = np.linalg.det(self.J)
        self.Jinv = np.linalg.inv(self.J)

    @property
    def n_elements(self) -> int:
        return self.mesh.n_triangles

    @property
    def n_dofs(self) -> int:
        return self.n_elements * self.n_local

    def dofs(self, elements) -> np.ndarray:
        elements = np.asarray(elements)
        return elements[..., None] * self.n_local + np.arange(self.n_local)

    def to_physical(self, elements, ref_pts) -> np.ndarray:
        """Map reference points (P, 2) to physical points (len(elements), P, 2)."""
        return self.z0[elements][:, None, :] + np.einsum("eij,pj->epi", self.J[elements], ref_pts)

    def to_reference(self, elements, pts) -> np.ndarray:
        """Inverse map; ``pts`` has shape (E, P, 2) or (E, 2)."""
        elements = np.asarray(elements)
        pts = np.asarray(pts, dtype=float)
        if pts.ndim == 2:
            return np.einsum("eij,ej->ei", self.Jinv[elements], pts - self.z0[elements])
        return np.einsum("eij,epj->epi", self.Jinv[elements], pts - self.z0[elements][:, None, :])

    def physical_gradients(self, elements, ref_grads) -> np.ndarray:
        """grad phi = J^{-T} grad_ref phi; ``ref_grads`` is (..., n, 2) per element."""
        return np.einsum("eji,e...j->e...i", self.Jinv[elements], ref_grads)

    def volume_rule(self, degree: int | None = None):
        return triangle_quadrature(self.quad_degree if degree is None else degree)

    def element_average(self, u) -> np.ndarray:
        """Mean value over each element (first basis function is constant)."""
        u = np.asarray(u).reshape(self.n_elements, self.n_local)
        return u[:, 0] * self.basis.values(np.array([[1 / 3, 1 / 3]]))[0, 0]


@dataclass
class DGSolution:
    space: DGSpace
    coeffs: np.ndarray
    tau: float = 0.0

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.n_dofs,):
            raise ValueError(f"coefficient vector has shape {self.coeffs.shape}, expected ({self.space.n_dofs},)")

    def __call__(self, points) -> np.ndarray:
        return evaluate(self, points)

    def local(self) -> np.ndarray:
        return self.coeffs.reshape(self.space.n_elements, self.space.n_local)

    def min_value(self, samples_per_edge: int = 4) -> float:
        """Minimum over a barycentric lattice of every element (exact for P1)."""
        n = max(samples_per_edge, self.space.degree)
        pts = np.array([(i / n, j / n) for i in range(n + 1) for j in range(n + 1 - i)])
        vals = self.local() @ self.space.basis.values(pts).T
        return float(vals.min())


def evaluate(sol: DGSolution, points) -> np.ndarray:
    """Point values; on shared edges the lowest-numbered element wins."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    space = sol.space
    elems = space.mesh.locate(pts)
    if np.any(elems < 0):
        bad = pts[elems < 0][0]
        raise ValueError(f"point {tuple(bad)} lies outside the domain")
    ref = space.to_reference(elems, pts)
    phi = space.basis.values(ref)
    return np.einsum("pi,pi->p", phi, sol.local()[elems])


def evaluate_on_elements(sol: DGSolution, elements, ref_pts) -> np.ndarray:
    """Values at reference points of given elements, shape (len(elements), P)."""
    phi = sol.space.basis.values(ref_pts)
    return sol.local()[elements] @ phi.T


def _clip(poly, c, keep_below):
    """Clip a convex polygon in (v, x) against x <= c (or x >= c)."""
    out = []
    n = len(poly)
    for i in range(n):
        P, Q = poly[i], poly[(i + 1) % n]
        pin = P[1] <= c if keep_below else P[1] >= c
        qin = Q[1] <= c if keep_below else Q[1] >= c
        if pin:
            out.append(P)
        if pin != qin:
            t = (c - P[1]) / (Q[1] - P[1])
            out.append((P[0] + t * (Q[0] - P[0]), c))
    return out


def _split_triangle(tri, breaks):
    pieces = [list(map(tuple, tri))]
    for c in breaks:
        nxt = []
        for poly in pieces:
            xs = [p[1] for p in poly]
            if min(xs) < c < max(xs):
                for keep in (True, False):
                    part = _clip(poly, c, keep)
                    if len(part) >= 3:
                        nxt.append(part)
            else:
                nxt.append(poly)
        pieces = nxt
    subs = []
    for poly in pieces:
        for i in range(1, len(poly) - 1):
            subs.append((poly[0], poly[i], poly[i + 1]))
    return subs


def l2_project(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    space: DGSpace,
    x_breaks: Sequence[float] = (),
    quad_degree: int | None = None,
    tau: float = 0.0,
) -> DGSolution:
    """Element-local L2 projection of ``f(v, x)``.

    Elements crossed by a line ``x = c`` for ``c`` in ``x_breaks`` are
    integrated piecewise so kinks and jumps of ``f`` do not pollute the
    quadrature.
    """
    qdeg = quad_degree if quad_degree is not None else 2 * space.degree + 6
    ref, w = triangle_quadrature(qdeg)
    phi = space.basis.values(ref)
    n_el = space.n_elements
    allel = np.arange(n_el)
    z = space.to_physical(allel, ref)
    fz = np.asarray(f(z[..., 0], z[..., 1]), dtype=float)
    rhs = np.einsum("ep,p,pi->ei", fz, w, phi) * np.abs(space.detJ)[:, None]

    if len(x_breaks):
        xv = space.mesh.vertices[space.mesh.triangles][:, :, 1]
        lo, hi = xv.min(axis=1), xv.max(axis=1)
        cut = np.zeros(n_el, dtype=bool)
        for c in x_breaks:
            cut |= (lo < c) & (c < hi)
        tris = space.mesh.vertices[space.mesh.triangles]
        for e in np.flatnonzero(cut):
            acc = np.zeros(space.n_local)
            for sub in _split_triangle(tris[e], sorted(x_breaks)):
                s = np.asarray(sub)
                Js = np.stack([s[1] - s[0], s[2] - s[0]], axis=1)
                det = abs(np.linalg.det(Js))
                if det == 0.0:
                    continue
                pts = s[0] + ref @ Js.T
                r = (pts - space.z0[e]) @ space.Jinv[e].T
                fv = np.asarray(f(pts[:, 0], pts[:, 1]), dtype=float)
                acc += (fv * w * det) @ space.basis.values(r)
            rhs[e] = acc
    coeffs = rhs / np.abs(space.detJ)[:, None]
    return DGSolution(space, coeffs.ravel(), tau)


def project_solution(sol: DGSolution, quad_degree: int | None = None) -> DGSolution:
    """Project a DG solution onto its own space element-by-element (no point location)."""
    space = sol.space
    qdeg = quad_degree if quad_degree is not None else 2 * space.degree + 2
    ref, w = triangle_quadrature(qdeg)
    phi = space.basis.values(ref)
    vals = sol.local() @ phi.T
    coeffs = np.einsum("ep,p,pi->ei", vals, w, phi)
    return DGSolution(space, coeffs.ravel(), sol.tau)


def l2_error(sol: DGSolution, exact: Callable[[np.ndarray, np.ndarray], np.ndarray], quad_degree: int | None = None) -> float:
    """||sol - exact||_{L2(Omega)} by element quadrature."""
    space = sol.space
    ref, w = triangle_quadrature(quad_degree if quad_degree is not None else 2 * space.degree + 4)
    z = space.to_physical(np.arange(space.n_elements), ref)
    diff = sol.local() @ space.basis.values(ref).T - exact(z[..., 0], z[..., 1])
    return float(np.sqrt(np.sum(diff**2 * w * np.abs(space.detJ)[:, None])))
