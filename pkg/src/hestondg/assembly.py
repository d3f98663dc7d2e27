"""SIPG assembly with upwinding for -div(A grad U) + b . grad U + r U.

Coefficient objects must provide ``diffusion(v)``, ``convection(v)`` and a
scalar ``reaction``; both :class:`~hestondg.model.HestonParams` and
:class:`~hestondg.model.ConstantCoefficients` qualify.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .dg_space import DGSpace, gauss_segment
from .model import DIRICHLET, NEUMANN, V_FLOOR, BoundarySpec, ellipticity_bounds

SourceFn = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


def penalty_sigma(d0, d1, k: int, theta: float, dirichlet=False):
    """sigma_e = c d1^2/d0 k(k+1) cot(theta), c = 3 inside and 6 on Dirichlet edges."""
    d0 = np.asarray(d0, dtype=float)
    if np.any(d0 <= 0):
        raise ValueError("penalty needs d0 > 0; the diffusion matrix is degenerate on this edge")
    c = np.where(dirichlet, 6.0, 3.0)
    return c * np.asarray(d1, dtype=float) ** 2 / d0 * k * (k + 1) / math.tan(theta)


@dataclass
class PenaltyTable:
    sigma: np.ndarray  # per edge; 0 on Neumann edges
    h: np.ndarray
    d0: np.ndarray
    d1: np.ndarray
    theta: float


@dataclass
class FaceData:
    """Quadrature data on a batch of edges seen from one incident element."""

    edges: np.ndarray
    elements: np.ndarray
    points: np.ndarray  # (E, Q, 2)
    weights: np.ndarray  # (E, Q), includes edge length
    normal: np.ndarray  # (E, 2), outward for the first incident element
    phi: np.ndarray  # (E, Q, n)
    grad: np.ndarray  # (E, Q, n, 2)


class SIPGAssembler:
    """Caches geometry, traces and penalties for one (space, coefficients, BC) triple."""

    def __init__(self, space: DGSpace, coeffs, spec: BoundarySpec, face_points: Optional[int] = None):
        self.space = space
        self.coeffs = coeffs
        self.spec = spec
        self.mesh = space.mesh
        m = self.mesh
        if np.any(m.edge_side[m.boundary_edges] < 0):
            raise ValueError("inconsistent boundary tags")
        self.n_face_q = face_points if face_points is not None else space.degree + 1
        side = m.edge_side
        dirichlet_sides = np.array(spec.dirichlet_sides, dtype=np.int64)
        neumann_sides = np.array(spec.neumann_sides, dtype=np.int64)
        self.interior = m.interior_edges
        self.dirichlet = np.flatnonzero(np.isin(side, dirichlet_sides))
        self.neumann = np.flatnonzero(np.isin(side, neumann_sides))
        self.penalty = self._penalty_table()
        self._plus = self.face_data(self.interior, 0)
        self._minus = self.face_data(self.interior, 1)
        self._dir = self.face_data(self.dirichlet, 0)
        self._neu = self.face_data(self.neumann, 0)

    # -- geometry ----------------------------------------------------------

    def face_data(self, edges, column: int) -> FaceData:
        m, space = self.mesh, self.space
        edges = np.asarray(edges, dtype=np.int64)
        s, w = gauss_segment(self.n_face_q)
        a = m.vertices[m.edges[edges, 0]]
        b = m.vertices[m.edges[edges, 1]]
        t = b - a
        h = np.linalg.norm(t, axis=1)
        normal = np.stack([t[:, 1], -t[:, 0]], axis=1) / h[:, None] if len(edges) else np.zeros((0, 2))
        pts = a[:, None, :] + s[None, :, None] * t[:, None, :]
        el = m.edge_elements[edges, column]
        ref = space.to_reference(el, pts)
        flat = ref.reshape(-1, 2)
        n = space.n_local
        phi = space.basis.values(flat).reshape(len(edges), len(s), n)
        gref = space.basis.gradients(flat).reshape(len(edges), len(s), n, 2)
        grad = np.einsum("eji,eqnj->eqni", space.Jinv[el], gref)
        return FaceData(edges, el, pts, w[None, :] * h[:, None], normal, phi, grad)

    def _penalty_table(self) -> PenaltyTable:
        m = self.mesh
        ne = m.n_edges
        ev = m.vertices[m.edges]
        v_floor = max(m.domain.v_min, V_FLOOR)
        v_mean = np.maximum(ev[:, :, 0].mean(axis=1), v_floor)
        d0, d1 = ellipticity_bounds(self.coeffs.diffusion(v_mean))
        theta = m.min_angle
        sigma = np.zeros(ne)
        k = self.space.degree
        if len(self.interior):
            sigma[self.interior] = penalty_sigma(d0[self.interior], d1[self.interior], k, theta)
        if len(self.dirichlet):
            sigma[self.dirichlet] = penalty_sigma(d0[self.dirichlet], d1[self.dirichlet], k, theta, dirichlet=True)
        return PenaltyTable(sigma, m.edge_lengths.copy(), d0, d1, theta)

    # -- matrices ----------------------------------------------------------

    def _sparse(self, blocks):
        space = self.space
        n = space.n_local
        rows, cols, vals = [], [], []
        for ea, ec, B in blocks:
            if len(ea) == 0:
                continue
            ra = space.dofs(ea)
            rc = space.dofs(ec)
            rows.append(np.broadcast_to(ra[:, :, None], B.shape).ravel())
            cols.append(np.broadcast_to(rc[:, None, :], B.shape).ravel())
            vals.append(B.ravel())
        N = space.n_dofs
        mat = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
        mat = mat.tocsr()
        mat.sum_duplicates()
        mat.sort_indices()
        return mat

    def mass(self) -> sp.csr_matrix:
        space = self.space
        diag = np.repeat(np.abs(space.detJ), space.n_local)
        return sp.diags(diag, format="csr")

    def _volume_data(self):
        space = self.space
        ref, w = space.volume_rule()
        el = np.arange(space.n_elements)
        phi = space.basis.values(ref)
        grad = np.einsum("eji,qnj->eqni", space.Jinv, space.basis.gradients(ref))
        z = space.to_physical(el, ref)
        W = w[None, :] * np.abs(space.detJ)[:, None]
        return el, z, W, phi, grad

    def stiffness(self, diffusion=True, convection=True, reaction=True) -> sp.csr_matrix:
        """Stiffness matrix; the switches drop whole terms (for tests and diagnostics)."""
        c = self.coeffs
        el, z, W, phi, grad = self._volume_data()
        v = z[..., 0]
        Kloc = np.zeros((len(el), self.space.n_local, self.space.n_local))
        if diffusion:
            A = c.diffusion(v)
            Kloc += np.einsum("eq,eqab,eqjb,eqia->eij", W, A, grad, grad)
        if convection:
            b = c.convection(v)
            Kloc += np.einsum("eq,eqb,eqjb,qi->eij", W, b, grad, phi)
        if reaction and c.reaction != 0.0:
            Kloc += c.reaction * np.einsum("eq,qj,qi->eij", W, phi, phi)
        blocks = [(el, el, Kloc)]

        P, M = self._plus, self._minus
        if len(P.edges):
            vq = P.points[..., 0]
            nrm = P.normal
            W = P.weights
            pen = (self.penalty.sigma[P.edges] / self.penalty.h[P.edges])[:, None]
            sides = [(P, 1.0), (M, -1.0)]
            bn = np.einsum("eqa,ea->eq", c.convection(vq), nrm) if convection else None
            A = c.diffusion(vq) if diffusion else None
            flux = {}
            if diffusion:
                for F, _ in sides:
                    flux[id(F)] = np.einsum("eqab,eqnb,ea->eqn", A, F.grad, nrm)
            for Fa, sa in sides:
                for Fc, sc in sides:
                    B = np.zeros((len(P.edges), self.space.n_local, self.space.n_local))
                    if diffusion:
                        B += sa * sc * np.einsum("eq,eqi,eqj->eij", W * pen, Fa.phi, Fc.phi)
                        B -= 0.5 * sc * np.einsum("eq,eqi,eqj->eij", W, flux[id(Fa)], Fc.phi)
                        B -= 0.5 * sa * np.einsum("eq,eqi,eqj->eij", W, Fa.phi, flux[id(Fc)])
                    if convection:
                        # test side a sees inflow where b . n_a < 0, with n_a = sa * n_plus
                        bna = sa * bn
                        inflow = np.where(bna < 0, bna, 0.0)
                        coef = inflow if Fc is not Fa else -inflow
                        B += np.einsum("eq,eqi,eqj->eij", W * coef, Fa.phi, Fc.phi)
                    blocks.append((Fa.elements, Fc.elements, B))

        D = self._dir
        if len(D.edges):
            vq = D.points[..., 0]
            W = D.weights
            B = np.zeros((len(D.edges), self.space.n_local, self.space.n_local))
            if diffusion:
                pen = (self.penalty.sigma[D.edges] / self.penalty.h[D.edges])[:, None]
                g = np.einsum("eqab,eqnb,ea->eqn", c.diffusion(vq), D.grad, D.normal)
                B += np.einsum("eq,eqi,eqj->eij", W * pen, D.phi, D.phi)
                B -= np.einsum("eq,eqi,eqj->eij", W, g, D.phi)
                B -= np.einsum("eq,eqi,eqj->eij", W, D.phi, g)
            if convection:
                bn = np.einsum("eqa,ea->eq", c.convection(vq), D.normal)
                B -= np.einsum("eq,eqi,eqj->eij", W * np.where(bn < 0, bn, 0.0), D.phi, D.phi)
            blocks.append((D.elements, D.elements, B))
        return self._sparse(blocks)

    # -- load ----------------------------------------------------------------

    def load(self, tau: float, source: Optional[SourceFn] = None) -> np.ndarray:
        c = self.coeffs
        space = self.space
        out = np.zeros((space.n_elements, space.n_local))
        D = self._dir
        if len(D.edges):
            vq, xq = D.points[..., 0], D.points[..., 1]
            gD = np.zeros(vq.shape)
            for side in self.spec.dirichlet_sides:
                sel = self.mesh.edge_side[D.edges] == side
                if np.any(sel):
                    gD[sel] = self.spec[side](tau, vq[sel], xq[sel])
            pen = (self.penalty.sigma[D.edges] / self.penalty.h[D.edges])[:, None]
            g = np.einsum("eqab,eqnb,ea->eqn", c.diffusion(vq), D.grad, D.normal)
            bn = np.einsum("eqa,ea->eq", c.convection(vq), D.normal)
            wt = D.weights * gD
            loc = np.einsum("eq,eqi->ei", wt * pen, D.phi) - np.einsum("eq,eqi->ei", wt, g)
            loc -= np.einsum("eq,eqi->ei", wt * np.where(bn < 0, bn, 0.0), D.phi)
            np.add.at(out, D.elements, loc)
        Nf = self._neu
        if len(Nf.edges):
            vq, xq = Nf.points[..., 0], Nf.points[..., 1]
            gN = np.zeros(vq.shape)
            for side in self.spec.neumann_sides:
                sel = self.mesh.edge_side[Nf.edges] == side
                if np.any(sel):
                    gN[sel] = self.spec[side](tau, vq[sel], xq[sel])
            np.add.at(out, Nf.elements, np.einsum("eq,eqi->ei", Nf.weights * gN, Nf.phi))
        if source is not None:
            ref, w = space.volume_rule(2 * space.degree + 4)
            el = np.arange(space.n_elements)
            z = space.to_physical(el, ref)
            f = np.asarray(source(tau, z[..., 0], z[..., 1]), dtype=float)
            out += np.einsum("ep,p,pi->ei", f * np.abs(space.detJ)[:, None], w, space.basis.values(ref))
        return out.ravel()


def assemble_mass(space: DGSpace) -> sp.csr_matrix:
    diag = np.repeat(np.abs(space.detJ), space.n_local)
    return sp.diags(diag, format="csr")


def assemble_stiffness(space: DGSpace, coeffs, spec: BoundarySpec) -> sp.csr_matrix:
    return SIPGAssembler(space, coeffs, spec).stiffness()


def assemble_load(space: DGSpace, coeffs, spec: BoundarySpec, tau: float, source: Optional[SourceFn] = None) -> np.ndarray:
    return SIPGAssembler(space, coeffs, spec).load(tau, source)


def penalty_table(space: DGSpace, coeffs, spec: BoundarySpec) -> PenaltyTable:
    return SIPGAssembler(space, coeffs, spec).penalty


def dump_coo(matrix, path) -> None:
    """Write ``row col value`` lines, one per stored entry."""
    coo = sp.coo_matrix(matrix)
    with Path(path).open("w") as fh:
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{int(r)} {int(c)} {float(v)!r}\n")
