"""Residual error indicators, Dörfler marking and the SOLVE-ESTIMATE-MARK-REFINE loop.

Indicators are computed from the first implicit step (u0 -> u1). The
weights follow the Péclet-robust construction

    rho_K = min(h_K / sqrt(d0_K), 1 / sqrt(r))        (second term dropped if r = 0)

with the same form on edges. All multiplicative constants are 1.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np

from .assembly import SIPGAssembler
from .dg_space import DGSolution, DGSpace
from .mesh import Mesh, refine
from .model import V_FLOOR, BoundarySpec, ellipticity_bounds
from .timestepping import Scheme, TimeGrid, first_step_size, march

SourceFn = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


@dataclass
class ErrorIndicators:
    """Squared per-element contributions; ``eta_K = sqrt(total)``."""

    cell: np.ndarray
    interior: np.ndarray
    dirichlet: np.ndarray
    neumann: np.ndarray
    rho: np.ndarray

    @property
    def squared(self) -> np.ndarray:
        return self.cell + self.interior + self.dirichlet + self.neumann

    @property
    def eta_K(self) -> np.ndarray:
        return np.sqrt(self.squared)

    @property
    def eta(self) -> float:
        return math.sqrt(float(self.squared.sum()))

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["element", "eta_K", "cell", "interior_edge", "dirichlet_edge", "neumann_edge"])
            for i, row in enumerate(zip(self.eta_K, self.cell, self.interior, self.dirichlet, self.neumann)):
                w.writerow([i, *(f"{x:.10e}" for x in row)])


def _weight(h, d0, r):
    w = h / np.sqrt(d0)
    if r > 0:
        w = np.minimum(w, 1.0 / math.sqrt(r))
    return w


def _side_values(spec: BoundarySpec, sides, edge_side, tau, v, x):
    out = np.zeros(v.shape)
    for s in sides:
        sel = edge_side == s
        if np.any(sel):
            out[sel] = spec[s](tau, v[sel], x[sel])
    return out


def estimate(
    u1: DGSolution,
    u0: DGSolution,
    dt1: float,
    coeffs,
    spec: BoundarySpec,
    source: Optional[SourceFn] = None,
    assembler: Optional[SIPGAssembler] = None,
) -> ErrorIndicators:
    """Local indicators for the step u0 -> u1 of length ``dt1``.

    Boundary data and the source are evaluated at ``u1.tau``.
    """
    if u1.space is not u0.space:
        raise ValueError("u1 and u0 must live on the same space")
    if not dt1 > 0:
        raise ValueError("dt1 must be positive")
    space = u1.space
    m = space.mesh
    asm = assembler if assembler is not None else SIPGAssembler(space, coeffs, spec)
    r = float(coeffs.reaction)
    tau = u1.tau
    nel = space.n_elements
    U1, U0 = u1.local(), u0.local()

    # cell residual
    ref, w = space.volume_rule(2 * space.degree + 2)
    el = np.arange(nel)
    z = space.to_physical(el, ref)
    vq = z[..., 0]
    phi = space.basis.values(ref)
    grad = np.einsum("eji,qnj->eqni", space.Jinv, space.basis.gradients(ref))
    hess = np.einsum("eai,qnab,ebj->eqnij", space.Jinv, space.basis.hessians(ref), space.Jinv)
    val1 = U1 @ phi.T
    val0 = U0 @ phi.T
    g1 = np.einsum("en,eqnd->eqd", U1, grad)
    H1 = np.einsum("en,eqnij->eqij", U1, hess)
    A = coeffs.diffusion(vq)
    dA = coeffs.diffusion_dv(vq)
    div_flux = np.einsum("eqij,eqij->eq", A, H1) + np.einsum("eqj,eqj->eq", dA[..., 0, :], g1)
    R = (val1 - val0) / dt1 - div_flux + np.einsum("eqd,eqd->eq", coeffs.convection(vq), g1) + r * val1
    if source is not None:
        R = R - np.asarray(source(tau, vq, z[..., 1]), dtype=float)
    cell_norm = np.einsum("eq,q->e", R**2, w) * np.abs(space.detJ)
    v_floor = max(m.domain.v_min, V_FLOOR)
    vbar = np.maximum(space.z0[:, 0] + space.J[:, 0, :].sum(axis=1) / 3.0, v_floor)
    d0K, _ = ellipticity_bounds(coeffs.diffusion(vbar))
    rho = _weight(m.diameters, d0K, r)
    cell = rho**2 * cell_norm

    pen = asm.penalty
    h_e, d0_e = pen.h, pen.d0
    rho_e = _weight(h_e, d0_e, r)
    flux_w = rho_e / np.sqrt(d0_e)

    def jump_weight(F):
        b = coeffs.convection(F.points[..., 0])
        bmax2 = np.max(np.sum(b**2, axis=-1), axis=1)
        e = F.edges
        return pen.sigma[e] / h_e[e] + h_e[e] * (r + bmax2 / d0_e[e])

    def flux(F, U):
        Aq = coeffs.diffusion(F.points[..., 0])
        g = np.einsum("en,eqnd->eqd", U[F.elements], F.grad)
        return np.einsum("eqab,eqb,ea->eq", Aq, g, F.normal)

    def trace(F, U):
        return np.einsum("en,eqn->eq", U[F.elements], F.phi)

    interior = np.zeros(nel)
    P, M = asm._plus, asm._minus
    if len(P.edges):
        fj = flux(P, U1) - flux(M, U1)
        uj = trace(P, U1) - trace(M, U1)
        e = P.edges
        contrib = flux_w[e] * np.sum(P.weights * fj**2, axis=1) + jump_weight(P) * np.sum(P.weights * uj**2, axis=1)
        np.add.at(interior, P.elements, 0.5 * contrib)
        np.add.at(interior, M.elements, 0.5 * contrib)

    dirichlet = np.zeros(nel)
    D = asm._dir
    if len(D.edges):
        gD = _side_values(spec, spec.dirichlet_sides, m.edge_side[D.edges], tau, D.points[..., 0], D.points[..., 1])
        res = trace(D, U1) - gD
        np.add.at(dirichlet, D.elements, jump_weight(D) * np.sum(D.weights * res**2, axis=1))

    neumann = np.zeros(nel)
    N = asm._neu
    if len(N.edges):
        gN = _side_values(spec, spec.neumann_sides, m.edge_side[N.edges], tau, N.points[..., 0], N.points[..., 1])
        res = flux(N, U1) - gN
        np.add.at(neumann, N.elements, flux_w[N.edges] * np.sum(N.weights * res**2, axis=1))

    return ErrorIndicators(cell, interior, dirichlet, neumann, rho)


def mark(ind: ErrorIndicators | np.ndarray, theta: float = 0.5) -> np.ndarray:
    """Dörfler marking: the fewest elements whose eta_K^2 reach theta^2 * eta^2.

    Ties in eta_K are broken by ascending element id. Accepts indicators or
    a plain array of eta_K.
    """
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    eta2 = ind.squared if isinstance(ind, ErrorIndicators) else np.asarray(ind, dtype=float) ** 2
    if eta2.size == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.argsort(-eta2, kind="stable")
    csum = np.cumsum(eta2[order])
    total = csum[-1]
    if total == 0.0:
        return np.zeros(0, dtype=np.int64)
    n = int(np.searchsorted(csum, theta**2 * total, side="left")) + 1
    return np.sort(order[: min(n, len(order))])


@dataclass
class AdaptRound:
    n_elements: int
    n_dofs: int
    eta: float
    n_marked: int


@dataclass
class AdaptResult:
    mesh: Mesh
    history: List[AdaptRound] = field(default_factory=list)
    converged: bool = False
    indicators: Optional[ErrorIndicators] = None


def first_step(problem, mesh: Mesh, degree: int, dt: float, scheme=Scheme.RANNACHER):
    """Project the payoff and take the first step of the chosen scheme."""
    from .solver import discretize, initial_solution

    space, asm, Mh, Ah = discretize(problem, mesh, degree)
    u0 = initial_solution(problem, space)
    grid = TimeGrid(problem.params.T, dt)
    h = first_step_size(grid, scheme)
    if Scheme(scheme) is Scheme.CN:
        # CN's first step is not a residual-friendly implicit step; use BE of the same size
        scheme = Scheme.BACKWARD_EULER
    u1, _ = march(Mh, Ah, asm.load, u0.coeffs, grid, scheme, n_steps=1)
    return space, asm, u0, DGSolution(space, u1, h), h


def adapt_loop(
    problem,
    mesh: Mesh,
    eps: float,
    max_rounds: int = 10,
    degree: int = 1,
    dt: float = 0.01,
    theta_mark: float = 0.5,
    scheme=Scheme.RANNACHER,
    max_elements: Optional[int] = None,
) -> AdaptResult:
    """Refine until eta < eps, ``max_rounds`` refinements, or the element budget is hit.

    The loop always estimates on the returned mesh, so ``history[-1]``
    describes it.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    result = AdaptResult(mesh)
    for rnd in range(max_rounds + 1):
        space, asm, u0, u1, h = first_step(problem, mesh, degree, dt, scheme)
        ind = estimate(u1, u0, h, problem.params, problem.spec, assembler=asm)
        eta = ind.eta
        result.mesh, result.indicators = mesh, ind
        if eta < eps:
            result.history.append(AdaptRound(mesh.n_triangles, space.n_dofs, eta, 0))
            result.converged = True
            return result
        if rnd == max_rounds or (max_elements is not None and mesh.n_triangles >= max_elements):
            result.history.append(AdaptRound(mesh.n_triangles, space.n_dofs, eta, 0))
            return result
        marked = mark(ind, theta_mark)
        result.history.append(AdaptRound(mesh.n_triangles, space.n_dofs, eta, len(marked)))
        mesh = refine(mesh, marked)
    return result


__all__ = ["ErrorIndicators", "estimate", "mark", "adapt_loop", "AdaptResult", "AdaptRound", "first_step"]
