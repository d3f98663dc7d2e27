"""Implicit time marching for M u' + A u = l(tau) with factorization reuse."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularSystemError(np.linalg.LinAlgError):
    pass


class Scheme(str, enum.Enum):
    CN = "cn"
    RANNACHER = "rannacher"
    BACKWARD_EULER = "be"


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, T].

    With ``allow_partial`` a horizon that is not a multiple of ``dt`` is
    accepted and the last step is shortened.
    """

    T: float
    dt: float
    startup: int = 4
    allow_partial: bool = False

    def __post_init__(self):
        if not (self.dt > 0 and self.T > 0):
            raise ValueError("T and dt must be positive")
        if not self.allow_partial and abs(self.n_steps * self.dt - self.T) > 1e-12 * max(1.0, self.T):
            raise ValueError(f"horizon T={self.T} is not a multiple of dt={self.dt}")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.T / self.dt)))


class Factorization:
    """Sparse LU of ``M + c A``, immutable once built."""

    def __init__(self, matrix):
        self.matrix = sp.csc_matrix(matrix)
        try:
            self._lu = spla.splu(self.matrix)
        except RuntimeError as exc:  # SuperLU reports exact singularity this way
            raise SingularSystemError(str(exc)) from exc

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        x = self._lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise SingularSystemError("non-finite solution from triangular solves")
        return x


def step_plan(grid: TimeGrid, scheme: Scheme) -> List[Tuple[str, float]]:
    """List of ``(kind, h)`` steps; kind is ``"be"`` or ``"cn"``."""
    scheme = Scheme(scheme)
    T, dt = grid.T, grid.dt
    tol = 1e-12 * max(1.0, T)
    plan: List[Tuple[str, float]] = []
    t = 0.0

    def advance(kind, h):
        nonlocal t
        h = min(h, T - t)
        plan.append((kind, h))
        t += h

    if scheme is Scheme.RANNACHER:
        for _ in range(grid.startup):
            if T - t <= tol:
                break
            advance("be", 0.5 * dt)
        main = "cn"
    elif scheme is Scheme.CN:
        main = "cn"
    else:
        main = "be"
    while T - t > tol:
        advance(main, dt)
    return plan


def march(
    M,
    A,
    load: Optional[Callable[[float], np.ndarray]],
    u0: np.ndarray,
    grid: TimeGrid,
    scheme: Scheme | str = Scheme.RANNACHER,
    snapshot_every: Optional[int] = None,
    reuse: bool = True,
    n_steps: Optional[int] = None,
):
    """Integrate from tau = 0 to T.

    Returns ``(u_T, snapshots)`` where ``snapshots`` is a list of
    ``(tau, u)`` taken every ``snapshot_every`` steps (including tau = 0).
    Rannacher startup uses four implicit-Euler steps of size dt/2, which share
    the matrix M + dt/2 A with the Crank-Nicolson steps. ``reuse=False``
    refactorizes at every step; ``n_steps`` truncates the march (used by the
    adaptive loop, which only needs the first step).
    """
    M = sp.csr_matrix(M)
    A = sp.csr_matrix(A)
    u = np.array(u0, dtype=float)
    if M.shape != A.shape or M.shape[0] != u.shape[0]:
        raise ValueError("dimension mismatch between M, A and u0")
    if load is None:
        zero = np.zeros_like(u)

        def load(tau):
            return zero

    plan = step_plan(grid, scheme)
    if n_steps is not None:
        plan = plan[:n_steps]
    cache = {}

    def factor(c):
        key = round(c / grid.dt, 12)
        if not reuse:
            return Factorization(M + c * A)
        if key not in cache:
            cache[key] = Factorization(M + c * A)
        return cache[key]

    snaps = [(0.0, u.copy())] if snapshot_every else []
    tau = 0.0
    l_prev = None
    for i, (kind, h) in enumerate(plan):
        tau_next = tau + h
        l_next = load(tau_next)
        if kind == "be":
            rhs = M @ u + h * l_next
            u = factor(h).solve(rhs)
        else:
            if l_prev is None:
                l_prev = load(tau)
            rhs = M @ u - 0.5 * h * (A @ u) + 0.5 * h * (l_prev + l_next)
            u = factor(0.5 * h).solve(rhs)
        tau = tau_next
        l_prev = l_next
        if snapshot_every and (i + 1) % snapshot_every == 0:
            snaps.append((tau, u.copy()))
    return u, snaps


def first_step_size(grid: TimeGrid, scheme: Scheme | str) -> float:
    return step_plan(grid, scheme)[0][1]


__all__ = ["Scheme", "TimeGrid", "Factorization", "SingularSystemError", "march", "step_plan", "first_step_size"]
