"""Manufactured-solution convergence of the steady SIPG operator in L2."""
import math

import numpy as np
import pytest

from hestondg.dg_space import DGSpace, l2_error
from hestondg.mesh import uniform_mesh
from hestondg.model import SIDES, BoundaryCondition, BoundarySpec, ConstantCoefficients, Domain
from hestondg.solver import solve_steady

from conftest import TABLE1

LEVELS = (4, 8, 16, 32)


def exact(v, x):
    return np.sin(2 * v) * np.cos(3 * x) + v * x


def derivatives(v, x):
    s, c = np.sin(2 * v), np.cos(3 * x)
    uv = 2 * np.cos(2 * v) * c + x
    ux = -3 * s * np.sin(3 * x) + v
    uvv = -4 * s * c
    uxx = -9 * s * c
    uvx = -6 * np.cos(2 * v) * np.sin(3 * x) + 1
    return uv, ux, uvv, uxx, uvx


def make_source(coeffs):
    def source(tau, v, x):
        uv, ux, uvv, uxx, uvx = derivatives(v, x)
        A = coeffs.diffusion(v)
        dA = coeffs.diffusion_dv(v)
        b = coeffs.convection(v)
        div = A[..., 0, 0] * uvv + 2 * A[..., 0, 1] * uvx + A[..., 1, 1] * uxx + dA[..., 0, 0] * uv + dA[..., 0, 1] * ux
        return -div + b[..., 0] * uv + b[..., 1] * ux + coeffs.reaction * exact(v, x)

    return source


def make_spec(coeffs, neumann=()):
    normals = {"v_min": (-1.0, 0.0), "v_max": (1.0, 0.0), "x_min": (0.0, -1.0), "x_max": (0.0, 1.0)}

    def flux(side):
        n = np.array(normals[side])

        def g(tau, v, x):
            uv, ux = derivatives(v, x)[:2]
            A = coeffs.diffusion(v)
            grad = np.stack([uv, ux], axis=-1)
            return np.einsum("...ab,...b,a->...", A, grad, n)

        return g

    sides = {}
    for s in SIDES:
        if s in neumann:
            sides[s] = BoundaryCondition("neumann", flux(s))
        else:
            sides[s] = BoundaryCondition("dirichlet", lambda t, v, x: exact(v, x))
    return BoundarySpec(sides)


def rates(coeffs, domain, degree, neumann=()):
    spec = make_spec(coeffs, neumann)
    src = make_source(coeffs)
    errs = []
    for n in LEVELS:
        space = DGSpace(uniform_mesh(domain, n, n), degree)
        errs.append(l2_error(solve_steady(space, coeffs, spec, src), exact))
    return errs, [math.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]


ANISO = ConstantCoefficients(A=((0.5, 0.1), (0.1, 0.3)), b=(1.0, -0.5), r=0.7)


@pytest.mark.parametrize("degree", [1, 2])
def test_constant_coefficient_rates(degree):
    errs, r = rates(ANISO, Domain(0.0, 1.0, 0.0, 1.0), degree)
    assert min(r) >= degree + 0.7, (errs, r)


@pytest.mark.parametrize("degree", [1, 2])
def test_heston_coefficients_with_neumann_rates(degree):
    # degenerate-free strip so the v-dependent operator stays uniformly elliptic
    errs, r = rates(TABLE1, Domain(0.1, 1.1, -0.5, 0.5), degree, neumann=("v_max", "x_max"))
    assert min(r) >= degree + 0.7, (errs, r)
