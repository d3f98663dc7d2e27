"""Heston option pricing with SIPG discontinuous Galerkin, Rannacher time
stepping and residual-based adaptive mesh refinement."""
from .adaptivity import ErrorIndicators, adapt_loop, estimate, mark
from .assembly import assemble_load, assemble_mass, assemble_stiffness, penalty_sigma
from .dg_space import DGSolution, DGSpace, evaluate, l2_project
from .mesh import Mesh, refine, uniform_mesh
from .model import (
    BoundarySpec,
    Butterfly,
    DigitalCall,
    Domain,
    EuropeanCall,
    EuropeanPut,
    HestonParams,
    boundary_spec,
    convection_field,
    diffusion_matrix,
    feller_holds,
    normal_cdf,
    payoff,
)
from .reference import MCConfig, black_scholes, heston_price, mc_price, mc_prices
from .solver import Problem, pde_price, solve
from .timestepping import Scheme, TimeGrid, march

__version__ = "0.1.0"
