"""Quasi-periodic solutions of the forced nonlinear beam equation.

Computes solutions u(omega t, x) of  u_tt + (Laplacian)^2 u + V(x) u =
eps f(omega t, x, u)  by a quadratic iteration whose linearized systems are
inverted with a multiscale decay-norm analysis, plus the parameter-measure
scans that certify the non-resonance conditions along the way.
"""

from . import (cli, decay_matrix, lattice, lemma_suite, linop, measure,
               multiscale, nashmoser, sobolev)
from ._kernels import BACKEND as kernel_backend
from .decay_matrix import DecayMatrix, k0_constant
from .lattice import LatticeGeometry, make_geometry
from .linop import OperatorParams, assemble
from .multiscale import MultiscaleParams, invert
from .nashmoser import CantorExclusion, SolverConfig, solve
from .sobolev import FourierField, NonlinearitySpec, hs_norm

__version__ = "0.1.0"

__all__ = [
    "cli", "decay_matrix", "lattice", "lemma_suite", "linop", "measure",
    "multiscale", "nashmoser", "sobolev",
    "kernel_backend", "DecayMatrix", "k0_constant", "LatticeGeometry",
    "make_geometry", "OperatorParams", "assemble", "MultiscaleParams",
    "invert", "CantorExclusion", "SolverConfig", "solve", "FourierField",
    "NonlinearitySpec", "hs_norm", "__version__",
]
