"""Finite-element minimization of the first eigenvalue of -Laplace + alpha chi_D over sets D of fixed measure."""

from .eigen import EigenPair, smallest_eigpair
from .fem import FEMSystem
from .mesh import (Mesh, build_annulus_mesh, build_domain, build_dumbbell_mesh,
                   build_ellipse_mesh, build_rectangle_mesh, refine)
from .optimizer import InitShape, multi_start, optimize
from .sublevel import Configuration, sublevel_area, sublevel_configuration

__version__ = "0.1.0"
