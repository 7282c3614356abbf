"""Finite element solvers for 1D nonlocal diffusion with volume constraints.

Modules
-------
kernels      truncated power kernels and their scaling constants
geometry     domains, interaction layers, constraint pieces and meshes
operators    pointwise nonlocal and fractional operators, flux, Green identities
assembly     banded stiffness, mass, Robin and load assembly
solver       Cholesky, pure Neumann and damped Newton solvers
experiments  manufactured data, error norms, rate fits and study drivers
cli          ``nonlocal`` command-line front end
"""

__version__ = "1.0.0"
