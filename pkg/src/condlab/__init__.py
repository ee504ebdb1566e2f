"""condlab: finite-element laboratory for piecewise nonlinear conduction.

Solves div(sigma(x, |grad u|) grad u) = 0 on 2D triangle meshes with
Dirichlet data, evaluates Dirichlet energies and boundary power pairings,
checks energy/power monotonicity under pointwise material ordering, and runs
cell-scan inclusion imaging from boundary power measurements.
"""
__version__ = "0.1.0"
