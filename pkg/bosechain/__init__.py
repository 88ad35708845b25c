"""
bosechain: many-body localization in the disordered attractive Bose-Hubbard chain.

Exact diagonalization in fixed-N Fock sectors, density-of-states targeting,
shift-and-invert eigenpairs, Krylov and TEBD quench dynamics, and the
ensemble / finite-size-scaling pipeline built on top of them.
"""

__version__ = "0.1.0"
