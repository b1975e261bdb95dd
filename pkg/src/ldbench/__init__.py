"""Benchmarking of learned Hamiltonian surrogates with Lagrangian descriptors.

The package trains symplectic networks (SympNet, HenonNet, GHNN) and
echo-state reservoirs on Hamiltonian trajectory data, computes Lagrangian
descriptor fields for each learned evolution operator, turns the fields
into weighted probability densities, and scores the models against the
reference flow with information-theoretic divergences.
"""

__version__ = "0.1.0"

from . import dynamics, integrate  # noqa: F401
