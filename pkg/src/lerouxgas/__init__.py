"""Two-species exclusion process with collisions and its hydrodynamic limit.

Simulation of the speeded-up exchange dynamics on the discrete torus, the
Leroux system of conservation laws it converges to, and numerical
verification of every checkable ingredient of that convergence: invariant
measures, flux identities, entropy pairs, block-average bounds, the
entropy-production decomposition, compensated-compactness diagnostics, and
spectral/log-Sobolev facts on microcanonical hyperplanes.
"""

__version__ = "0.1.0"

from . import blocks, config, dynamics, equilibrium, harness, lattice, pde, production, spectral, young  # noqa: F401,E402
