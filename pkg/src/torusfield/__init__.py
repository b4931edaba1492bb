"""Covariance models for multivariate Gaussian fields on S^d1 x S^d2 x R^d.

The index set is the product of two unit hyperspheres (a hypertorus) and a
Euclidean space.  The package provides:

- ``specfun``:    Gegenbauer polynomials, Matern functions, Gauss-Jacobi rules.
- ``geometry``:   sites on the product space and their pair invariants (s, r, h).
- ``kernels``:    the catalogue of componentwise-isotropic matrix-valued kernels.
- ``spectral``:   Schoenberg-coefficient extraction and reconstruction.
- ``validation``: numerical positive/conditionally-negative definiteness audits.
- ``fields``:     Gaussian field simulation and simple kriging.
- ``nonstat``:    harmonic expansions that are not radially symmetric in R^d.
- ``cli``:        config-driven command line front end.
"""

__version__ = "0.1.0"
