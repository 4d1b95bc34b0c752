"""Numerical companion for the period doubling Schrödinger operator.

Modules
-------
substitution   fixed point of ``a -> ab, b -> aa`` and its block structure
transfer       scaled 2x2 transfer matrices, trace orbits, solutions
spectrum       periodic band approximants and the empirical trace bound
bounds         four-block propagation across scales and the growth constants
growth         truncated norms of generalized eigenfunctions
transport      Laplace-averaged moments and dynamical exponent proxies
cli            the ``pdspec`` command
"""
__version__ = "0.1.0"
