"""Analytically tractable ensembles of non-stationary covariances.

The package estimates time-varying covariances from multivariate amplitude
panels, fits the variance-law deformation that encodes the non-stationarity,
evaluates the resulting heavy-tailed compound densities in closed form, and
verifies every formula against quadrature and Monte Carlo oracles.
"""

from . import covariance, deformation, distributions, marketdata, montecarlo, specfun

__all__ = [
    "covariance",
    "deformation",
    "distributions",
    "marketdata",
    "montecarlo",
    "specfun",
]

__version__ = "0.1.0"
