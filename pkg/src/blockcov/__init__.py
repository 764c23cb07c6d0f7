"""Bayesian estimation of group (stochastic block) covariance matrices."""

__version__ = "0.1.0"
