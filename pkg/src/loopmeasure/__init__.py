"""Desk-scale Monte Carlo lab for the conformally invariant measure on
self-avoiding planar loops: Brownian hull boundaries, critical percolation
perimeters and weighted self-avoiding polygons, with estimators for the
quantitative identities tying the three together."""

__version__ = "0.1.0"
