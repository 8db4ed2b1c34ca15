"""
Tamed Taylor - strong order-1.5 simulation of SDEs with superlinear coefficients

Command-line toolkit for tamed Euler, tamed Milstein and tamed order-1.5
strong Taylor schemes: Monte Carlo convergence rates, path simulation,
moment probes and numerical checks of the growth assumptions.
"""

__version__ = "1.0.0"
__author__ = "Tamed Taylor Team"
