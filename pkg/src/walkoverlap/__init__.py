"""Overlap volume of two lattice random walks started a distance R apart.

Analytic scaling functions Phi_d(xi), xi = R / sqrt(2t), for d < 4, and a
Monte Carlo ensemble engine that measures the same ratio on Z^d.
"""

__version__ = "0.1.0"
