"""
Lowest-order Crouzeix-Raviart and Raviart-Thomas finite elements on
simplicial meshes, with numerical certification of the orthogonality
relations between their elementwise projections and of discrete convex
duality.
"""
__version__ = "0.1.0"
