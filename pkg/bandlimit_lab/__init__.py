"""Numerical lab for band-limited Laplacian eigenspaces on circles, tori, spheres and their products."""

__version__ = "0.1.0"
