"""Target-specific QBX for Laplace layer potentials on smooth 3D surfaces."""
__version__ = "0.1.0"
