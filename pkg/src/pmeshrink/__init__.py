"""Self-similar profiles and radial simulations for the porous medium equation
with spatially inhomogeneous strong absorption."""

__version__ = "0.1.0"
