"""Numerical laboratory for the Boltzmann equation for bosons (hard spheres)
near Bose-Einstein equilibria and its incompressible fluid limit."""

__version__ = "0.1.0"
