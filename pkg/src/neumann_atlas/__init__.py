"""Neumann domains of torus eigenfunctions and the star-like domain toolkit.

Modules
-------
wavefield      torus eigenfunctions and arithmetic random waves
morse          critical points (detection, Newton refinement, classification)
tracer         Neumann lines, Neumann domains, rho statistics
stardomain     closed-form geometry of the separable star-like domain
spectral       P1 finite elements for mixed Laplace eigenproblems
rearrange      rearrangement onto a sector and its inequalities
isoperimetric  the F and C functionals and circular-arc minimizers
cli            batch entry points
"""
__version__ = "0.1.0"
