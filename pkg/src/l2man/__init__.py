"""
l2man: metric geometry of manifold-valued L2 spaces over finite probability spaces,
with constructive checks of isometry rigidity and of affine-map densities.
"""

__version__ = "0.1.0"
