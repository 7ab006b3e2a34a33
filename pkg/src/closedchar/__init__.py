"""Closed characteristics on convex hypersurfaces: index iteration and stability certificates."""

__version__ = "0.1.0"
