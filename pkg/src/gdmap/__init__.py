"""Group diffusion for generating 3D point-cloud maps from path data."""

__version__ = "0.1.0"
