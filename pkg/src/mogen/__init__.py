"""Many-objective guided graph diffusion for architecture generation."""

__version__ = "0.1.0"
