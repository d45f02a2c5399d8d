"""Energy-efficient power and bandwidth allocation over parallel frequency channels."""

__version__ = "0.1.0"
