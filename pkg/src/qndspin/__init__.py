"""qndspin: Monte Carlo simulator for conditional spin squeezing of a large
atomic ensemble by QND readout of the collective vacuum Rabi splitting."""

__version__ = "0.1.0"

from ._kernels import backend_name

__all__ = ["__version__", "backend_name"]
