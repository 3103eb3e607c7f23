"""Back-action evasion and QND analysis of linear quantum systems."""
from .core import LqbaeError
from .model import SystemParams, QuadratureRealization, quadrature_realization

__all__ = ["LqbaeError", "SystemParams", "QuadratureRealization", "quadrature_realization"]
__version__ = "0.1.0"
