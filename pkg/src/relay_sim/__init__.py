"""Line-of-sight relaying over Poisson building processes."""

from . import heights
from .heights import AtomMixture, Exponential, HeightModel, Tabulated, Uniform, Weibull

__version__ = "0.1.0"

__all__ = [
    "heights",
    "HeightModel",
    "Exponential",
    "Weibull",
    "Uniform",
    "AtomMixture",
    "Tabulated",
]
