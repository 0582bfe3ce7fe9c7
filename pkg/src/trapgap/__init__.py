"""Design and numerical verification of spectral gaps opened by periodic trap screens."""

from .errors import TrapGapError
from .limits import DesignParams, GapTargets, LimitSpectrum, forward, inverse_design

__version__ = "0.1.0"

__all__ = [
    "DesignParams",
    "GapTargets",
    "LimitSpectrum",
    "TrapGapError",
    "__version__",
    "forward",
    "inverse_design",
]
