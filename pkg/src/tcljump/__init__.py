"""Time-convolutionless master equations and their jump unravelings."""

from .models import BandGap, Custom, DetunedJC, ResonantJC
from .rates import RateMethod, RatePair

__version__ = "0.1.0"

__all__ = ["BandGap", "Custom", "DetunedJC", "ResonantJC", "RateMethod", "RatePair"]
