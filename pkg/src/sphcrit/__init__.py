"""Critical points of Gaussian random spherical harmonics and their chaos projections."""

__version__ = "0.1.0"

from .intervals import Interval, parse_interval
from .random_field import HarmonicField, sample_field
from .critical_census import CriticalCensus, find_critical_points

__all__ = ["Interval", "parse_interval", "HarmonicField", "sample_field", "CriticalCensus", "find_critical_points", "__version__"]
