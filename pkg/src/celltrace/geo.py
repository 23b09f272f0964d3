"""Coordinate types, distance functions, and time bucketing.

The simulation plane (scaled units, 1.0 == 100 m) and the geographic plane
(degrees) are deliberately separate types with separate distance functions,
so scaled units can never be fed to the great-circle formula or vice versa.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

EARTH_RADIUS_M = 6_371_000.0

# Meridian arc length of one degree of latitude on the spherical Earth model.
METERS_PER_DEGREE = EARTH_RADIUS_M * math.pi / 180.0

DEFAULT_BUCKET_WIDTH = 300


@dataclass(frozen=True)
class PlanarPoint:
    """Point in the Cartesian simulation plane (1.0 scaled unit == 100 m)."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"planar coordinates must be finite, got ({self.x}, {self.y})")


@dataclass(frozen=True)
class GeoCoordinate:
    """WGS-ish latitude/longitude pair in degrees; ranges checked on construction."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and -90.0 <= self.lat <= 90.0):
            raise ValueError(f"latitude {self.lat!r} outside [-90, 90]")
        if not (math.isfinite(self.lon) and -180.0 <= self.lon <= 180.0):
            raise ValueError(f"longitude {self.lon!r} outside [-180, 180]")


@dataclass(frozen=True)
class TimeBucket:
    """One slot of the fixed-width temporal grid used for contact matching."""

    index: int
    width: int = DEFAULT_BUCKET_WIDTH

    def __post_init__(self) -> None:
        if self.width <= 0:
            raise ValueError(f"bucket width must be positive, got {self.width}")

    @property
    def start(self) -> int:
        """Epoch seconds at which this bucket begins."""
        return self.index * self.width


def euclidean_distance(a: PlanarPoint, b: PlanarPoint) -> float:
    """Straight-line distance in scaled units: sqrt((ax-bx)^2 + (ay-by)^2)."""
    dx = a.x - b.x
    dy = a.y - b.y
    return math.sqrt(dx * dx + dy * dy)


def haversine_distance(a: GeoCoordinate, b: GeoCoordinate) -> float:
    """Great-circle distance in meters on a sphere of radius 6,371,000 m."""
    lat1 = math.radians(a.lat)
    lat2 = math.radians(b.lat)
    dlat = math.radians(b.lat - a.lat)
    dlon = math.radians(b.lon - a.lon)
    h = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(h))


def time_bucket(timestamp: float, width: int = DEFAULT_BUCKET_WIDTH) -> TimeBucket:
    """Map an epoch-seconds timestamp to its bucket: index = floor(timestamp / width)."""
    if width <= 0:
        raise ValueError(f"bucket width must be positive, got {width}")
    return TimeBucket(index=math.floor(timestamp / width), width=width)
