"""Great-circle geometry on a spherical Earth model.

Distances are returned in meters. Latitudes and longitudes are WGS-ish
decimal degrees, but no ellipsoidal correction is applied: the sphere is
good to ~0.5% which is far below the noise of image retrieval.
"""

import math
from dataclasses import dataclass

EARTH_RADIUS_M = 6_371_000.0
"""Mean Earth radius in meters, shared by both distance functions."""


@dataclass(frozen=True)
class GeoPoint:
    """A geographic coordinate in decimal degrees."""

    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"coordinates must be finite, got ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points in meters.

    Exact on the sphere for antipodal and identical points alike; the
    half-angle form keeps precision for the sub-meter separations that
    consecutive camera frames produce.
    """
    lat1 = math.radians(a.lat)
    lat2 = math.radians(b.lat)
    sin_dlat_half = math.sin(math.radians(b.lat - a.lat) / 2.0)
    sin_dlon_half = math.sin(math.radians(b.lon - a.lon) / 2.0)
    h = sin_dlat_half**2 + math.cos(lat1) * math.cos(lat2) * sin_dlon_half**2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def equirect_m(a: GeoPoint, b: GeoPoint) -> float:
    """Equirectangular approximation of the distance between two points.

    Projects the pair onto a plane at their mean latitude. Cheap and
    accurate to well under 0.2% for separations below a few kilometers
    away from the poles; used as a cross-check for :func:`haversine_m`.
    """
    dlat = math.radians(b.lat - a.lat)
    dlon = math.radians(b.lon - a.lon)
    mean_lat = math.radians((a.lat + b.lat) / 2.0)
    x = dlon * math.cos(mean_lat)
    return EARTH_RADIUS_M * math.hypot(dlat, x)
