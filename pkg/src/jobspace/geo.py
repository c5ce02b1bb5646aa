"""Geodetic helpers: unit-sphere location vectors and great-circle distance."""

from math import asin, cos, radians, sin, sqrt

import numpy as np

EARTH_RADIUS_MILES = 3958.8
MILES_PER_DEGREE = 2.0 * np.pi * EARTH_RADIUS_MILES / 360.0


def validate_lat_lon(lat_deg: float, lon_deg: float) -> None:
    """Raise ValueError unless (lat, lon) is a valid coordinate pair."""
    if not (-90.0 <= lat_deg <= 90.0):
        raise ValueError(f"latitude {lat_deg} outside [-90, 90]")
    if not (-180.0 <= lon_deg <= 180.0):
        raise ValueError(f"longitude {lon_deg} outside [-180, 180]")


def geo_to_unit_vector(lat_deg: float, lon_deg: float) -> np.ndarray:
    """Map latitude/longitude (degrees) to a unit 3-vector.

    Returns (cos(lat)cos(lon), cos(lat)sin(lon), sin(lat)), i.e. the point
    on the unit sphere under the usual spherical-to-Cartesian transform.
    """
    validate_lat_lon(lat_deg, lon_deg)
    lat = radians(lat_deg)
    lon = radians(lon_deg)
    return np.array([cos(lat) * cos(lon), cos(lat) * sin(lon), sin(lat)], dtype=np.float64)


def haversine_miles(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in miles between two coordinate pairs."""
    validate_lat_lon(lat1, lon1)
    validate_lat_lon(lat2, lon2)
    p1, l1, p2, l2 = map(radians, (lat1, lon1, lat2, lon2))
    a = sin((p2 - p1) / 2.0) ** 2 + cos(p1) * cos(p2) * sin((l2 - l1) / 2.0) ** 2
    # clamp guards rounding for antipodal points
    return 2.0 * EARTH_RADIUS_MILES * asin(min(1.0, sqrt(a)))
