"""Geodesy primitives shared by every other module.

All distances are great-circle (haversine) on a sphere of radius
6,371,000 m. Meter-scale geometry (side of road, net displacement)
is done in a local equirectangular frame because spherical effects
are negligible at city scale.
"""

from __future__ import annotations

import math

EARTH_RADIUS_M = 6_371_000.0

# Eight compass sectors, 45 degrees wide, centered on the cardinals.
COMPASS = ("N", "NE", "E", "SE", "S", "SW", "W", "NW")

COMPASS_WORDS = {
    "N": "north",
    "NE": "northeast",
    "E": "east",
    "SE": "southeast",
    "S": "south",
    "SW": "southwest",
    "W": "west",
    "NW": "northwest",
}

WORD_TO_COMPASS = {w: c for c, w in COMPASS_WORDS.items()}

# Unit (east, north) displacement per compass sector.
_S = math.sqrt(0.5)
COMPASS_UNIT = {
    "N": (0.0, 1.0),
    "NE": (_S, _S),
    "E": (1.0, 0.0),
    "SE": (_S, -_S),
    "S": (0.0, -1.0),
    "SW": (-_S, -_S),
    "W": (-1.0, 0.0),
    "NW": (-_S, _S),
}


def haversine(lon1: float, lat1: float, lon2: float, lat2: float) -> float:
    """Great-circle distance in meters between two WGS84 points."""
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


def bearing(lon1: float, lat1: float, lon2: float, lat2: float) -> float:
    """Initial great-circle bearing in degrees, clockwise from north, in [0, 360).

    The two points must not coincide.
    """
    if lon1 == lon2 and lat1 == lat2:
        raise ValueError("bearing undefined for coincident points")
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    dl = math.radians(lon2 - lon1)
    y = math.sin(dl) * math.cos(p2)
    x = math.cos(p1) * math.sin(p2) - math.sin(p1) * math.cos(p2) * math.cos(dl)
    deg = math.degrees(math.atan2(y, x))
    return deg % 360.0


def quantize_direction(bearing_deg: float) -> str:
    """Map a bearing in [0, 360) onto one of the 8 compass sectors.

    Sector k = floor(((bearing + 22.5) mod 360) / 45); the lower boundary
    is inclusive, so 22.5 quantizes to NE.
    """
    if not 0.0 <= bearing_deg < 360.0:
        raise ValueError(f"bearing must be in [0, 360), got {bearing_deg}")
    k = int(((bearing_deg + 22.5) % 360.0) // 45.0)
    return COMPASS[k]


def bearing_from_east_north(east_m: float, north_m: float) -> float:
    """Bearing of a planar (east, north) displacement, degrees in [0, 360)."""
    if east_m == 0.0 and north_m == 0.0:
        raise ValueError("bearing undefined for zero displacement")
    return math.degrees(math.atan2(east_m, north_m)) % 360.0


def local_xy(lon0: float, lat0: float, lon: float, lat: float) -> tuple[float, float]:
    """Equirectangular (east, north) meters of (lon, lat) relative to (lon0, lat0)."""
    x = math.radians(lon - lon0) * math.cos(math.radians(lat0)) * EARTH_RADIUS_M
    y = math.radians(lat - lat0) * EARTH_RADIUS_M
    return x, y


def offset_lonlat(lon0: float, lat0: float, east_m: float, north_m: float) -> tuple[float, float]:
    """Inverse of local_xy: shift (lon0, lat0) by planar (east, north) meters."""
    lat = lat0 + math.degrees(north_m / EARTH_RADIUS_M)
    lon = lon0 + math.degrees(east_m / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    return lon, lat
