"""citykit: city-scale instruction data synthesis, spatial benchmarks, an
LLM evaluation harness, and loss-based sample reweighting."""

__version__ = "0.1.0"

from .geo import bearing, haversine, quantize_direction  # noqa: F401
from .map_core import (  # noqa: F401
    AddressDescriptor,
    AoI,
    CityMap,
    GeoPoint,
    Junction,
    PoI,
    RoadSegment,
    export_map,
    import_map,
    nearby_entities,
    nearest_pois,
    reconstruct_address,
)
from .routing import (  # noqa: F401
    RoadGraph,
    Route,
    RouteStep,
    build_road_graph,
    shortest_path,
    shortest_path_length,
)
