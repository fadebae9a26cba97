"""Synthetic instances: random stop layouts around each station plus enumerated routes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import CostParams, Instance, RegionSpec, RouteSpec
from .ingest import DEFAULT_SPEED_MPH, enumerate_routes

# (trains, stops, routes) per region
PRESETS: dict[int, tuple[tuple[int, int, int], ...]] = {
    1: ((12, 4, 10), (12, 6, 23), (12, 6, 30), (12, 8, 39)),
    2: ((12, 4, 13), (12, 6, 31), (12, 6, 24), (12, 8, 40)),
    3: ((12, 4, 13), (12, 6, 31), (12, 6, 24), (12, 8, 40), (12, 8, 49)),
    4: ((12, 4, 13), (12, 6, 31), (12, 6, 24), (12, 8, 40), (12, 8, 49), (12, 8, 59)),
}


@dataclass(frozen=True)
class InstanceSpec:
    regions: tuple[tuple[int, int, int], ...]
    fleet_bound: int = 60
    headway_minutes: float = 10.0
    vehicle_capacity: int = 5
    costs: CostParams = CostParams(4000.0, 2.0, 1.0)
    half_width_miles: float = 0.5
    speed_mph: float = DEFAULT_SPEED_MPH
    max_stops_per_route: int = 3


def generate_instance(spec: InstanceSpec, seed: int) -> Instance:
    """Place stops uniformly in each region's square and keep the ``K_s`` cheapest routes.

    Every single-stop route is always kept; the rest of the route budget is
    filled with multi-stop routes ordered by size then duration.
    """
    rng = np.random.default_rng([seed, 7])
    regions = []
    next_id = 0
    for s, (n_trains, n_stops, n_routes) in enumerate(spec.regions):
        xy = rng.uniform(-spec.half_width_miles, spec.half_width_miles, size=(n_stops, 2))
        routes = enumerate_routes(xy, spec.max_stops_per_route, spec.speed_mph, spec.headway_minutes,
                                  region_id=s, first_route_id=next_id, max_routes=n_routes)
        if len(routes) != n_routes:
            raise ValueError(f"region {s}: only {len(routes)} routes available, {n_routes} requested")
        next_id += len(routes)
        regions.append(RegionSpec(s, n_trains, n_stops, tuple(routes)))
    return Instance(tuple(regions), spec.fleet_bound, spec.headway_minutes, spec.vehicle_capacity, spec.costs)


def preset_instance(number: int, seed: int = 0, **overrides) -> Instance:
    """Instances shaped like the four benchmark layouts (random geometry)."""
    try:
        shape = PRESETS[number]
    except KeyError:
        raise ValueError(f"unknown preset {number}; choose from {sorted(PRESETS)}") from None
    return generate_instance(InstanceSpec(shape, **overrides), seed)


def tiny_instance(costs: CostParams = CostParams(0.0, 2.0, 1.0), fleet_bound: int = 2,
                  capacity: int = 2, n_trains: int = 2, headway: float = 10.0) -> Instance:
    """One region, two stops, three routes (each stop alone, then both)."""
    routes = (
        RouteSpec(0, 0, (1, 0), 1, {0: 4.0}),
        RouteSpec(1, 0, (0, 1), 1, {1: 6.0}),
        RouteSpec(2, 0, (1, 1), 2, {0: 4.0, 1: 9.0}),
    )
    return Instance((RegionSpec(0, n_trains, 2, routes),), fleet_bound, headway, capacity, costs)
