"""Routing toolkit: vision-augmented encodings with preference-group training.

Thin wrapper over the native extension. Structured results cross the
boundary as JSON strings; the helpers here decode them to plain objects.
"""

import json as _json

from ._vagpo import (
    Instance,
    Policy,
    at_most_one_collision_prob,
    augment_x8,
    brute_force_cvrp,
    generate_cvrp,
    generate_tsp,
    held_karp,
    instance_from_json,
    nearest_neighbor,
    pixel_collision_prob,
    rasterize,
    read_instances,
    routes_cost,
    tour_cost,
    two_opt,
    validate_routes,
    validate_tour,
    write_instances,
)
from ._vagpo import train as _train_json

__all__ = [
    "Instance",
    "Policy",
    "at_most_one_collision_prob",
    "augment_x8",
    "brute_force_cvrp",
    "generate_cvrp",
    "generate_tsp",
    "held_karp",
    "instance_from_json",
    "nearest_neighbor",
    "pixel_collision_prob",
    "rasterize",
    "read_instances",
    "routes_cost",
    "solve",
    "tour_cost",
    "train",
    "two_opt",
    "validate_routes",
    "validate_tour",
    "write_instances",
]


def solve(policy, instance, augment=True):
    """Solve one instance; returns the solution record as a dict."""
    return _json.loads(policy.solve(instance, augment))


def train(**config):
    """Run a training job; keyword arguments mirror the run-config fields.

    Returns a dict with ``grad_steps``, ``diverged``, and ``metrics`` (one
    dict per outer step).
    """
    return _json.loads(_train_json(_json.dumps(config)))
