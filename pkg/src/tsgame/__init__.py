"""Cost-to-serve allocations for traveling salesperson games."""

from .instance import Instance, generate_euclidean, read_instance, symmetrize, validate, write_instance
from .shapley import Allocation, appro_shapley, exact_shapley, subset_shapley
from .proxies import (blend_proxy, christofides_proxy, depot_proxy, moat_proxy, reroute_proxy,
                      shortcut_proxy)

__version__ = "0.1.0"

__all__ = [
    "Instance", "generate_euclidean", "read_instance", "write_instance", "symmetrize", "validate",
    "Allocation", "exact_shapley", "appro_shapley", "subset_shapley",
    "depot_proxy", "shortcut_proxy", "reroute_proxy", "christofides_proxy", "moat_proxy",
    "blend_proxy",
]
