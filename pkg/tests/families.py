"""Small hand-built games with known allocations."""

from __future__ import annotations

import numpy as np

from tsgame.instance import Instance


def unit_square(side: float = 1000.0) -> Instance:
    """Depot at the origin, locations at the other three corners (2 is opposite)."""
    return Instance.from_coords([(0, 0), (0, side), (side, side), (side, 0)], id="square")


def cluster_and_outlier(n: int, a: float = 1.0, far: float | None = None) -> Instance:
    """n-1 colocated locations at distance a, location n at distance ``far`` the other way."""
    far = a if far is None else far
    pts = [(0.0, 0.0)] + [(-a, 0.0)] * (n - 1) + [(far, 0.0)]
    return Instance.from_coords(pts, id=f"cluster-{n}")


def two_on_a_line(a: float = 1.0) -> Instance:
    return Instance.from_coords([(0, 0), (a, 0), (2 * a, 0)], id="line")


def two_pairs(eps: float, far: float) -> Instance:
    """Locations 1, 2 within eps of the depot and of each other; 3, 4 far away, eps apart.

    Every near-to-far distance is ``far``, so every shortcut saves exactly eps.
    """
    d = np.full((5, 5), far)
    near, distant = [0, 1, 2], [3, 4]
    for grp in (near, distant):
        for i in grp:
            for j in grp:
                d[i, j] = eps
    np.fill_diagonal(d, 0.0)
    return Instance(d, id="two-pairs")
