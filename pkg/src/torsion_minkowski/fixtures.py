"""Standard test bodies."""

from __future__ import annotations

import numpy as np

from .geometry import ConvexPolygon, disk_polygon, regular_polygon, unit_square


def square() -> ConvexPolygon:
    return unit_square(1.0)


def hexagon() -> ConvexPolygon:
    return regular_polygon(6, 1.0)


def disk(n: int = 512) -> ConvexPolygon:
    return disk_polygon(n)


def random_polygon(n: int = 12, seed: int = 0, min_gap: float = 0.25) -> ConvexPolygon:
    """Random convex ``n``-gon containing the origin.

    Vertices sit on an ellipse at random angles at least ``min_gap`` apart,
    then the body is shifted by a small random offset.
    """
    if n * min_gap >= 2 * np.pi:
        raise ValueError("min_gap too large for n vertices")
    rng = np.random.default_rng(seed)
    slack = 2 * np.pi - n * min_gap
    gaps = min_gap + slack * rng.dirichlet(np.ones(n))
    t = rng.uniform(0, 2 * np.pi) + np.cumsum(gaps)
    axes = rng.uniform(0.8, 1.2, size=2)
    V = np.column_stack([axes[0] * np.cos(t), axes[1] * np.sin(t)])
    V += rng.uniform(-0.1, 0.1, size=2)
    return ConvexPolygon(V)


FIXTURE_NAMES = ("square", "hexagon", "random12")


def fixture(name: str, seed: int = 0) -> ConvexPolygon:
    """Look up a body by name; ``seed`` only affects ``random12``."""
    if name == "square":
        return square()
    if name == "hexagon":
        return hexagon()
    if name == "random12":
        return random_polygon(12, seed)
    if name == "disk":
        return disk()
    raise KeyError(f"unknown fixture {name!r}")
