"""2D convex hulls and small polygon utilities for the mosaic layout."""

from __future__ import annotations

import numpy as np

# Circumradius of the display-only triangle used for degenerate slices.
DEGENERATE_RADIUS = 1e-3


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _farthest_from_line(points: np.ndarray, p0, p1) -> int:
    d = (p1[0] - p0[0]) * (points[:, 1] - p0[1]) - (points[:, 0] - p0[0]) * (
        p1[1] - p0[1]
    )
    return int(np.argmax(d))


def _qhull_side(points: np.ndarray, p0, p1, out: list) -> None:
    # Points strictly left of p0 -> p1; recurse on the farthest one.
    if len(points) == 0:
        return
    idx = _farthest_from_line(points, p0, p1)
    far = points[idx]
    rest = np.delete(points, idx, axis=0)
    left_a = rest[np.array([_cross(p0, far, q) > 0 for q in rest], dtype=bool)]
    left_b = rest[np.array([_cross(far, p1, q) > 0 for q in rest], dtype=bool)]
    _qhull_side(left_a, p0, far, out)
    out.append((float(far[0]), float(far[1])))
    _qhull_side(left_b, far, p1, out)


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Quickhull.  Returns hull vertices in counterclockwise order.

    Collinear inputs collapse to the two extreme points; fewer than three
    distinct points are returned as-is (callers decide how to display them).
    """
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if len(pts) <= 2:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    lo = pts[order[0]]
    hi = pts[order[-1]]
    side = np.array([_cross(lo, hi, q) for q in pts])
    upper: list = []
    lower: list = []
    _qhull_side(pts[side > 0], lo, hi, upper)
    _qhull_side(pts[side < 0], hi, lo, lower)
    hull = (
        [(float(lo[0]), float(lo[1]))]
        + upper
        + [(float(hi[0]), float(hi[1]))]
        + lower
    )
    if len(hull) < 3:
        return np.array(hull)
    # Built left->right along the upper side then back along the lower side,
    # which traces the hull clockwise; reverse for counterclockwise.
    ccw = np.array(hull[::-1])
    if polygon_area(ccw) < 0:
        ccw = ccw[::-1]
    return ccw


def polygon_area(vertices: np.ndarray) -> float:
    """Signed shoelace area; positive for counterclockwise orientation."""
    v = np.asarray(vertices, dtype=np.float64)
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(
        np.sum(x * np.roll(y, -1)) - np.sum(y * np.roll(x, -1))
    )


def degenerate_triangle(center, radius: float = DEGENERATE_RADIUS) -> np.ndarray:
    """Display-only equilateral triangle around a point, counterclockwise."""
    cx, cy = float(center[0]), float(center[1])
    angles = np.deg2rad([90.0, 210.0, 330.0])
    return np.stack([cx + radius * np.cos(angles), cy + radius * np.sin(angles)], axis=1)
