"""Convex hulls in the ROC square and their halfplane descriptions.

Used to express "this group's (FPR, TPR) point is reachable by randomizing
a base classifier" as linear inequalities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def convex_hull(points, tol=1e-12):
    """Counter-clockwise hull vertices (Andrew's monotone chain).

    Coordinates are snapped to a grid of spacing ``tol`` and the orientation
    test runs in exact integer arithmetic, so near-duplicates merge and
    collinear points are dropped consistently.  A degenerate input comes back
    as two vertices (a segment) or one (a point).
    """
    scale = 1.0 / tol
    pts = sorted({(round(float(x) * scale), round(float(y) * scale)) for x, y in points})
    if len(pts) > 2:

        def cross(o, a, b):
            return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

        lower = []
        for p in pts:
            while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
                lower.pop()
            lower.append(p)
        upper = []
        for p in reversed(pts):
            while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
                upper.pop()
            upper.append(p)
        pts = lower[:-1] + upper[:-1]
    return np.array([(x * tol, y * tol) for x, y in pts], dtype=float).reshape(-1, 2)


@dataclass(frozen=True)
class Halfplanes:
    """Polygon (or segment/point) as ``normals @ p <= offsets``."""

    vertices: np.ndarray
    normals: np.ndarray
    offsets: np.ndarray

    def contains(self, point, tol=1e-9):
        p = np.asarray(point, dtype=float)
        return bool(np.all(self.normals @ p <= self.offsets + tol))

    def violation(self, point):
        p = np.asarray(point, dtype=float)
        return float(max(0.0, (self.normals @ p - self.offsets).max(initial=0.0)))


def to_halfplanes(vertices) -> Halfplanes:
    v = np.asarray(vertices, dtype=float).reshape(-1, 2)
    normals, offsets = [], []
    if len(v) >= 3:
        for i in range(len(v)):
            a, b = v[i], v[(i + 1) % len(v)]
            d = b - a
            n = np.array([d[1], -d[0]]) / np.linalg.norm(d)
            normals.append(n)
            offsets.append(n @ a)
    elif len(v) == 2:
        a, b = v
        d = (b - a) / np.linalg.norm(b - a)
        n = np.array([-d[1], d[0]])
        normals += [n, -n, d, -d]
        offsets += [n @ a, -(n @ a), d @ b, -(d @ a)]
    else:
        (a,) = v
        for n in (np.array([1.0, 0]), np.array([-1.0, 0]), np.array([0, 1.0]), np.array([0, -1.0])):
            normals.append(n)
            offsets.append(n @ a)
    return Halfplanes(v, np.array(normals), np.array(offsets))


def hull_halfplanes(points) -> Halfplanes:
    return to_halfplanes(convex_hull(points))
