"""Convex 2-D geometry primitives shared by the velocity-space solvers.

All polygons are numpy arrays of shape (n, 2) with vertices in
counter-clockwise order and no repeated closing vertex. Degenerate
polygons (a single point or a segment) are allowed where noted.
"""

from __future__ import annotations

import math

import numpy as np


def polygon_area(vertices: np.ndarray) -> float:
    """Signed area (positive for counter-clockwise order)."""
    x = vertices[:, 0]
    y = vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def ensure_ccw(vertices: np.ndarray) -> np.ndarray:
    if len(vertices) >= 3 and polygon_area(vertices) < 0.0:
        return vertices[::-1].copy()
    return vertices


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Andrew monotone chain. Returns CCW vertices; collapses to a point
    or segment for degenerate input."""
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) <= 2:
        return pts
    # lexicographic sort is given by np.unique already (x, then y)
    def half(chain_pts):
        chain = []
        for p in chain_pts:
            while len(chain) >= 2:
                cross = (chain[-1][0] - chain[-2][0]) * (p[1] - chain[-2][1]) - (
                    chain[-1][1] - chain[-2][1]
                ) * (p[0] - chain[-2][0])
                if cross <= 0.0:
                    chain.pop()
                else:
                    break
            chain.append(p)
        return chain

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:  # all collinear
        lo = pts[0]
        hi = pts[-1]
        return np.array([lo]) if np.array_equal(lo, hi) else np.array([lo, hi])
    return hull


def contains_point(vertices: np.ndarray, point, tol: float = 1e-9) -> bool:
    """Point membership for a convex CCW polygon (boundary counts inside)."""
    p = np.asarray(point, dtype=float)
    n = len(vertices)
    if n == 1:
        return bool(np.hypot(*(p - vertices[0])) <= tol)
    if n == 2:
        return point_segment_distance(p, vertices[0], vertices[1]) <= tol
    nxt = np.roll(vertices, -1, axis=0)
    edge = nxt - vertices
    rel = p - vertices
    cross = edge[:, 0] * rel[:, 1] - edge[:, 1] * rel[:, 0]
    return bool(np.all(cross >= -tol))


def contains_points(vertices: np.ndarray, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Vectorized membership test for many query points."""
    pts = np.asarray(points, dtype=float)
    n = len(vertices)
    if n == 1:
        return np.hypot(pts[:, 0] - vertices[0, 0], pts[:, 1] - vertices[0, 1]) <= tol
    if n == 2:
        return np.array([point_segment_distance(p, vertices[0], vertices[1]) <= tol for p in pts])
    nxt = np.roll(vertices, -1, axis=0)
    edge = nxt - vertices
    relx = pts[:, None, 0] - vertices[None, :, 0]
    rely = pts[:, None, 1] - vertices[None, :, 1]
    cross = edge[None, :, 0] * rely - edge[None, :, 1] * relx
    return np.all(cross >= -tol, axis=1)


def point_segment_distance(p, a, b) -> float:
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.hypot(*(p - a)))
    t = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.hypot(*(p - (a + t * ab))))


def closest_point_on_segment(p, a, b) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return a.copy()
    t = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return a + t * ab


def closest_boundary_point(vertices: np.ndarray, point) -> np.ndarray:
    """Closest point on the polygon boundary to `point`."""
    p = np.asarray(point, dtype=float)
    n = len(vertices)
    if n == 1:
        return vertices[0].copy()
    best = None
    best_d = math.inf
    for i in range(n):
        a = vertices[i]
        b = vertices[(i + 1) % n] if n > 2 else vertices[1 - i] if n == 2 else a
        c = closest_point_on_segment(p, a, b)
        d = float(np.hypot(*(p - c)))
        if d < best_d - 1e-15:
            best_d = d
            best = c
    return best


def closest_point_in_polygon(vertices: np.ndarray, point, tol: float = 1e-9) -> np.ndarray:
    """Closest point of the (filled) polygon to `point`."""
    p = np.asarray(point, dtype=float)
    if contains_point(vertices, p, tol):
        return p.copy()
    return closest_boundary_point(vertices, p)


def clip_halfplane(vertices: np.ndarray, point, normal, tol: float = 1e-12) -> np.ndarray:
    """Clip a convex polygon against {v: (v - point) . normal >= 0}.

    Returns the clipped polygon, possibly with fewer than 3 vertices
    (empty array when nothing survives).
    """
    pt = np.asarray(point, dtype=float)
    nrm = np.asarray(normal, dtype=float)
    n = len(vertices)
    if n == 0:
        return vertices
    dist = (vertices - pt) @ nrm
    if np.all(dist >= -tol):
        return vertices
    if np.all(dist < -tol):
        return np.empty((0, 2))
    if n == 1:
        return vertices if dist[0] >= -tol else np.empty((0, 2))
    if n == 2:
        return _clip_segment(vertices, dist, tol)
    out = []
    for i in range(n):
        j = (i + 1) % n
        di, dj = dist[i], dist[j]
        if di >= -tol:
            out.append(vertices[i])
        if (di >= -tol) != (dj >= -tol):
            t = di / (di - dj)
            out.append(vertices[i] + t * (vertices[j] - vertices[i]))
    if not out:
        return np.empty((0, 2))
    pts = np.array(out)
    # drop near-duplicate consecutive vertices introduced by clipping
    keep = [0]
    for i in range(1, len(pts)):
        if np.hypot(*(pts[i] - pts[keep[-1]])) > 1e-12:
            keep.append(i)
    if len(keep) > 1 and np.hypot(*(pts[keep[-1]] - pts[keep[0]])) <= 1e-12:
        keep.pop()
    return pts[keep]


def _clip_segment(vertices, dist, tol):
    a, b = vertices
    da, db = dist
    if da >= -tol and db >= -tol:
        return vertices
    if da < -tol and db < -tol:
        return np.empty((0, 2))
    t = da / (da - db)
    cut = a + t * (b - a)
    kept = a if da >= -tol else b
    return np.array([kept, cut]) if da >= -tol else np.array([cut, kept])


def _start_vertex(vertices: np.ndarray) -> int:
    """Index of the lowest (then leftmost) vertex."""
    idx = np.lexsort((vertices[:, 0], vertices[:, 1]))
    return int(idx[0])


def minkowski_sum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minkowski sum of two convex CCW polygons by merged edge rotation.

    Starting both polygons at their bottom-most vertex makes the edge
    angles of each monotone in [0, 2*pi), so the edges merge like a
    sorted-list merge. Degenerate inputs (point/segment) are handled
    separately.
    """
    if len(a) == 1:
        return b + a[0]
    if len(b) == 1:
        return a + b[0]
    if len(a) == 2 or len(b) == 2:
        sums = (a[:, None, :] + b[None, :, :]).reshape(-1, 2)
        return convex_hull(sums)
    ra = np.roll(a, -_start_vertex(a), axis=0)
    rb = np.roll(b, -_start_vertex(b), axis=0)
    ea = np.diff(np.vstack([ra, ra[:1]]), axis=0)
    eb = np.diff(np.vstack([rb, rb[:1]]), axis=0)
    ang_a = np.mod(np.arctan2(ea[:, 1], ea[:, 0]), 2.0 * np.pi)
    ang_b = np.mod(np.arctan2(eb[:, 1], eb[:, 0]), 2.0 * np.pi)
    na, nb = len(ea), len(eb)
    out = [ra[0] + rb[0]]
    i = j = 0
    while i < na or j < nb:
        if i >= na:
            step = eb[j]
            j += 1
        elif j >= nb:
            step = ea[i]
            i += 1
        elif ang_a[i] < ang_b[j]:
            step = ea[i]
            i += 1
        elif ang_b[j] < ang_a[i]:
            step = eb[j]
            j += 1
        else:  # parallel edges advance together
            step = ea[i] + eb[j]
            i += 1
            j += 1
        out.append(out[-1] + step)
    pts = np.array(out[:-1])  # final step closes back onto the start
    return ensure_ccw(pts)


def inflate_polygon(vertices: np.ndarray, margin: float) -> np.ndarray:
    """Outward inflation by Minkowski sum with an L-inf square of half
    width `margin` (a superset of the L2 disc inflation)."""
    if margin <= 0.0:
        return vertices
    square = np.array(
        [[-margin, -margin], [margin, -margin], [margin, margin], [-margin, margin]]
    )
    return minkowski_sum(vertices, square)


def bounding_box(vertices: np.ndarray) -> tuple[float, float, float, float]:
    return (
        float(vertices[:, 0].min()),
        float(vertices[:, 1].min()),
        float(vertices[:, 0].max()),
        float(vertices[:, 1].max()),
    )


def rect_corners(cx: float, cy: float, heading: float, length: float, width: float) -> np.ndarray:
    """Corners of an oriented rectangle centered at (cx, cy)."""
    c = math.cos(heading)
    s = math.sin(heading)
    hl = 0.5 * length
    hw = 0.5 * width
    return np.array(
        [
            [cx + c * hl - s * hw, cy + s * hl + c * hw],
            [cx - c * hl - s * hw, cy - s * hl + c * hw],
            [cx - c * hl + s * hw, cy - s * hl - c * hw],
            [cx + c * hl + s * hw, cy + s * hl - c * hw],
        ]
    )


def rects_overlap(corners_a: np.ndarray, corners_b: np.ndarray) -> bool:
    """Separating-axis test for two rectangles. Touching edges do not
    count as overlap (strict interior intersection required)."""
    for corners in (corners_a, corners_b):
        for i in range(2):  # two unique edge directions per rectangle
            edge = corners[(i + 1) % 4] - corners[i]
            axis = np.array([-edge[1], edge[0]])
            pa = corners_a @ axis
            pb = corners_b @ axis
            if pa.max() <= pb.min() or pb.max() <= pa.min():
                return False
    return True
