"""Planar geometry helpers: convex polygons, polylines and vectorized queries.

Polygons are ``(n, 2)`` arrays with counter-clockwise vertex order.
"""

import math

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.remainder(angle, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


def rectangle(cx: float, cy: float, heading: float, half_length: float, half_width: float) -> np.ndarray:
    """Oriented rectangle corners, counter-clockwise from rear-right."""
    c, s = math.cos(heading), math.sin(heading)
    fwd = np.array([c, s])
    left = np.array([-s, c])
    center = np.array([cx, cy])
    return np.array(
        [
            center - fwd * half_length - left * half_width,
            center + fwd * half_length - left * half_width,
            center + fwd * half_length + left * half_width,
            center - fwd * half_length + left * half_width,
        ]
    )


def box(x0: float, y0: float, x1: float, y1: float) -> np.ndarray:
    """Axis-aligned box with corners (x0, y0) and (x1, y1)."""
    xa, xb = min(x0, x1), max(x0, x1)
    ya, yb = min(y0, y1), max(y0, y1)
    return np.array([[xa, ya], [xb, ya], [xb, yb], [xa, yb]], dtype=np.float64)


def polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def ensure_ccw(poly: np.ndarray) -> np.ndarray:
    poly = np.asarray(poly, dtype=np.float64)
    return poly[::-1].copy() if signed_area(poly) < 0 else poly


def clip_polygon(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clipping of ``subject`` by the convex polygon ``clip``."""
    output = [tuple(p) for p in subject]
    n = len(clip)
    for i in range(n):
        if not output:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        inputs, output = output, []

        def side(p):
            return ex * (p[1] - ay) - ey * (p[0] - ax)

        prev = inputs[-1]
        prev_side = side(prev)
        for cur in inputs:
            cur_side = side(cur)
            if cur_side >= 0.0:
                if prev_side < 0.0:
                    t = prev_side / (prev_side - cur_side)
                    output.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
                output.append(cur)
            elif prev_side >= 0.0:
                t = prev_side / (prev_side - cur_side)
                output.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
            prev, prev_side = cur, cur_side
    return np.array(output, dtype=np.float64).reshape(-1, 2)


def intersection_area(a: np.ndarray, b: np.ndarray) -> float:
    """Area of the intersection of two convex polygons."""
    return polygon_area(clip_polygon(a, b))


def convex_polygons_intersect(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis test; touching boundaries do not count as contact."""
    for poly in (a, b):
        n = len(poly)
        for i in range(n):
            edge = poly[(i + 1) % n] - poly[i]
            axis = np.array([-edge[1], edge[0]])
            pa = a @ axis
            pb = b @ axis
            if pa.max() <= pb.min() or pb.max() <= pa.min():
                return False
    return True


def point_in_convex(point: np.ndarray, poly: np.ndarray) -> bool:
    edges = np.roll(poly, -1, axis=0) - poly
    rel = point - poly
    cross = edges[:, 0] * rel[:, 1] - edges[:, 1] * rel[:, 0]
    return bool(np.all(cross >= 0.0))


def polygon_disc_intersect(poly: np.ndarray, center: np.ndarray, radius: float) -> bool:
    if point_in_convex(center, poly):
        return True
    a = poly
    b = np.roll(poly, -1, axis=0)
    return bool(segment_distances(center[None, :], a, b)[0] < radius)


def points_in_convex(points: np.ndarray, polys: np.ndarray) -> np.ndarray:
    """Containment mask of shape ``(n_polys, n_points)`` for quads ``(n_polys, k, 2)``."""
    if len(polys) == 0:
        return np.zeros((0, len(points)), dtype=bool)
    edges = np.roll(polys, -1, axis=1) - polys  # (Q, k, 2)
    rel = points[None, None, :, :] - polys[:, :, None, :]  # (Q, k, P, 2)
    cross = edges[:, :, None, 0] * rel[..., 1] - edges[:, :, None, 1] * rel[..., 0]
    return np.all(cross >= 0.0, axis=1)


def segment_distances(points: np.ndarray, seg_a: np.ndarray, seg_b: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest of the segments ``seg_a[i] -> seg_b[i]``."""
    if len(seg_a) == 0:
        return np.full(len(points), np.inf)
    d = seg_b - seg_a  # (S, 2)
    length_sq = np.maximum(np.einsum("ij,ij->i", d, d), 1e-12)
    rel = points[:, None, :] - seg_a[None, :, :]  # (P, S, 2)
    t = np.clip(np.einsum("psk,sk->ps", rel, d) / length_sq, 0.0, 1.0)
    closest = seg_a[None, :, :] + t[..., None] * d[None, :, :]
    dist = np.linalg.norm(points[:, None, :] - closest, axis=2)
    return dist.min(axis=1)


def polyline_stations(poly: np.ndarray) -> np.ndarray:
    """Cumulative arc length at each vertex."""
    seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def polyline_length(poly: np.ndarray) -> float:
    return float(polyline_stations(poly)[-1])


def interpolate_polyline(poly: np.ndarray, s: float) -> tuple[np.ndarray, float]:
    """Point and heading at arc length ``s`` (clamped to the polyline)."""
    stations = polyline_stations(poly)
    s = min(max(s, 0.0), stations[-1])
    index = int(np.searchsorted(stations, s, side="right") - 1)
    index = min(max(index, 0), len(poly) - 2)
    seg = poly[index + 1] - poly[index]
    seg_len = stations[index + 1] - stations[index]
    t = 0.0 if seg_len <= 0 else (s - stations[index]) / seg_len
    point = poly[index] + t * seg
    return point, math.atan2(seg[1], seg[0])


def slice_polyline(poly: np.ndarray, s0: float, s1: float) -> np.ndarray:
    """Sub-polyline between arc lengths ``s0 <= s1``."""
    stations = polyline_stations(poly)
    start, _ = interpolate_polyline(poly, s0)
    end, _ = interpolate_polyline(poly, s1)
    inner = poly[(stations > s0) & (stations < s1)]
    return np.vstack([start, inner, end])


def resample_polyline(poly: np.ndarray, spacing: float) -> np.ndarray:
    """Points at uniform arc-length spacing, always keeping both ends."""
    total = polyline_length(poly)
    count = max(1, int(math.ceil(total / spacing)))
    return np.array([interpolate_polyline(poly, total * i / count)[0] for i in range(count + 1)])


def quadratic_bezier(p0: np.ndarray, control: np.ndarray, p2: np.ndarray, samples: int = 12) -> np.ndarray:
    t = np.linspace(0.0, 1.0, samples)[:, None]
    return (1 - t) ** 2 * p0 + 2 * (1 - t) * t * control + t**2 * p2


def line_intersection(p: np.ndarray, d: np.ndarray, q: np.ndarray, e: np.ndarray):
    """Intersection of lines ``p + t d`` and ``q + u e``; None when parallel."""
    denom = d[0] * e[1] - d[1] * e[0]
    if abs(denom) < 1e-9:
        return None
    rel = q - p
    t = (rel[0] * e[1] - rel[1] * e[0]) / denom
    return p + t * d


def right_normal(direction: np.ndarray) -> np.ndarray:
    """Unit normal pointing to the right of ``direction``."""
    return np.array([direction[1], -direction[0]])


def offset_polyline(poly: np.ndarray, offset: float) -> np.ndarray:
    """Shift every vertex sideways; positive ``offset`` moves to the right."""
    seg = np.diff(poly, axis=0)
    seg = seg / np.maximum(np.linalg.norm(seg, axis=1, keepdims=True), 1e-12)
    tangents = np.vstack([seg[:1], seg[:-1] + seg[1:], seg[-1:]])
    tangents = tangents / np.maximum(np.linalg.norm(tangents, axis=1, keepdims=True), 1e-12)
    normals = np.stack([tangents[:, 1], -tangents[:, 0]], axis=1)
    return poly + offset * normals


def to_local(points: np.ndarray, origin: np.ndarray, heading: float) -> np.ndarray:
    """World points expressed as (forward, right) offsets from a pose."""
    c, s = math.cos(heading), math.sin(heading)
    rel = np.atleast_2d(points) - origin
    forward = rel[:, 0] * c + rel[:, 1] * s
    right = rel[:, 0] * s - rel[:, 1] * c
    return np.stack([forward, right], axis=1)
