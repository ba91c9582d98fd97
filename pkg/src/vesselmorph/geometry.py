"""Small vector helpers shared by topology and morphometry."""
import math

import numpy as np


class DirectionError(ValueError):
    """Raised when a polyline has no usable direction."""


def angle_between(u, v):
    """Angle in degrees in [0, 180] between two nonzero vectors."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("angle_between needs nonzero vectors")
    cos = float(np.dot(u, v) / (nu * nv))
    return math.degrees(math.acos(min(1.0, max(-1.0, cos))))


def fit_direction(points):
    """Unit direction of the total-least-squares line through ordered points.

    The sign is chosen so the direction points from the first point toward
    the last one.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        raise DirectionError("need at least two points")
    centered = pts - pts.mean(axis=0)
    if not np.any(centered):
        raise DirectionError("all points coincide")
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    d = vt[0]
    # projections of first and last point fix the sign
    if np.dot(pts[-1] - pts[0], d) < 0:
        d = -d
    elif np.dot(pts[-1] - pts[0], d) == 0 and np.dot(pts[-1] - pts[0], pts[-1] - pts[0]) == 0:
        raise DirectionError("endpoints coincide")
    return d / np.linalg.norm(d)


def branch_pixels(polyline, window, skip=0.0, span=None):
    """Pixels of a polyline (starting at a junction) used to fit its direction.

    Without ``skip``: the first ``window`` pixels. With it: pixels at distance
    ``[skip, skip + span]`` from the start, falling back to the first form when
    fewer than three qualify.
    """
    poly = np.asarray(polyline)
    if len(poly) < 2:
        raise DirectionError("edge shorter than two pixels")
    pts = poly.astype(float)
    if skip > 0:
        span = window if span is None else span
        d = np.hypot(pts[:, 0] - pts[0, 0], pts[:, 1] - pts[0, 1])
        sel = pts[(d >= skip) & (d <= skip + span)]
        if len(sel) >= 3:
            return sel
    return pts[: max(2, min(int(window), len(pts)))]


def line_intersection(points, directions):
    """Least-squares point closest to lines (point, unit direction); None if degenerate."""
    A = np.zeros((2, 2))
    b = np.zeros(2)
    for p, d in zip(points, directions):
        P = np.eye(2) - np.outer(d, d)
        A += P
        b += P @ p
    if np.linalg.cond(A) > 1e6:
        return None
    return np.linalg.solve(A, b)
