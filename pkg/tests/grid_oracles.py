"""Dense-grid brute-force oracles for the line-geometry subroutines.

Staged searches: a coarse sweep over the documented domain, then zooms
around the incumbent so the oracle value is accurate to well below the
1e-3 comparison tolerance. Boundary hits extend the domain so the oracle
never reports a clipped minimum. Zoom boxes are many cells wide because
near-parallel instances have long flat valleys: the incumbent can sit
several cells from the true minimizer along the valley floor, and a
tight box would lose it between stages.
"""

import numpy as np


def _halfline_grid_min(p1, d1, p2, d2, t1_axis, t2_axis):
    a = p1[None, None, :] + t1_axis[:, None, None] * d1[None, None, :]
    b = p2[None, None, :] + t2_axis[None, :, None] * d2[None, None, :]
    dist = np.linalg.norm(a - b, axis=2)
    i, j = np.unravel_index(np.argmin(dist), dist.shape)
    return dist[i, j], t1_axis[i], t2_axis[j]


def halfline_brute(p1, d1, p2, d2, t_max=50.0):
    """Minimum distance between half-lines by coarse grid plus zoom."""
    p1 = np.asarray(p1, float)
    d1 = np.asarray(d1, float)
    p2 = np.asarray(p2, float)
    d2 = np.asarray(d2, float)
    hi = t_max
    while True:
        axis = np.linspace(0.0, hi, 400)
        best, t1, t2 = _halfline_grid_min(p1, d1, p2, d2, axis, axis)
        if t1 < axis[-2] and t2 < axis[-2]:
            break
        hi *= 4.0
        if hi > 1e5:
            break
    step = axis[1] - axis[0]
    for _ in range(3):
        t1_axis = np.linspace(max(t1 - 6 * step, 0.0), t1 + 6 * step, 200)
        t2_axis = np.linspace(max(t2 - 6 * step, 0.0), t2 + 6 * step, 200)
        best, t1, t2 = _halfline_grid_min(p1, d1, p2, d2, t1_axis, t2_axis)
        step = t1_axis[1] - t1_axis[0]
    return best


def line_distance_sq(points, p0, d):
    rel = points - p0[None, :]
    along = rel @ d
    return np.einsum("ij,ij->i", rel, rel) - along**2


def closest_point_objective(point, p1, d1, p2, d2):
    pt = np.atleast_2d(np.asarray(point, float))
    f = line_distance_sq(pt, np.asarray(p1, float), np.asarray(d1, float)) + line_distance_sq(
        pt, np.asarray(p2, float), np.asarray(d2, float)
    )
    return float(f[0])


def closest_point_brute(p1, d1, p2, d2, half_width=40.0):
    """Minimizer of summed squared line distances by 3D grid with zooms."""
    p1 = np.asarray(p1, float)
    d1 = np.asarray(d1, float)
    p2 = np.asarray(p2, float)
    d2 = np.asarray(d2, float)
    center = (p1 + p2) / 2.0
    w = half_width
    n = 81

    def stage(center, w):
        axes = [np.linspace(c - w, c + w, n) for c in center]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        f = line_distance_sq(grid, p1, d1) + line_distance_sq(grid, p2, d2)
        k = np.argmin(f)
        return f[k], grid[k]

    best_f, best_p = stage(center, w)
    # escape a clipped box: grow while the incumbent hugs the boundary
    while np.max(np.abs(best_p - center)) > 0.9 * w and w < 1e4:
        w *= 4.0
        best_f, best_p = stage(center, w)
    cell = 2 * w / (n - 1)
    for _ in range(5):
        best_f, best_p = stage(best_p, 12 * cell)
        cell = 24 * cell / (n - 1)
    return best_f, best_p
