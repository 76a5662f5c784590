"""Independent brute-force oracles used by the test suite.

These deliberately avoid the library's code paths: chord lengths come from
dense nearest-pixel sampling along directions defined by MAB boundary
pixels, distances from explicit double loops, and run detection from a
naive window scan.
"""

import math

import numpy as np


def boundary_pixels(mask: np.ndarray) -> np.ndarray:
    """8-connectivity boundary: mask pixels with any background neighbor
    (image border counts as background).  Returns (n, 2) of (row, col)."""
    mask = np.asarray(mask, dtype=bool)
    padded = np.pad(mask, 1, constant_values=False)
    interior = np.ones_like(mask)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            interior &= padded[1 + dr : 1 + dr + mask.shape[0], 1 + dc : 1 + dc + mask.shape[1]]
    return np.argwhere(mask & ~interior).astype(float)


def _bilinear(mask, ys, xs):
    """Hand-rolled bilinear interpolation of a binary raster, zero outside."""
    h, w = mask.shape
    f = mask.astype(np.float64)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    fy = ys - y0
    fx = xs - x0

    def at(yy, xx):
        ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        out = np.zeros(yy.shape)
        out[ok] = f[yy[ok], xx[ok]]
        return out

    return (
        at(y0, x0) * (1 - fy) * (1 - fx)
        + at(y0, x0 + 1) * (1 - fy) * fx
        + at(y0 + 1, x0) * fy * (1 - fx)
        + at(y0 + 1, x0 + 1) * fy * fx
    )


def _line_length_bilinear(mask, cy, cx, dy, dx, step=0.01):
    """Chord length through (cy, cx): simple quadrature over the 0.5
    superlevel set of the bilinearly interpolated raster (the documented
    chord definition, integrated the dumb way)."""
    h, w = mask.shape
    reach = math.hypot(h, w)
    n = int(reach / step) + 1
    t = np.arange(-n, n + 1) * step
    v = _bilinear(mask, cy + t * dy, cx + t * dx)
    return (v >= 0.5).sum() * step


def brute_force_stenosis(mab: np.ndarray, lib: np.ndarray) -> float:
    """Max of S = (L_mab - L_lib) / L_mab over chords through the centroid
    aimed at every MAB boundary pixel."""
    mab = np.asarray(mab, dtype=bool)
    lib = np.asarray(lib, dtype=bool)
    rows, cols = np.nonzero(mab)
    cy, cx = rows.mean(), cols.mean()
    best = 0.0
    for br, bc in boundary_pixels(mab):
        dy, dx = br - cy, bc - cx
        norm = math.hypot(dy, dx)
        if norm < 1e-9:
            continue
        dy, dx = dy / norm, dx / norm
        l_mab = _line_length_bilinear(mab, cy, cx, dy, dx)
        if l_mab <= 0:
            continue
        l_lib = _line_length_bilinear(lib, cy, cx, dy, dx)
        best = max(best, max(0.0, min(1.0, (l_mab - l_lib) / l_mab)))
    return best


def brute_force_run_exists(flags, k: int) -> bool:
    """Naive window scan: any k consecutive True values."""
    flags = list(flags)
    for i in range(len(flags) - k + 1):
        if all(flags[i : i + k]):
            return True
    return False


def brute_force_dsc(p: np.ndarray, l: np.ndarray) -> float:
    """Dice via explicit pixel loops."""
    inter = sp = sl = 0
    for i in range(p.shape[0]):
        for j in range(p.shape[1]):
            if p[i, j]:
                sp += 1
            if l[i, j]:
                sl += 1
            if p[i, j] and l[i, j]:
                inter += 1
    if sp + sl == 0:
        return 1.0
    return 2.0 * inter / (sp + sl)


def directed_nn_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Nearest-neighbor distance from every point of a to the set b, by
    explicit double loop."""
    out = np.empty(len(a))
    for i, pa in enumerate(a):
        best = math.inf
        for pb in b:
            d2 = 0.0
            for x, y in zip(pa, pb):
                d2 += (x - y) * (x - y)
            best = min(best, math.sqrt(d2))
        out[i] = best
    return out


def brute_force_hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    da = directed_nn_distances(a, b)
    db = directed_nn_distances(b, a)
    return max(da.max(), db.max())


def brute_force_hd95(a: np.ndarray, b: np.ndarray) -> float:
    da = directed_nn_distances(a, b)
    db = directed_nn_distances(b, a)
    return max(
        float(np.percentile(da, 95, method="linear")),
        float(np.percentile(db, 95, method="linear")),
    )


def brute_force_pearson(a, b) -> float:
    """Textbook formula with explicit sums."""
    n = len(a)
    ma = sum(a) / n
    mb = sum(b) / n
    num = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    da = math.sqrt(sum((x - ma) ** 2 for x in a))
    db = math.sqrt(sum((y - mb) ** 2 for y in b))
    return num / (da * db)
