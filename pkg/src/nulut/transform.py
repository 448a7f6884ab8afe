"""Applying a non-uniform 3D LUT to images, forward and backward.

The forward path locates each input color in the lattice with a binary
search per axis (valid because the sampling coordinates are sorted) and
blends the 8 surrounding vertex values with trilinear weights.  The
backward path returns analytic gradients of the output with respect to
the table values, the sampling coordinates, and the input colors, so the
whole lattice, knot positions included, can be fitted by gradient
descent.

Per-pixel work is independent, so images are processed in fixed blocks
of CHUNK_ROWS rows.  The block grid depends only on the image size;
worker threads share the read-only lattice, write disjoint output
slices, and keep private gradient buffers that are reduced in block
order.  Results are therefore bit-identical for any thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .lattice import Lattice

CHUNK_ROWS = 64

_CORNERS = [(i, j, k) for i in (0, 1) for j in (0, 1) for k in (0, 1)]


class LookupResult(NamedTuple):
    e0: int
    e1: int
    x0: float
    x1: float


def _bisect_cell(coords_row, x):
    """Rightmost knot index with coords_row[e0] <= x, clamped to n_s - 2.

    Returns (e0, comparisons).  The clamp makes x = 1.0 land inside the
    last cell with offset 1 instead of falling off the table.
    """
    n = coords_row.shape[0]
    lo, hi = 0, n
    comparisons = 0
    while lo < hi:
        mid = (lo + hi) // 2
        comparisons += 1
        if coords_row[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    e0 = lo - 1
    if e0 > n - 2:
        e0 = n - 2
    return e0, comparisons


def lookup(coords_row: np.ndarray, x: float) -> LookupResult:
    """Locate x in a sorted coordinate row: cell indices and bounds."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"query must lie in [0, 1], got {x}")
    e0, _ = _bisect_cell(coords_row, x)
    return LookupResult(e0, e0 + 1, float(coords_row[e0]), float(coords_row[e0 + 1]))


def lookup_with_count(coords_row: np.ndarray, x: float) -> tuple[LookupResult, int]:
    """Like lookup, also reporting how many comparisons the search used."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"query must lie in [0, 1], got {x}")
    e0, comparisons = _bisect_cell(coords_row, x)
    result = LookupResult(e0, e0 + 1, float(coords_row[e0]), float(coords_row[e0 + 1]))
    return result, comparisons


def trilinear_weights(xd_r: float, xd_g: float, xd_b: float) -> np.ndarray:
    """The 8 partial-volume weights for normalized offsets in [0, 1].

    weights[i, j, k] multiplies the vertex at (e_r + i, e_g + j, e_b + k);
    the weights always sum to 1.
    """
    for name, v in (("xd_r", xd_r), ("xd_g", xd_g), ("xd_b", xd_b)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {v}")
    wr = (1.0 - xd_r, xd_r)
    wg = (1.0 - xd_g, xd_g)
    wb = (1.0 - xd_b, xd_b)
    weights = np.empty((2, 2, 2))
    for i, j, k in _CORNERS:
        weights[i, j, k] = (wr[i] * wg[j]) * wb[k]
    return weights


def _validate_image(img) -> np.ndarray:
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 3 or a.shape[0] != 3 or a.shape[1] < 1 or a.shape[2] < 1:
        raise ValueError(f"image must have shape (3, h, w), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("image values must be finite")
    if a.min() < 0.0 or a.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return a


def _validate_pixel(pixel) -> np.ndarray:
    p = np.asarray(pixel, dtype=np.float64).reshape(-1)
    if p.shape != (3,):
        raise ValueError(f"pixel must be a color triple, got shape {np.shape(pixel)}")
    if not np.all(np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0:
        raise ValueError(f"pixel components must lie in [0, 1], got {p}")
    return p


def transform_pixel(pixel, lattice: Lattice) -> np.ndarray:
    """Transform one color triple: per-axis lookup, then trilinear blend."""
    p = _validate_pixel(pixel)
    coords, values = lattice.coords, lattice.values
    e = np.empty(3, dtype=np.intp)
    xd = np.empty(3)
    for c in range(3):
        e0, _ = _bisect_cell(coords[c], p[c])
        e[c] = e0
        x0 = coords[c][e0]
        x1 = coords[c][e0 + 1]
        xd[c] = (p[c] - x0) / (x1 - x0)
    wr = (1.0 - xd[0], xd[0])
    wg = (1.0 - xd[1], xd[1])
    wb = (1.0 - xd[2], xd[2])
    out = np.zeros(3)
    for i, j, k in _CORNERS:
        w = (wr[i] * wg[j]) * wb[k]
        for c in range(3):
            out[c] += w * values[c, e[0] + i, e[1] + j, e[2] + k]
    return out


def _locate(coords, pix):
    """Vectorized cell location for pixel columns pix of shape (3, p)."""
    n = coords.shape[1]
    e0 = np.empty(pix.shape, dtype=np.intp)
    x0 = np.empty_like(pix)
    x1 = np.empty_like(pix)
    for c in range(3):
        e = np.searchsorted(coords[c], pix[c], side="right") - 1
        np.clip(e, 0, n - 2, out=e)
        e0[c] = e
        x0[c] = coords[c][e]
        x1[c] = coords[c][e + 1]
    xd = (pix - x0) / (x1 - x0)
    return e0, x0, x1, xd


def _corner_indices(e0, n, i, j, k):
    return ((e0[0] + i) * n + (e0[1] + j)) * n + (e0[2] + k)


def _transform_block(pix, coords, values):
    """Transform flattened pixel columns (3, p) against raw lattice arrays.

    Mirrors transform_pixel operation for operation so vectorized and
    scalar paths agree bit-exactly.
    """
    n = coords.shape[1]
    e0, _, _, xd = _locate(coords, pix)
    flat = values.reshape(3, n * n * n)
    wr = (1.0 - xd[0], xd[0])
    wg = (1.0 - xd[1], xd[1])
    wb = (1.0 - xd[2], xd[2])
    out = np.zeros_like(pix)
    for i, j, k in _CORNERS:
        w = (wr[i] * wg[j]) * wb[k]
        idx = _corner_indices(e0, n, i, j, k)
        for c in range(3):
            out[c] += w * flat[c, idx]
    return out


def _row_blocks(height):
    return [(r, min(r + CHUNK_ROWS, height)) for r in range(0, height, CHUNK_ROWS)]


def transform_image(img, lattice: Lattice, workers: int = 1) -> np.ndarray:
    """Apply the lattice to every pixel of a (3, h, w) image.

    The output is not clamped; clamping to [0, 1] belongs at the final
    image-writing boundary, never inside a training loop where it would
    zero gradients.
    """
    a = _validate_image(img)
    h, w = a.shape[1], a.shape[2]
    coords, values = lattice.coords, lattice.values
    out = np.empty_like(a)
    blocks = _row_blocks(h)

    def run(block):
        r0, r1 = block
        res = _transform_block(a[:, r0:r1, :].reshape(3, -1), coords, values)
        out[:, r0:r1, :] = res.reshape(3, r1 - r0, w)

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, blocks))
    else:
        for block in blocks:
            run(block)
    return out


@dataclass
class LatticeGradients:
    """Gradients of a scalar loss w.r.t. the lattice and, optionally, the input.

    grad_values matches the table shape, grad_coords the coordinate shape,
    grad_input the image shape (None when not requested).
    """

    grad_values: np.ndarray
    grad_coords: np.ndarray
    grad_input: np.ndarray | None = None


def _backward_block(pix, gout, coords, values):
    """Gradient contributions of one pixel block.

    Returns (grad_values_flat (3, n^3), grad_coords (3, n), grad_input
    (3, p)).  Scatter order is fixed: corners in (i, j, k) order, pixels
    in block order within each corner.
    """
    n = coords.shape[1]
    n3 = n * n * n
    e0, x0, x1, xd = _locate(coords, pix)
    gap = x1 - x0
    flat = values.reshape(3, n3)
    wr = (1.0 - xd[0], xd[0])
    wg = (1.0 - xd[1], xd[1])
    wb = (1.0 - xd[2], xd[2])

    gathered = {}
    grad_values = np.zeros((3, n3))
    for i, j, k in _CORNERS:
        w = (wr[i] * wg[j]) * wb[k]
        idx = _corner_indices(e0, n, i, j, k)
        corner = np.empty_like(pix)
        for c in range(3):
            corner[c] = flat[c, idx]
            grad_values[c] += np.bincount(idx, weights=w * gout[c], minlength=n3)
        gathered[(i, j, k)] = corner

    # chain through the normalized offsets: the weight derivative along one
    # axis pairs the other two axes' weights with the on-axis vertex delta
    off_axis_weights = {0: (wg, wb), 1: (wr, wb), 2: (wr, wg)}

    def corner_pair(axis, u, v):
        key_hi = [u, v]
        key_hi.insert(axis, 1)
        key_lo = [u, v]
        key_lo.insert(axis, 0)
        return gathered[tuple(key_hi)], gathered[tuple(key_lo)]

    grad_coords = np.zeros((3, n))
    grad_input = np.empty_like(pix)
    for axis in range(3):
        w_u, w_v = off_axis_weights[axis]
        g_axis = np.zeros(pix.shape[1])
        for u in (0, 1):
            for v in (0, 1):
                hi, lo = corner_pair(axis, u, v)
                w_off = w_u[u] * w_v[v]
                for c in range(3):
                    g_axis += gout[c] * (w_off * (hi[c] - lo[c]))
        gx0 = g_axis * (-(1.0 - xd[axis]) / gap[axis])
        gx1 = g_axis * (-xd[axis] / gap[axis])
        grad_coords[axis] = np.bincount(
            np.concatenate((e0[axis], e0[axis] + 1)),
            weights=np.concatenate((gx0, gx1)),
            minlength=n,
        )
        grad_input[axis] = g_axis / gap[axis]
    return grad_values, grad_coords, grad_input


def backward_pixel(pixel, lattice: Lattice, grad_out) -> LatticeGradients:
    """Gradient contributions of a single pixel given its output gradient."""
    p = _validate_pixel(pixel)
    g = np.asarray(grad_out, dtype=np.float64).reshape(-1)
    if g.shape != (3,):
        raise ValueError(f"grad_out must be a triple, got shape {np.shape(grad_out)}")
    gv, gc, gi = _backward_block(
        p.reshape(3, 1), g.reshape(3, 1), lattice.coords, lattice.values
    )
    n = lattice.n_s
    return LatticeGradients(gv.reshape(3, n, n, n), gc, gi.reshape(3))


def transform_with_grads(
    img, grad_output, lattice: Lattice, workers: int = 1
) -> tuple[np.ndarray, LatticeGradients]:
    """Forward transform plus summed per-pixel gradient contributions.

    grad_output is the loss gradient w.r.t. the transformed image.  Table
    and coordinate gradients are accumulated into per-block buffers that
    are reduced in block order, so the result does not depend on the
    number of workers.
    """
    a = _validate_image(img)
    g = np.asarray(grad_output, dtype=np.float64)
    if g.shape != a.shape:
        raise ValueError(f"grad_output shape {g.shape} does not match image {a.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("grad_output must be finite")
    coords, values = lattice.coords, lattice.values
    n = lattice.n_s
    h, w = a.shape[1], a.shape[2]
    out = np.empty_like(a)
    grad_input = np.empty_like(a)
    blocks = _row_blocks(h)

    def run(block):
        r0, r1 = block
        pix = a[:, r0:r1, :].reshape(3, -1)
        gout = g[:, r0:r1, :].reshape(3, -1)
        res = _transform_block(pix, coords, values)
        out[:, r0:r1, :] = res.reshape(3, r1 - r0, w)
        gv, gc, gi = _backward_block(pix, gout, coords, values)
        grad_input[:, r0:r1, :] = gi.reshape(3, r1 - r0, w)
        return gv, gc

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(run, blocks))
    else:
        partials = [run(block) for block in blocks]

    grad_values = np.zeros((3, n * n * n))
    grad_coords = np.zeros((3, n))
    for gv, gc in partials:
        grad_values += gv
        grad_coords += gc
    return out, LatticeGradients(
        grad_values.reshape(3, n, n, n), grad_coords, grad_input
    )
