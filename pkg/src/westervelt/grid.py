"""Uniform grids on intervals and rectangles, with finite-difference operators.

Nodes are numbered with the x index running fastest, ``id = i + nx * j``.
Operators are ``scipy.sparse`` CSR matrices acting on nodal fields:

* :func:`laplacian` fills interior rows with the 3- or 5-point stencil and
  leaves boundary rows empty;
* :func:`normal_derivative` fills boundary rows with the one-sided
  second-order stencil ``(3 f0 - 4 f1 + f2) / (2h)`` along the outward normal.
  Corners use the unit average of the two adjoining edge normals.

Both are also available as :class:`Factored` pairs (weights times edge
differences), used wherever a constant field must map to an exact zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError


@dataclass(frozen=True, eq=False)
class Grid:
    dim: int
    extents: tuple[tuple[float, float], ...]
    n: tuple[int, ...]

    @property
    def h(self) -> tuple[float, ...]:
        return tuple((b - a) / (m - 1) for (a, b), m in zip(self.extents, self.n))

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(np.linspace(a, b, m) for (a, b), m in zip(self.extents, self.n))

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Flattened node coordinates, one array per axis."""
        if self.dim == 1:
            return (self.axes[0].copy(),)
        X, Y = np.meshgrid(*self.axes, indexing="xy")
        return X.ravel(), Y.ravel()

    @cached_property
    def _boundary_mask(self) -> np.ndarray:
        masks = [np.zeros(m, dtype=bool) for m in self.n]
        for m in masks:
            m[[0, -1]] = True
        if self.dim == 1:
            return masks[0]
        return (masks[0][None, :] | masks[1][:, None]).ravel()

    @cached_property
    def boundary_index(self) -> np.ndarray:
        return np.flatnonzero(self._boundary_mask)

    @cached_property
    def interior_index(self) -> np.ndarray:
        return np.flatnonzero(~self._boundary_mask)

    @cached_property
    def normals(self) -> np.ndarray:
        """Unit outward normals at the boundary nodes, shape (n_boundary, dim)."""
        sign = []
        for m in self.n:
            s = np.zeros(m)
            s[0], s[-1] = -1.0, 1.0
            sign.append(s)
        if self.dim == 1:
            nu = sign[0][:, None]
        else:
            sx = np.tile(sign[0], self.n[1])
            sy = np.repeat(sign[1], self.n[0])
            nu = np.stack([sx, sy], axis=1)
            # corners get the unit average of the two edge normals
            length = np.linalg.norm(nu, axis=1)
            nu[length > 0] /= length[length > 0, None]
        return nu[self.boundary_index]

    def boundary_values(self, field) -> np.ndarray:
        """Restrict a nodal field to the boundary (passes boundary-length input through)."""
        field = np.asarray(field, dtype=float)
        if field.size == self.boundary_index.size and field.size != self.size:
            return field
        return field[self.boundary_index]

    def mean(self, field) -> float:
        """Trapezoidal spatial mean over the domain."""
        w = trapezoid_weights(self)
        return float(w @ np.asarray(field, dtype=float) / w.sum())

    @property
    def volume(self) -> float:
        return float(np.prod([b - a for a, b in self.extents]))


def build_grid(dim: int, extents, n) -> Grid:
    """Build a 1D or 2D grid.

    ``extents`` is ``(a, b)`` or a sequence of per-axis pairs; ``n`` is the
    per-axis node count (an int is broadcast to every axis).
    """
    problems = []
    if dim not in (1, 2):
        raise ConfigError(f"dim must be 1 or 2 (got {dim!r})")
    ext = np.asarray(extents, dtype=float)
    if ext.shape == (2,):
        ext = np.tile(ext, (dim, 1))
    if ext.shape != (dim, 2):
        raise ConfigError(f"extents must give {dim} (a, b) pair(s), got shape {ext.shape}")
    ns = (int(n),) * dim if np.isscalar(n) else tuple(int(m) for m in n)
    if len(ns) != dim:
        problems.append(f"n must have {dim} entries (got {len(ns)})")
    for k, m in enumerate(ns):
        if m < 3:
            problems.append(f"n[{k}] = {m}: need at least 3 nodes per axis")
    for k, (a, b) in enumerate(ext):
        if not (np.isfinite(a) and np.isfinite(b) and b > a):
            problems.append(f"extent[{k}] = ({a}, {b}) is degenerate")
    if problems:
        raise ConfigError("; ".join(problems), problems)
    return Grid(dim, tuple((float(a), float(b)) for a, b in ext), ns)


def _edge_difference_1d(m: int) -> sp.csr_matrix:
    """(m-1) x m matrix of forward differences f[i+1] - f[i]."""
    return sp.diags([-np.ones(m - 1), np.ones(m - 1)], [0, 1], shape=(m - 1, m), format="csr")


def _second_difference_weights_1d(m: int, h: float) -> sp.csr_matrix:
    """Combine edge differences into (f[i+1] - 2 f[i] + f[i-1]) / h^2; end rows zero."""
    c = 1.0 / (h * h)
    C = sp.lil_matrix((m, m - 1))
    for i in range(1, m - 1):
        C[i, i] = c
        C[i, i - 1] = -c
    return C.tocsr()


def _outward_derivative_weights_1d(m: int, h: float) -> sp.csr_matrix:
    """(3 f0 - 4 f1 + f2) / 2h at both ends, written on edge differences."""
    c = 0.5 / h
    C = sp.lil_matrix((m, m - 1))
    C[0, [0, 1]] = [-3.0 * c, c]
    C[m - 1, [m - 2, m - 3]] = [3.0 * c, -c]
    return C.tocsr()


class Factored:
    """Sparse operator kept as ``weights @ differences``.

    Applying the two factors in turn sends constant fields to exactly zero,
    which a merged stencil cannot guarantee in floating point. ``matrix`` is
    the merged form for Jacobians and dense analysis.
    """

    def __init__(self, weights: sp.csr_matrix, differences: sp.csr_matrix):
        self.weights = weights.tocsr()
        self.differences = differences.tocsr()
        merged = (self.weights @ self.differences).tocsr()
        merged.eliminate_zeros()
        self.matrix = merged

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, f):
        return self.weights @ (self.differences @ f)


def _factors_2d(grid: Grid, wx: sp.csr_matrix, wy: sp.csr_matrix, row_x, row_y) -> Factored:
    nx, ny = grid.n
    G = sp.vstack(
        [
            sp.kron(sp.identity(ny), _edge_difference_1d(nx)),
            sp.kron(_edge_difference_1d(ny), sp.identity(nx)),
        ]
    )
    C = sp.hstack(
        [
            sp.diags(row_x) @ sp.kron(sp.identity(ny), wx),
            sp.diags(row_y) @ sp.kron(wy, sp.identity(nx)),
        ]
    )
    return Factored(C, G)


def laplacian_factored(grid: Grid) -> Factored:
    if grid.dim == 1:
        m, h = grid.n[0], grid.h[0]
        return Factored(_second_difference_weights_1d(m, h), _edge_difference_1d(m))
    mask = np.zeros(grid.size)
    mask[grid.interior_index] = 1.0
    (nx, ny), (hx, hy) = grid.n, grid.h
    return _factors_2d(
        grid, _second_difference_weights_1d(nx, hx), _second_difference_weights_1d(ny, hy), mask, mask
    )


def normal_derivative_factored(grid: Grid) -> Factored:
    if grid.dim == 1:
        m, h = grid.n[0], grid.h[0]
        return Factored(_outward_derivative_weights_1d(m, h), _edge_difference_1d(m))
    weight_x = np.zeros(grid.size)
    weight_y = np.zeros(grid.size)
    nu = np.abs(grid.normals)
    weight_x[grid.boundary_index] = nu[:, 0]
    weight_y[grid.boundary_index] = nu[:, 1]
    (nx, ny), (hx, hy) = grid.n, grid.h
    return _factors_2d(
        grid, _outward_derivative_weights_1d(nx, hx), _outward_derivative_weights_1d(ny, hy), weight_x, weight_y
    )


def laplacian(grid: Grid) -> sp.csr_matrix:
    """Five-point (three-point in 1D) Laplacian; boundary rows are zero."""
    return laplacian_factored(grid).matrix


def normal_derivative(grid: Grid) -> sp.csr_matrix:
    """One-sided second-order outward derivative on boundary rows; interior rows zero.

    Corner rows combine the x and y stencils with the components of the
    averaged unit normal.
    """
    return normal_derivative_factored(grid).matrix


def gradient_norm_squared(grid: Grid, u) -> float:
    """Discrete ||grad u||_2^2 from differences across every grid edge.

    Each edge difference is weighted by its own length and by the trapezoid
    weight in the transverse direction.
    """
    if grid.dim == 1:
        du = np.diff(np.asarray(u, dtype=float)) / grid.h[0]
        return float(grid.h[0] * np.sum(du**2))
    nx, ny = grid.n
    hx, hy = grid.h
    u = np.asarray(u, dtype=float).reshape(ny, nx)
    wx, wy = np.full(nx, hx), np.full(ny, hy)
    wx[[0, -1]] *= 0.5
    wy[[0, -1]] *= 0.5
    ux = np.diff(u, axis=1) / hx
    uy = np.diff(u, axis=0) / hy
    return float(hx * np.sum(wy[:, None] * ux**2) + hy * np.sum(wx[None, :] * uy**2))


def trapezoid_weights(grid: Grid) -> np.ndarray:
    w1 = []
    for m, h in zip(grid.n, grid.h):
        w = np.full(m, h)
        w[[0, -1]] *= 0.5
        w1.append(w)
    if grid.dim == 1:
        return w1[0]
    return np.outer(w1[1], w1[0]).ravel()


def boundary_weights(grid: Grid) -> np.ndarray:
    """Trapezoidal surface weights on the boundary nodes.

    In 1D each endpoint carries weight 1 (counting measure). In 2D every edge
    is integrated with the trapezoid rule, so a corner collects half a cell
    from each of its two edges.
    """
    if grid.dim == 1:
        return np.ones(2)
    hx, hy = grid.h
    nu = grid.normals
    w = np.where(nu[:, 0] != 0, hy, 0.0) + np.where(nu[:, 1] != 0, hx, 0.0)
    corners = np.all(nu != 0, axis=1)
    w[corners] = 0.5 * (hx + hy)
    return w


def interior_integral(grid: Grid, f) -> float:
    return float(trapezoid_weights(grid) @ np.asarray(f, dtype=float))


def boundary_integral(grid: Grid, g) -> float:
    return float(boundary_weights(grid) @ grid.boundary_values(g))


def _green_weights_1d(m: int, h: float) -> np.ndarray:
    """Node weights w (zero at both ends) with sum_i w_i (Lf)_i = sum_ends (D_nu f) exactly."""
    if m >= 5:
        w = np.full(m, h)
        w[[1, -2]] = 1.5 * h
        w[[0, -1]] = 0.0
        return w
    # tiny grids: the stencils overlap, take the left null vector directly
    op = (laplacian(build_grid(1, (0.0, h * (m - 1)), m)) - normal_derivative(build_grid(1, (0.0, h * (m - 1)), m))).toarray()
    _, _, vt = np.linalg.svd(op.T)
    null = vt[-1]
    w = null / null[0]
    w[[0, -1]] = 0.0
    return w


def green_weights(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Summation-by-parts weights matched to :func:`laplacian` and :func:`normal_derivative`.

    Returns ``(volume_weights, surface_weights)``, the first over all nodes
    (zero on the boundary), the second over boundary nodes, such that for
    every nodal field f

        volume_weights @ (L f) == surface_weights @ (D_nu f)[boundary]

    holds to round-off. Both are consistent quadratures: they reproduce
    |Omega| and |dOmega| and differ from the trapezoid rule by O(h^2) on
    smooth fields. Corners get zero surface weight.
    """
    w1 = [_green_weights_1d(m, h) for m, h in zip(grid.n, grid.h)]
    if grid.dim == 1:
        return w1[0], np.ones(2)
    e = []
    for m in grid.n:
        b = np.zeros(m)
        b[[0, -1]] = 1.0
        e.append(b)
    vol = np.outer(w1[1], w1[0]).ravel()
    surf = (np.outer(w1[1], e[0]) + np.outer(e[1], w1[0])).ravel()
    return vol, surf[grid.boundary_index]
