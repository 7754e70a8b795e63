"""Lattice chart domains and finite-difference machinery.

A chart domain is a tensor-product lattice over a box in parameter space.
All stencils are second-order accurate: centered in the interior, one-sided
within reach of the boundary, so derivative fields are uniformly O(h^2).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import UnsupportedOrderError

MAX_DERIVATIVE_ORDER = 3

# centered stencils of accuracy O(h^2) and the window width used when the
# centered window would poke past an edge (width = order + 2 keeps O(h^2))
_CENTERED = {1: (-1, 0, 1), 2: (-1, 0, 1), 3: (-2, -1, 0, 1, 2)}
_EDGE_WIDTH = {1: 3, 2: 4, 3: 5}


def fd_weights(offsets: tuple[int, ...], order: int, h: float) -> np.ndarray:
    """Stencil weights for the ``order``-th derivative on integer offsets.

    Solves the Vandermonde moment system; the stencil reproduces the
    derivative exactly on polynomials of degree ``len(offsets) - 1``.
    """
    k = len(offsets)
    if order >= k:
        raise ValueError("stencil too short for requested derivative")
    a = np.vander(np.asarray(offsets, dtype=float), k, increasing=True).T
    b = np.zeros(k)
    b[order] = float(math.factorial(order))
    w = np.linalg.solve(a, b)
    return w / h**order


@lru_cache(maxsize=None)
def _stencil_table(npts: int, order: int) -> tuple[tuple[int, ...], ...]:
    """Per-node stencil offsets for a 1-d grid with ``npts`` nodes."""
    centered = _CENTERED[order]
    width = _EDGE_WIDTH[order]
    rows = []
    for i in range(npts):
        if i + centered[0] >= 0 and i + centered[-1] < npts:
            rows.append(centered)
        else:
            start = min(max(i - width // 2, 0), npts - width)
            rows.append(tuple(o - i for o in range(start, start + width)))
    return tuple(rows)


@lru_cache(maxsize=None)
def derivative_matrix(npts: int, h: float, order: int) -> np.ndarray:
    """Dense (npts, npts) one-dimensional differentiation matrix."""
    if order == 0:
        return np.eye(npts)
    if order > MAX_DERIVATIVE_ORDER:
        raise UnsupportedOrderError(f"derivative order {order} > {MAX_DERIVATIVE_ORDER}")
    if npts < _EDGE_WIDTH[order]:
        raise ValueError("grid too small for requested derivative order")
    mat = np.zeros((npts, npts))
    for i, offsets in enumerate(_stencil_table(npts, order)):
        mat[i, [i + o for o in offsets]] = fd_weights(offsets, order, h)
    return mat


@dataclass(frozen=True)
class ChartGrid:
    """Tensor-product node lattice over a box in parameter space.

    dims[i] nodes along axis i over the closed interval bounds[i]; spacing is
    derived, spacing[i] = (hi - lo) / (dims[i] - 1) exactly.
    """

    dims: tuple[int, ...]
    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(m) for m in self.dims))
        object.__setattr__(
            self, "bounds", tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        )
        if len(self.dims) != len(self.bounds):
            raise ValueError("dims and bounds rank mismatch")
        if any(m < 5 for m in self.dims):
            raise ValueError("every dim must be >= 5 (two-sided stencil room)")
        if any(hi <= lo for lo, hi in self.bounds):
            raise ValueError("empty parameter interval")

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((hi - lo) / (m - 1) for (lo, hi), m in zip(self.bounds, self.dims))

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.dims))

    @property
    def cell_dims(self) -> tuple[int, ...]:
        return tuple(m - 1 for m in self.dims)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cell_dims))

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, m) for (lo, hi), m in zip(self.bounds, self.dims)]

    def node_params(self) -> np.ndarray:
        """(n_nodes, n) array of node parameter coordinates, row-major."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def cell_centers(self) -> np.ndarray:
        """(n_cells, n) parameter coordinates of cell centers, row-major."""
        axes = [0.5 * (a[1:] + a[:-1]) for a in self.axes()]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def boundary_flags(self) -> np.ndarray:
        """Boolean grid-shaped array, True on boundary nodes."""
        flags = np.zeros(self.dims, dtype=bool)
        for ax in range(self.n):
            sl = [slice(None)] * self.n
            sl[ax] = 0
            flags[tuple(sl)] = True
            sl[ax] = -1
            flags[tuple(sl)] = True
        return flags

    def interior_depth(self) -> np.ndarray:
        """Grid-shaped min distance (in layers) of each node to the boundary."""
        depth = np.full(self.dims, np.iinfo(np.int64).max, dtype=np.int64)
        for ax, m in enumerate(self.dims):
            idx = np.arange(m)
            d = np.minimum(idx, m - 1 - idx)
            shape = [1] * self.n
            shape[ax] = m
            depth = np.minimum(depth, d.reshape(shape))
        return depth

    def node_multi_indices(self) -> np.ndarray:
        """(n_nodes, n) integer multi-indices in row-major order."""
        grids = np.meshgrid(*[np.arange(m) for m in self.dims], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def cell_multi_indices(self) -> np.ndarray:
        """(n_cells, n) integer multi-indices of cells in row-major order."""
        grids = np.meshgrid(*[np.arange(m) for m in self.cell_dims], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def params_of(self, idx: np.ndarray) -> np.ndarray:
        idx = np.atleast_2d(np.asarray(idx))
        lo = np.array([b[0] for b in self.bounds])
        h = np.array(self.spacing)
        return lo + idx * h

    def refined(self, factor: int) -> "ChartGrid":
        """Nested refinement: coarse nodes are the multiples of ``factor``."""
        return ChartGrid(
            dims=tuple((m - 1) * factor + 1 for m in self.dims), bounds=self.bounds
        )


def grid_derivative(values: np.ndarray, grid: ChartGrid, order: tuple[int, ...]) -> np.ndarray:
    """Differentiate a grid-shaped field along each axis per multi-index order.

    values has shape grid.dims + trailing; returns the same shape. Total
    order is capped at MAX_DERIVATIVE_ORDER.
    """
    if sum(order) > MAX_DERIVATIVE_ORDER:
        raise UnsupportedOrderError(f"total order {sum(order)} > {MAX_DERIVATIVE_ORDER}")
    out = values
    for ax, m in enumerate(order):
        if m == 0:
            continue
        dmat = derivative_matrix(grid.dims[ax], grid.spacing[ax], m)
        out = np.moveaxis(np.tensordot(dmat, np.moveaxis(out, ax, 0), axes=(1, 0)), 0, ax)
    return out


def gather_derivative(
    values: np.ndarray, grid: ChartGrid, idx: np.ndarray, order: tuple[int, ...]
) -> np.ndarray:
    """Stencil derivative at an arbitrary node subset.

    values: grid.dims + trailing; idx: (m, n) node multi-indices. Returns
    (m,) + trailing. Same stencils as grid_derivative (one-sided at edges),
    but touches only the nodes the stencils reach.
    """
    if sum(order) > MAX_DERIVATIVE_ORDER:
        raise UnsupportedOrderError(f"total order {sum(order)} > {MAX_DERIVATIVE_ORDER}")
    idx = np.atleast_2d(np.asarray(idx, dtype=np.int64))
    m = idx.shape[0]
    trailing = values.shape[grid.n:]
    flat = values.reshape((grid.n_nodes,) + trailing)

    stencils = []
    for ax, o in enumerate(order):
        if o == 0:
            offs = np.zeros((m, 1), dtype=np.int64)
            wts = np.ones((m, 1))
        else:
            table = _stencil_table(grid.dims[ax], o)
            width = max(len(t) for t in table)
            offs = np.zeros((m, width), dtype=np.int64)
            wts = np.zeros((m, width))
            h = grid.spacing[ax]
            cache: dict[tuple[int, ...], np.ndarray] = {}
            for r, i in enumerate(idx[:, ax]):
                offsets = table[i]
                w = cache.get(offsets)
                if w is None:
                    w = fd_weights(offsets, o, h)
                    cache[offsets] = w
                offs[r, : len(offsets)] = offsets
                wts[r, : len(offsets)] = w
        stencils.append((offs, wts))

    acc = np.zeros((m,) + trailing)
    for combo in itertools.product(*[range(s[0].shape[1]) for s in stencils]):
        node = idx.copy()
        w = np.ones(m)
        for ax, c in enumerate(combo):
            node[:, ax] += stencils[ax][0][:, c]
            w = w * stencils[ax][1][:, c]
        live = w != 0.0
        if not np.any(live):
            continue
        lin = np.ravel_multi_index(tuple(node[live].T), grid.dims)
        acc[live] += flat[lin] * w[live].reshape((-1,) + (1,) * len(trailing))
    return acc


@lru_cache(maxsize=None)
def freudenthal_simplices(n: int) -> np.ndarray:
    """Vertex offsets of the n! Freudenthal simplices of the unit n-cube.

    Returns (n!, n+1, n) array of 0/1 corner offsets; simplex k walks from
    the origin corner to the far corner along permutation k of the axes.
    """
    sims = []
    for perm in itertools.permutations(range(n)):
        verts = [np.zeros(n, dtype=np.int64)]
        for ax in perm:
            v = verts[-1].copy()
            v[ax] += 1
            verts.append(v)
        sims.append(verts)
    return np.array(sims)


@lru_cache(maxsize=None)
def cell_corner_offsets(n: int) -> np.ndarray:
    """(2^n, n) corner offsets of an n-cube in lexicographic order."""
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int64)
