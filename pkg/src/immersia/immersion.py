"""Sampled immersions: chart-lattice samples of maps Sigma^n -> R^d.

A SampledImmersion is a list of charts, each a ChartGrid plus node values of
Phi.  Charts built from the analytic shape catalog also carry exact chart
maps (derivatives to third order at arbitrary parameter points); purely
numeric charts fall back to O(h^2) finite-difference stencils.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement, permutations

import numpy as np

from .errors import InvalidShapeError, UnsupportedError, UnsupportedOrderError
from .grids import ChartGrid, MAX_DERIVATIVE_ORDER, gather_derivative, grid_derivative
from .shapes import (
    AnalyticChartMap,
    ChartOverlap,
    ShapeSpec,
    pu_weight_values,
    shape_charts,
)
from .transforms import SimilarityTransform

RANK_TOL = 1e-8


@dataclass
class Chart:
    """One chart: parameter lattice, node values, optional exact map.

    weight_tag names the partition-of-unity weight used for integration on
    multi-chart atlases (None means the chart owns its whole box).
    """

    grid: ChartGrid
    values: np.ndarray
    chart_map: AnalyticChartMap | None = None
    weight_tag: str | None = None
    cover_group: int = 0

    def __post_init__(self):
        expected = self.grid.dims + (self.values.shape[-1],)
        if self.values.shape != expected:
            raise ValueError(f"chart values shape {self.values.shape} != {expected}")
        if not np.all(np.isfinite(self.values)):
            raise InvalidShapeError("non-finite node values")

    @property
    def d(self) -> int:
        return self.values.shape[-1]

    @property
    def exact(self) -> bool:
        return self.chart_map is not None

    def node_weights(self) -> np.ndarray:
        return pu_weight_values(self.weight_tag, self.grid.node_params())

    def cell_weights(self) -> np.ndarray:
        return pu_weight_values(self.weight_tag, self.grid.cell_centers())


@dataclass
class SampledImmersion:
    """Discrete immersion Phi: Sigma^n -> R^d sampled on chart lattices."""

    n: int
    d: int
    charts: list[Chart]
    shape_id: str | None = None
    spec: ShapeSpec | None = None
    overlaps: list[ChartOverlap] = field(default_factory=list)

    def __post_init__(self):
        if self.d <= self.n:
            raise InvalidShapeError("ambient dimension must exceed intrinsic dimension")
        for ch in self.charts:
            if ch.grid.n != self.n or ch.d != self.d:
                raise InvalidShapeError("chart dimensions inconsistent with immersion")
        self._cache: dict = {}

    # -- caching ------------------------------------------------------------

    def cached(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def drop_cache(self):
        self._cache.clear()

    @property
    def exact(self) -> bool:
        return all(ch.exact for ch in self.charts)

    @property
    def codim(self) -> int:
        return self.d - self.n

    # -- jets ----------------------------------------------------------------

    def node_jet(self, ci: int, order: int) -> dict[int, np.ndarray]:
        """Derivatives of Phi at every node of chart ci, flattened row-major.

        Returns {k: array of shape (n_nodes, d, n, ..., n)} for k <= order.
        """
        if order > MAX_DERIVATIVE_ORDER:
            raise UnsupportedOrderError(f"order {order} > {MAX_DERIVATIVE_ORDER}")

        def compute():
            ch = self.charts[ci]
            if ch.exact:
                return ch.chart_map.jet(ch.grid.node_params(), order)
            return _fd_node_jet(ch, order, self.n, self.d)

        got = self.cached(("node_jet", ci, order), compute)
        # a higher-order cached jet also serves lower requests
        return {k: got[k] for k in range(order + 1)}

    def jet_at_nodes(self, ci: int, idx: np.ndarray, order: int) -> dict[int, np.ndarray]:
        """Derivatives at a node subset given by multi-indices (m, n)."""
        ch = self.charts[ci]
        idx = np.atleast_2d(np.asarray(idx, dtype=np.int64))
        if ch.exact:
            return ch.chart_map.jet(ch.grid.params_of(idx), order)
        return _fd_subset_jet(ch, idx, order, self.n, self.d)

    def jet_at_params(self, ci: int, params: np.ndarray, order: int) -> dict[int, np.ndarray]:
        """Exact-mode derivatives at arbitrary parameter points."""
        ch = self.charts[ci]
        if not ch.exact:
            raise UnsupportedError("off-lattice jets need an analytic chart map")
        return ch.chart_map.jet(params, order)

    def cell_center_values(self, ci: int) -> np.ndarray:
        """Phi at cell centers: exact evaluation, or corner averages (O(h^2))."""
        ch = self.charts[ci]
        if ch.exact:
            return ch.chart_map.value(ch.grid.cell_centers())
        vals = ch.values
        for ax in range(self.n):
            lo = [slice(None)] * (self.n + 1)
            hi = [slice(None)] * (self.n + 1)
            lo[ax] = slice(None, -1)
            hi[ax] = slice(1, None)
            vals = 0.5 * (vals[tuple(lo)] + vals[tuple(hi)])
        return vals.reshape(-1, self.d)

    # -- invariants ----------------------------------------------------------

    def validate_rank(self, rank_tol: float = RANK_TOL, full: bool = True) -> list[tuple]:
        """Nodes where dPhi drops below full rank; reported, not dropped."""
        bad = []
        for ci, ch in enumerate(self.charts):
            interior = (ch.grid.interior_depth() >= 1).ravel()
            if full or ch.grid.n_nodes <= 200_000:
                sel = np.flatnonzero(interior)
            else:
                sel = np.flatnonzero(interior)[:: max(1, ch.grid.n_nodes // 50_000)]
            idx = np.stack(np.unravel_index(sel, ch.grid.dims), axis=-1)
            d1 = self.jet_at_nodes(ci, idx, 1)[1]
            gram = np.einsum("mdi,mdj->mij", d1, d1)
            eig = np.linalg.eigvalsh(gram)[:, 0]
            weak = eig <= rank_tol**2
            for pos in np.flatnonzero(weak):
                bad.append((ci, tuple(idx[pos])))
        return bad


def _fd_node_jet(ch: Chart, order: int, n: int, d: int) -> dict[int, np.ndarray]:
    m = ch.grid.n_nodes
    out: dict[int, np.ndarray] = {0: ch.values.reshape(m, d)}
    for k in range(1, order + 1):
        arr = np.zeros((m,) + (d,) + (n,) * k)
        for combo in combinations_with_replacement(range(n), k):
            mi = [0] * n
            for ax in combo:
                mi[ax] += 1
            der = grid_derivative(ch.values, ch.grid, tuple(mi)).reshape(m, d)
            for perm in set(permutations(combo)):
                arr[(slice(None), slice(None)) + perm] = der
        out[k] = arr
    return out


def _fd_subset_jet(ch: Chart, idx: np.ndarray, order: int, n: int, d: int) -> dict[int, np.ndarray]:
    m = idx.shape[0]
    lin = np.ravel_multi_index(tuple(idx.T), ch.grid.dims)
    out: dict[int, np.ndarray] = {0: ch.values.reshape(-1, d)[lin]}
    for k in range(1, order + 1):
        arr = np.zeros((m,) + (d,) + (n,) * k)
        for combo in combinations_with_replacement(range(n), k):
            mi = [0] * n
            for ax in combo:
                mi[ax] += 1
            der = gather_derivative(ch.values, ch.grid, idx, tuple(mi))
            for perm in set(permutations(combo)):
                arr[(slice(None), slice(None)) + perm] = der
        out[k] = arr
    return out


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def build_shape(spec: ShapeSpec, resolution: int) -> SampledImmersion:
    """Sample a built-in analytic shape at the given per-axis resolution."""
    if resolution < 5:
        raise InvalidShapeError("resolution must be >= 5")
    grids, maps, weights, overlaps, cover_groups = shape_charts(spec, resolution)
    charts = []
    for grid, cmap, wtag, group in zip(grids, maps, weights, cover_groups):
        values = cmap.value(grid.node_params()).reshape(grid.dims + (spec.d,))
        charts.append(
            Chart(grid=grid, values=values, chart_map=cmap, weight_tag=wtag, cover_group=group)
        )
    imm = SampledImmersion(
        n=spec.n, d=spec.d, charts=charts, shape_id=spec.kind, spec=spec, overlaps=overlaps
    )
    bad = imm.validate_rank(full=False)
    if bad:
        raise InvalidShapeError(f"rank deficiency at nodes {bad[:3]} (and possibly more)")
    return imm


def derivative(
    imm: SampledImmersion, chart: int, node: tuple[int, ...], order: tuple[int, ...]
) -> np.ndarray:
    """Partial derivative of Phi at one node, multi-index order, |order| <= 3.

    Exact for analytic charts; otherwise second-order stencils (one-sided
    within two layers of the boundary).
    """
    total = int(sum(order))
    if total > MAX_DERIVATIVE_ORDER:
        raise UnsupportedOrderError(f"|order| = {total} exceeds {MAX_DERIVATIVE_ORDER}")
    ch = imm.charts[chart]
    node_arr = np.asarray(node, dtype=np.int64)
    if np.any(node_arr < 0) or np.any(node_arr >= np.asarray(ch.grid.dims)):
        raise IndexError(f"node {node} outside grid {ch.grid.dims}")
    if total == 0:
        return ch.values[tuple(node_arr)]
    if ch.exact:
        jet = ch.chart_map.jet(ch.grid.params_of(node_arr[None]), total)[total][0]
        axes = []
        for ax, m in enumerate(order):
            axes.extend([ax] * m)
        return jet[(slice(None),) + tuple(axes)]
    return gather_derivative(ch.values, ch.grid, node_arr[None], tuple(order))[0]


def apply_transform(imm: SampledImmersion, t: SimilarityTransform) -> SampledImmersion:
    """Nodewise Phi -> lam R Phi + t; analytic charts stay exact (composed map)."""
    if t.d != imm.d:
        raise ValueError("transform dimension mismatch")
    charts = []
    for ch in imm.charts:
        flat = ch.values.reshape(-1, imm.d)
        vals = t.apply(flat).reshape(ch.values.shape)
        cmap = ch.chart_map.with_transform(t) if ch.exact else None
        charts.append(
            Chart(
                grid=ch.grid,
                values=vals,
                chart_map=cmap,
                weight_tag=ch.weight_tag,
                cover_group=ch.cover_group,
            )
        )
    return SampledImmersion(
        n=imm.n,
        d=imm.d,
        charts=charts,
        shape_id=imm.shape_id,
        spec=imm.spec,
        overlaps=list(imm.overlaps),
    )


def refine(imm: SampledImmersion, factor: int) -> SampledImmersion:
    """Scale lattice dims by ``factor``; coarse nodes are reproduced exactly.

    Analytic charts are re-sampled; numeric charts are interpolated with
    cubic splines chartwise.
    """
    if factor < 2 or int(factor) != factor:
        raise UnsupportedError("refinement factor must be an integer >= 2")
    from scipy import ndimage

    charts = []
    for ch in imm.charts:
        grid = ch.grid.refined(factor)
        if ch.exact:
            vals = ch.chart_map.value(grid.node_params()).reshape(grid.dims + (imm.d,))
        else:
            coords = np.meshgrid(
                *[np.arange(m) / factor for m in grid.dims], indexing="ij"
            )
            coords = np.stack(coords, axis=0)
            comps = [
                ndimage.map_coordinates(ch.values[..., j], coords, order=3, mode="nearest")
                for j in range(imm.d)
            ]
            vals = np.stack(comps, axis=-1)
        charts.append(
            Chart(
                grid=grid,
                values=vals,
                chart_map=ch.chart_map,
                weight_tag=ch.weight_tag,
                cover_group=ch.cover_group,
            )
        )
    return SampledImmersion(
        n=imm.n,
        d=imm.d,
        charts=charts,
        shape_id=imm.shape_id,
        spec=imm.spec,
        overlaps=list(imm.overlaps),
    )
