"""Analytic test shapes and their exact chart derivatives.

Every built-in shape is a family of chart maps u -> Phi(u) in R^d expressed
as jax-traceable functions, so derivatives of any order up to 3 come from
nested forward-mode jacobians and are exact to roundoff.  Closed shapes built
on the two-chart stereographic sphere atlas carry an algebraic partition of
unity (weights that sum to one exactly across charts at every surface point),
which is what makes chartwise quadrature a clean O(h^2) rule on the whole
manifold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache, partial

import numpy as np

from .errors import InvalidShapeError
from .grids import ChartGrid
from .transforms import SimilarityTransform

# Stereographic atlas constants: the partition-of-unity weight of the north
# chart is H(PU_SHARPNESS * log(1/|u|)) with H an exact C-infinity step, so
# the weight is identically 1 for |u| <= exp(-1/c) and 0 for |u| >= exp(1/c).
PU_SHARPNESS = 3.0
SPHERE_CHART_EXTENT = 1.4  # > exp(1/PU_SHARPNESS) ~ 1.3956

SHAPE_KINDS = (
    "plane",
    "round_sphere",
    "ellipsoid",
    "clifford_torus",
    "graph_perturbation",
    "double_cover_sphere",
    "dumbbell",
)


@dataclass(frozen=True)
class ShapeSpec:
    """Parameters of a built-in analytic shape.

    kind-specific entries live in ``params``; ``n`` is the intrinsic
    dimension and ``codim`` the ambient codimension where meaningful.
    """

    kind: str
    n: int = 4
    codim: int = 1
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise InvalidShapeError(f"unknown shape kind {self.kind!r}")
        if self.n < 1:
            raise InvalidShapeError("intrinsic dimension must be >= 1")
        if self.codim < 1:
            raise InvalidShapeError("codimension must be >= 1")
        object.__setattr__(self, "params", tuple(self.params))
        p = dict(self.params)
        if self.kind in ("round_sphere", "double_cover_sphere"):
            if p.get("radius", 1.0) <= 0:
                raise InvalidShapeError("sphere radius must be positive")
        if self.kind == "ellipsoid":
            axes = p.get("semi_axes")
            if axes is None or len(axes) != self.n + 1:
                raise InvalidShapeError("ellipsoid needs n+1 semi-axes")
            if any(a <= 0 for a in axes):
                raise InvalidShapeError("semi-axes must be positive")
        if self.kind == "dumbbell":
            w = p.get("neck_width", 0.2)
            if not 0.0 < w < 1.0:
                raise InvalidShapeError("neck_width must lie in (0, 1)")
        if self.kind == "clifford_torus" and p.get("radius", 1.0) <= 0:
            raise InvalidShapeError("torus circle radius must be positive")
        if self.kind == "graph_perturbation":
            if p.get("base", "plane") not in ("plane", "round_sphere"):
                raise InvalidShapeError("graph base must be plane or round_sphere")

    @property
    def d(self) -> int:
        if self.kind == "clifford_torus":
            return 2 * self.n
        return self.n + self.codim

    def param(self, key, default=None):
        return dict(self.params).get(key, default)

    @staticmethod
    def make(kind: str, n: int = 4, codim: int = 1, **params) -> "ShapeSpec":
        return ShapeSpec(kind=kind, n=n, codim=codim, params=tuple(sorted(params.items())))

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n,
            "codim": self.codim,
            "params": {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.params},
        }

    @staticmethod
    def from_json(obj: dict) -> "ShapeSpec":
        params = {
            k: (tuple(v) if isinstance(v, list) else v)
            for k, v in obj.get("params", {}).items()
        }
        return ShapeSpec.make(obj["kind"], n=obj["n"], codim=obj.get("codim", 1), **params)


# ---------------------------------------------------------------------------
# jax chart maps
# ---------------------------------------------------------------------------


@lru_cache(maxsize=1)
def _jax():
    import jax

    jax.config.update("jax_enable_x64", True)
    return jax


def _pad(jnp, x, d):
    """Zero-pad a vector to length d."""
    if x.shape[0] == d:
        return x
    return jnp.concatenate([x, jnp.zeros(d - x.shape[0])])


def _stereo(jnp, u, pole):
    """Stereographic parametrization of the unit n-sphere, n+1 coords.

    pole=+1 covers the hemisphere with positive last coordinate at |u| < 1.
    """
    s = jnp.sum(u * u)
    return jnp.concatenate([2.0 * u, pole * jnp.array([1.0 - s])]) / (1.0 + s)


def _chart_fn(kind: str, n: int, d: int, tag: int):
    """Pure function (u, params) -> Phi(u) for one chart of a shape family."""
    jax = _jax()
    import jax.numpy as jnp

    if kind == "plane":

        def fn(u, params):
            return _pad(jnp, u, d)

    elif kind in ("round_sphere", "double_cover_sphere"):
        pole = 1.0 if tag % 2 == 0 else -1.0

        def fn(u, params):
            (radius,) = params
            return _pad(jnp, radius * _stereo(jnp, u, pole), d)

    elif kind == "ellipsoid":
        pole = 1.0 if tag % 2 == 0 else -1.0

        def fn(u, params):
            axes = jnp.asarray(params)
            return _pad(jnp, axes * _stereo(jnp, u, pole), d)

    elif kind == "clifford_torus":

        def fn(u, params):
            (radius,) = params
            return radius * jnp.stack([jnp.cos(u), jnp.sin(u)], axis=-1).reshape(-1)

    elif kind == "dumbbell":
        pole = 1.0 if tag % 2 == 0 else -1.0

        def fn(u, params):
            width, waist = params
            x = _stereo(jnp, u, pole)
            r = width + (1.0 - width) * (1.0 - jnp.exp(-x[n] ** 2 / (2.0 * waist**2)))
            return _pad(jnp, r * x, d)

    elif kind == "graph_perturbation_plane":

        def fn(u, params):
            amp, freq = params
            height = amp * jnp.prod(jnp.cos(freq * u))
            return _pad(jnp, jnp.concatenate([u, jnp.array([height])]), d)

    elif kind == "graph_perturbation_sphere":
        pole = 1.0 if tag % 2 == 0 else -1.0

        def fn(u, params):
            amp, freq = params
            x = _stereo(jnp, u, pole)
            r = 1.0 + amp * jnp.cos(freq * jnp.pi * x[n])
            return _pad(jnp, r * x, d)

    else:
        raise InvalidShapeError(f"no chart map for kind {kind!r}")
    return fn


@lru_cache(maxsize=None)
def _jet_fns(kind: str, n: int, d: int, tag: int):
    """Jitted batched evaluators (value, d1, d2, d3) for one chart map."""
    jax = _jax()
    fn = _chart_fn(kind, n, d, tag)
    f0 = fn
    f1 = jax.jacfwd(f0)
    f2 = jax.jacfwd(f1)
    f3 = jax.jacfwd(f2)
    return tuple(
        jax.jit(jax.vmap(f, in_axes=(0, None))) for f in (f0, f1, f2, f3)
    )


@lru_cache(maxsize=None)
def _center_geometry_fn(kind: str, n: int, d: int, tag: int, with_grad: bool):
    """Jitted pointwise geometry pipeline for one analytic chart map.

    Returns a batched function of (u, shape_params, rotation, translation,
    dilation) producing (point, sqrt_det_g, |II|_g, |grad II|_g, H, tangent).
    Keeping the whole contraction chain inside one XLA program is what makes
    million-cell quadrature practical.
    """
    jax = _jax()
    import jax.numpy as jnp

    base = _chart_fn(kind, n, d, tag)

    def geo(u, params, rot, trans, lam):
        def f(uu):
            return lam * rot @ base(uu, params) + trans

        x = f(u)
        d1 = jax.jacfwd(f)(u)
        d2 = jax.jacfwd(jax.jacfwd(f))(u)
        g = d1.T @ d1
        g_inv = jnp.linalg.inv(g)
        sdet = jnp.sqrt(jnp.linalg.det(g))
        q, _ = jnp.linalg.qr(d1)

        def proj_normal(v):
            coeff = jnp.tensordot(q, v, axes=(0, 0))
            return v - jnp.tensordot(q, coeff, axes=(1, 0))

        ii = proj_normal(d2)
        h = jnp.einsum("ij,dij->d", g_inv, ii) / n
        iin2 = jnp.einsum("ia,jb,dij,dab->", g_inv, g_inv, ii, ii)
        if with_grad:
            d3 = jax.jacfwd(jax.jacfwd(jax.jacfwd(f)))(u)
            dg = jnp.einsum("dab,dc->abc", d2, d1) + jnp.einsum("db,dac->abc", d1, d2)
            sym = dg + jnp.einsum("jil->ijl", dg) - jnp.einsum("lij->ijl", dg)
            chris = 0.5 * jnp.einsum("kl,ijl->kij", g_inv, sym)
            pd3 = proj_normal(d3)
            t1 = jnp.einsum("lij,dkl->dkij", chris, ii)
            t2 = jnp.einsum("lki,dlj->dkij", chris, ii)
            t3 = jnp.einsum("lkj,dil->dkij", chris, ii)
            gii = pd3 - t1 - t2 - t3
            gn2 = jnp.einsum("ka,ib,jc,dkij,dabc->", g_inv, g_inv, g_inv, gii, gii)
        else:
            gn2 = 0.0
        return x, sdet, jnp.sqrt(iin2), jnp.sqrt(jnp.maximum(gn2, 0.0)), h, q

    return jax.jit(jax.vmap(geo, in_axes=(0, None, None, None, None)))


_JET_CHUNK = 131072


class AnalyticChartMap:
    """One chart of an analytic shape plus an attached ambient similarity.

    ``jet(params, order)`` returns exact derivative tensors of lam*R*Phi + t
    with shapes (m, d), (m, d, n), (m, d, n, n), (m, d, n, n, n).
    """

    def __init__(self, kind, n, d, tag, shape_params, transform=None):
        self.kind = kind
        self.n = n
        self.d = d
        self.tag = tag
        self.shape_params = tuple(float(p) for p in np.atleast_1d(shape_params))
        self.transform = transform if transform is not None else SimilarityTransform(d=d)

    def with_transform(self, t: SimilarityTransform) -> "AnalyticChartMap":
        return AnalyticChartMap(
            self.kind, self.n, self.d, self.tag, self.shape_params, t.compose(self.transform)
        )

    def jet(self, params: np.ndarray, order: int) -> dict[int, np.ndarray]:
        params = np.atleast_2d(np.asarray(params, dtype=float))
        fns = _jet_fns(self.kind, self.n, self.d, self.tag)
        pvec = np.asarray(self.shape_params)
        out: dict[int, np.ndarray] = {}
        for k in range(order + 1):
            chunks = []
            for start in range(0, params.shape[0], _JET_CHUNK):
                block = params[start : start + _JET_CHUNK]
                chunks.append(np.asarray(fns[k](block, pvec)))
            arr = np.concatenate(chunks, axis=0) if len(chunks) > 1 else chunks[0]
            if k == 0:
                arr = self.transform.apply(arr)
            else:
                arr = self.transform.apply_linear(arr)
            out[k] = arr
        return out

    def value(self, params: np.ndarray) -> np.ndarray:
        return self.jet(params, 0)[0]

    def center_geometry(self, params: np.ndarray, with_grad: bool) -> tuple:
        """Fused (point, sqrt_det_g, |II|, |grad II|, H, tangent) evaluation."""
        fn = _center_geometry_fn(self.kind, self.n, self.d, self.tag, with_grad)
        params = np.atleast_2d(np.asarray(params, dtype=float))
        t = self.transform
        outs = [[] for _ in range(6)]
        for start in range(0, params.shape[0], _JET_CHUNK):
            block = params[start : start + _JET_CHUNK]
            res = fn(
                block,
                np.asarray(self.shape_params),
                t.rotation,
                t.translation,
                t.dilation,
            )
            for acc, arr in zip(outs, res):
                acc.append(np.asarray(arr))
        return tuple(np.concatenate(a, axis=0) if len(a) > 1 else a[0] for a in outs)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n,
            "d": self.d,
            "tag": self.tag,
            "shape_params": list(self.shape_params),
            "transform": {
                "rotation": self.transform.rotation.tolist(),
                "translation": self.transform.translation.tolist(),
                "dilation": self.transform.dilation,
            },
        }

    @staticmethod
    def from_json(obj: dict) -> "AnalyticChartMap":
        tr = obj["transform"]
        return AnalyticChartMap(
            obj["kind"],
            obj["n"],
            obj["d"],
            obj["tag"],
            obj["shape_params"],
            SimilarityTransform(
                d=obj["d"],
                rotation=np.array(tr["rotation"]),
                translation=np.array(tr["translation"]),
                dilation=tr["dilation"],
            ),
        )


# ---------------------------------------------------------------------------
# partition of unity for the stereographic atlas
# ---------------------------------------------------------------------------


def _smooth_step(x: np.ndarray) -> np.ndarray:
    """C-infinity step: exactly 0 for x <= -1, exactly 1 for x >= 1."""
    x = np.asarray(x, dtype=float)
    s = np.clip((x + 1.0) / 2.0, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s > 0.0, np.exp(-1.0 / np.maximum(s, 1e-300)), 0.0)
        b = np.where(s < 1.0, np.exp(-1.0 / np.maximum(1.0 - s, 1e-300)), 0.0)
    return a / (a + b)


def stereo_pu_weight(params: np.ndarray) -> np.ndarray:
    """Chart weight of a stereographic chart at parameter points (m, n).

    Weights of the two charts of an atlas sum to one exactly at every point
    of the sphere because the transition is u -> u/|u|^2 and the step
    satisfies H(x) + H(-x) = 1.
    """
    r2 = np.sum(np.asarray(params) ** 2, axis=-1)
    with np.errstate(divide="ignore"):
        logr = 0.5 * np.log(np.maximum(r2, 1e-300))
    return _smooth_step(-PU_SHARPNESS * logr)


# ---------------------------------------------------------------------------
# shape family construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChartOverlap:
    """Declared overlap between two charts of the same atlas.

    relation='stereographic' means parameters correspond under u -> u/|u|^2.
    """

    chart_a: int
    chart_b: int
    relation: str = "stereographic"


def _sphere_atlas_charts(spec: ShapeSpec, resolution: int, map_kind: str, shape_params):
    grids, maps, weights = [], [], []
    ext = SPHERE_CHART_EXTENT
    for tag in (0, 1):
        grid = ChartGrid(
            dims=(resolution,) * spec.n, bounds=((-ext, ext),) * spec.n
        )
        grids.append(grid)
        maps.append(AnalyticChartMap(map_kind, spec.n, spec.d, tag, shape_params))
        weights.append("stereo_pu")
    return grids, maps, weights


def shape_charts(spec: ShapeSpec, resolution: int):
    """Chart grids, analytic maps, PU weight tags, overlaps and cover groups."""
    if resolution < 5:
        raise InvalidShapeError("resolution must be >= 5")
    n = spec.n
    if spec.kind == "plane":
        grid = ChartGrid(dims=(resolution,) * n, bounds=((-1.0, 1.0),) * n)
        maps = [AnalyticChartMap("plane", n, spec.d, 0, ())]
        return [grid], maps, [None], [], [0]
    if spec.kind == "round_sphere":
        radius = spec.param("radius", 1.0)
        grids, maps, weights = _sphere_atlas_charts(spec, resolution, "round_sphere", (radius,))
        return grids, maps, weights, [ChartOverlap(0, 1)], [0, 0]
    if spec.kind == "ellipsoid":
        axes = spec.param("semi_axes")
        grids, maps, weights = _sphere_atlas_charts(spec, resolution, "ellipsoid", axes)
        return grids, maps, weights, [ChartOverlap(0, 1)], [0, 0]
    if spec.kind == "dumbbell":
        width = spec.param("neck_width", 0.2)
        waist = spec.param("waist", 0.3)
        grids, maps, weights = _sphere_atlas_charts(
            spec, resolution, "dumbbell", (width, waist)
        )
        return grids, maps, weights, [ChartOverlap(0, 1)], [0, 0]
    if spec.kind == "graph_perturbation":
        amp = spec.param("amplitude", 0.05)
        freq = spec.param("frequency", 2.0)
        base = spec.param("base", "plane")
        if base == "plane":
            grid = ChartGrid(dims=(resolution,) * n, bounds=((-1.0, 1.0),) * n)
            maps = [AnalyticChartMap("graph_perturbation_plane", n, spec.d, 0, (amp, freq))]
            return [grid], maps, [None], [], [0]
        grids, maps, weights = _sphere_atlas_charts(
            spec, resolution, "graph_perturbation_sphere", (amp, freq)
        )
        return grids, maps, weights, [ChartOverlap(0, 1)], [0, 0]
    if spec.kind == "clifford_torus":
        radius = spec.param("radius", 1.0 / math.sqrt(n))
        grid = ChartGrid(dims=(resolution,) * n, bounds=((0.0, 2.0 * math.pi),) * n)
        maps = [AnalyticChartMap("clifford_torus", n, spec.d, 0, (radius,))]
        return [grid], maps, [None], [], [0]
    if spec.kind == "double_cover_sphere":
        radius = spec.param("radius", 1.0)
        g1, m1, w1 = _sphere_atlas_charts(spec, resolution, "round_sphere", (radius,))
        g2, m2, w2 = _sphere_atlas_charts(spec, resolution, "round_sphere", (radius,))
        overlaps = [ChartOverlap(0, 1), ChartOverlap(2, 3)]
        return g1 + g2, m1 + m2, w1 + w2, overlaps, [0, 0, 1, 1]
    raise InvalidShapeError(f"unknown shape kind {spec.kind!r}")


def pu_weight_values(weight_tag, params: np.ndarray) -> np.ndarray:
    """Evaluate a chart's partition-of-unity weight at parameter points."""
    if weight_tag is None:
        return np.ones(np.atleast_2d(params).shape[0])
    if weight_tag == "stereo_pu":
        return stereo_pu_weight(params)
    raise InvalidShapeError(f"unknown weight tag {weight_tag!r}")
