"""Per-node differential geometry of a sampled immersion.

Everything derives from jets of Phi: metric, Christoffel symbols, normal
frame, second fundamental form, covariant derivatives of II, and the
Gauss-equation Riemann tensor.  Curvature tensors are kept ambient-valued
(values in R^d lying in the normal space), which makes |II|_g and
|grad II|_g frame-free: tangential slots contract with g^{-1}, the value
slot with the Euclidean metric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMetricError, UnsupportedError
from .immersion import SampledImmersion

METRIC_CONDITION_LIMIT = 1e12
FRAME_ORTHONORMALITY_TOL = 1e-10


def metric_from_jet(d1: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """g, g_inv, sqrt(det g) from first derivatives (m, d, n)."""
    g = np.einsum("mdi,mdj->mij", d1, d1, optimize=True)
    det = np.linalg.det(g)
    if np.any(det <= 0):
        raise DegenerateMetricError("metric determinant non-positive")
    g_inv = np.linalg.inv(g)
    return g, g_inv, np.sqrt(det)


def metric_condition_check(g: np.ndarray, where: str = "") -> None:
    eig = np.linalg.eigvalsh(g)
    cond = eig[:, -1] / np.maximum(eig[:, 0], 1e-300)
    bad = np.flatnonzero((eig[:, 0] <= 0) | (cond > METRIC_CONDITION_LIMIT))
    if bad.size:
        raise DegenerateMetricError(
            f"singular metric at node {int(bad[0])}{' of ' + where if where else ''}"
            f" (condition {cond[bad[0]]:.3e})"
        )


def christoffel_from_jet(d1, d2, g_inv) -> np.ndarray:
    """Gamma^k_{ij} as (m, n, n, n) indexed [k, i, j]."""
    dg = np.einsum("mdab,mdc->mabc", d2, d1, optimize=True) + np.einsum("mdb,mdac->mabc", d1, d2, optimize=True)
    # sym[m, i, j, l] = d_i g_{jl} + d_j g_{il} - d_l g_{ij}
    sym = dg + np.einsum("mjil->mijl", dg) - np.einsum("mlij->mijl", dg)
    return 0.5 * np.einsum("mkl,mijl->mkij", g_inv, sym, optimize=True)


def tangent_basis(d1: np.ndarray) -> np.ndarray:
    """Orthonormal tangent columns (m, d, n) via QR of dPhi."""
    q, _ = np.linalg.qr(d1)
    return q


def normal_projector_apply(tangent: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Project (m, d, *rest) ambient vectors onto the normal space."""
    coeff = np.einsum("mdn,md...->mn...", tangent, vectors, optimize=True)
    return vectors - np.einsum("mdn,mn...->md...", tangent, coeff, optimize=True)


def second_form_from_jet(d2, tangent) -> np.ndarray:
    """Ambient-valued II_{ij} = proj_N(d2 Phi), shape (m, d, n, n)."""
    return normal_projector_apply(tangent, d2)


def mean_curvature(ii, g_inv, n) -> np.ndarray:
    """H = (1/n) tr_g II, shape (m, d)."""
    return np.einsum("mij,mdij->md", g_inv, ii, optimize=True) / n


def grad_second_form(d3, tangent, chris, ii) -> np.ndarray:
    """Covariant derivative of II with the induced connection.

    (grad_k II)_{ij} = proj_N(d3_{kij} Phi) - Gamma^l_{ij} II_{kl}
                       - Gamma^l_{ki} II_{lj} - Gamma^l_{kj} II_{il},
    shape (m, d, n, n, n) indexed [k, i, j].
    """
    pd3 = normal_projector_apply(tangent, d3)
    t1 = np.einsum("mlij,mdkl->mdkij", chris, ii, optimize=True)
    t2 = np.einsum("mlki,mdlj->mdkij", chris, ii, optimize=True)
    t3 = np.einsum("mlkj,mdil->mdkij", chris, ii, optimize=True)
    return pd3 - t1 - t2 - t3


def tensor_norm_sq(tensor: np.ndarray, g_inv: np.ndarray) -> np.ndarray:
    """|T|^2_g for ambient-valued tensors (m, d, n, ..., n).

    Tangential slots contract with g^{-1}, the value slot with the Euclidean
    metric (the frame-free convention).
    """
    k = tensor.ndim - 2
    raised = tensor
    for slot in range(k):
        ax = 2 + slot
        moved = np.moveaxis(raised, ax, 1)
        moved = np.einsum("mab,mb...->ma...", g_inv, moved, optimize=True)
        raised = np.moveaxis(moved, 1, ax)
    flat = (tensor * raised).reshape(tensor.shape[0], -1)
    return np.sum(flat, axis=1)


def riemann_from_gauss(ii: np.ndarray) -> np.ndarray:
    """Riem_{ijkl} = II_{ik}.II_{jl} - II_{il}.II_{jk}, shape (m, n, n, n, n).

    Takes the ambient-valued second fundamental form (m, d, n, n).
    """
    a = np.einsum("mdik,mdjl->mijkl", ii, ii, optimize=True)
    return a - np.transpose(a, (0, 1, 2, 4, 3))


# ---------------------------------------------------------------------------
# frames and their orientation
# ---------------------------------------------------------------------------


def raw_normal_frames(d1: np.ndarray, n: int) -> np.ndarray:
    """Unoriented orthonormal normal frames (m, c, d) via complete QR."""
    q, _ = np.linalg.qr(d1, mode="complete")
    return np.transpose(q[:, :, n:], (0, 2, 1))


def so_align(children: np.ndarray, parents: np.ndarray) -> np.ndarray:
    """Rotate row-frames ``children`` (..., c, d) to best match ``parents``.

    Solves the special-orthogonal Procrustes problem per batch entry:
    the rotation W maximizing tr(W C P^T) is V diag(1,..,1,s) U^T with
    C P^T = U S V^T and s the determinant sign correction.
    """
    m = children @ np.swapaxes(parents, -1, -2)
    u, _, vh = np.linalg.svd(m)
    sign = np.where(np.linalg.det(u @ vh) < 0.0, -1.0, 1.0)
    v = np.swapaxes(vh, -1, -2).copy()
    v[..., :, -1] *= sign[..., None]
    w = v @ np.swapaxes(u, -1, -2)
    return w @ children


def o_align(children: np.ndarray, parents: np.ndarray) -> np.ndarray:
    """Full orthogonal Procrustes alignment (reflections allowed).

    Used for gauge propagation, where the raw QR frames carry arbitrary
    per-node O(c) gauge including sign flips.
    """
    m = children @ np.swapaxes(parents, -1, -2)
    u, _, vh = np.linalg.svd(m)
    w = np.swapaxes(vh, -1, -2) @ np.swapaxes(u, -1, -2)
    return w @ children


def _orient_recursive(frames: np.ndarray) -> np.ndarray:
    dims = frames.shape[:-2]
    if len(dims) == 1:
        for i in range(1, dims[0]):
            frames[i] = o_align(frames[i][None], frames[i - 1][None])[0]
        return frames
    frames[0] = _orient_recursive(frames[0])
    for j in range(1, dims[0]):
        frames[j] = o_align(frames[j], frames[j - 1])
    return frames


def orient_frames(frames: np.ndarray, d1_seed: np.ndarray) -> np.ndarray:
    """Propagate a consistent frame gauge from the origin node over the grid.

    frames: dims + (c, d).  d1_seed: dPhi at the seed node (d, n), used to
    make [dPhi | frame] a direct basis of R^d there.
    """
    frames = _orient_recursive(np.array(frames))
    seed = frames.reshape((-1,) + frames.shape[-2:])[0]
    full = np.concatenate([d1_seed, seed.T], axis=1)
    if np.linalg.det(full) < 0:
        frames[..., -1, :] = -frames[..., -1, :]
    return frames


def frame_distance(fx: np.ndarray, fy: np.ndarray) -> np.ndarray:
    """max_alpha |n_alpha(x) - n_alpha(y)| after SO-Procrustes alignment.

    fx, fy: (..., c, d) batched row-frames; returns (...,).
    """
    aligned = so_align(fx, fy)
    return np.max(np.linalg.norm(aligned - fy, axis=-1), axis=-1)


# ---------------------------------------------------------------------------
# chart-level geometry
# ---------------------------------------------------------------------------


@dataclass
class GeometryFields:
    """Per-node geometry of one chart, flattened row-major over nodes."""

    n: int
    d: int
    g: np.ndarray
    g_inv: np.ndarray
    sqrt_det_g: np.ndarray
    christoffel: np.ndarray
    tangent: np.ndarray
    normal_frame: np.ndarray
    ii_ambient: np.ndarray
    h: np.ndarray
    cov_ii: list[np.ndarray]
    cov_ii_norms: list[np.ndarray]

    @property
    def ii_frame(self) -> np.ndarray:
        """Frame components II^alpha_{ij}, shape (m, n, n, c)."""
        return np.einsum("mcd,mdij->mijc", self.normal_frame, self.ii_ambient)

    @property
    def ii_norm(self) -> np.ndarray:
        return np.sqrt(self.cov_ii_norms[0])

    @property
    def grad_ii_norm(self) -> np.ndarray:
        if len(self.cov_ii_norms) < 2:
            raise UnsupportedError("grad II was not computed for this chart")
        return np.sqrt(self.cov_ii_norms[1])

    @property
    def h_norm(self) -> np.ndarray:
        return np.linalg.norm(self.h, axis=-1)


def geometry_from_jets(jets: dict[int, np.ndarray], n: int, d: int, max_cov: int = 0):
    """Pointwise geometry from jets; no frame orientation (see chart variant)."""
    d1 = jets[1]
    g, g_inv, sdet = metric_from_jet(d1)
    tangent = tangent_basis(d1)
    chris = christoffel_from_jet(d1, jets[2], g_inv)
    ii = second_form_from_jet(jets[2], tangent)
    h = mean_curvature(ii, g_inv, n)
    cov = [ii]
    norms = [tensor_norm_sq(ii, g_inv)]
    if max_cov >= 1:
        if 3 not in jets:
            raise UnsupportedError("grad II needs third derivatives")
        gii = grad_second_form(jets[3], tangent, chris, ii)
        cov.append(gii)
        norms.append(tensor_norm_sq(gii, g_inv))
    frame = raw_normal_frames(d1, n)
    return GeometryFields(
        n=n,
        d=d,
        g=g,
        g_inv=g_inv,
        sqrt_det_g=sdet,
        christoffel=chris,
        tangent=tangent,
        normal_frame=frame,
        ii_ambient=ii,
        h=h,
        cov_ii=cov,
        cov_ii_norms=norms,
    )


def chart_geometry(
    imm: SampledImmersion, ci: int, max_cov: int = 0, oriented: bool = True
) -> GeometryFields:
    """Geometry fields at every node of chart ``ci`` (cached on the immersion).

    max_cov = K computes covariant derivatives of II up to order K; K + 2
    derivatives of Phi must be available (K <= 1).
    """
    if max_cov > 1:
        raise UnsupportedError(
            "covariant derivatives of II beyond first order need fourth "
            "derivatives of Phi, above the supported stencil order"
        )

    def compute():
        jets = imm.node_jet(ci, 2 + max_cov)
        geo = geometry_from_jets(jets, imm.n, imm.d, max_cov=max_cov)
        metric_condition_check(geo.g, where=f"chart {ci}")
        if oriented:
            grid = imm.charts[ci].grid
            frames = geo.normal_frame.reshape(grid.dims + geo.normal_frame.shape[-2:])
            geo.normal_frame = orient_frames(frames, jets[1][0]).reshape(
                geo.normal_frame.shape
            )
        return geo

    return imm.cached(("chart_geometry", ci, max_cov, oriented), compute)


# -- public spec operations --------------------------------------------------


def first_fundamental_form(imm: SampledImmersion, ci: int):
    """Per-node g, g_inv, sqrt(det g) of a chart."""
    geo = chart_geometry(imm, ci, oriented=False)
    return geo.g, geo.g_inv, geo.sqrt_det_g


def normal_frame(imm: SampledImmersion, ci: int) -> np.ndarray:
    """Oriented orthonormal normal frames (m, d-n, d) of a chart."""
    return chart_geometry(imm, ci).normal_frame


@dataclass
class GaussMapField:
    """Generalized Gauss map of a chart: ordered frame plus orientation sign."""

    frames: np.ndarray  # (m, c, d)
    orientation: int = 1

    def distance(self, i: int, j: int) -> float:
        return float(frame_distance(self.frames[i][None], self.frames[j][None])[0])

    def oscillation(self, subset: np.ndarray | None = None) -> float:
        """Max pairwise frame distance over a node subset (all nodes if None)."""
        sel = self.frames if subset is None else self.frames[subset]
        m = sel.shape[0]
        if m > 512:
            stride = int(np.ceil(m / 512))
            sel = sel[::stride]
            m = sel.shape[0]
        ii, jj = np.triu_indices(m, k=1)
        if ii.size == 0:
            return 0.0
        return float(np.max(frame_distance(sel[ii], sel[jj])))


def gauss_map(imm: SampledImmersion, ci: int) -> GaussMapField:
    return GaussMapField(frames=normal_frame(imm, ci))


def second_fundamental_form(imm: SampledImmersion, ci: int):
    """Frame components II^alpha_{ij} (m, n, n, c) and mean curvature H (m, d)."""
    geo = chart_geometry(imm, ci)
    return geo.ii_frame, geo.h


def covariant_derivatives_II(imm: SampledImmersion, ci: int, k_max: int):
    """List of ambient-valued cov. derivatives of II and their |.|_g norms.

    Precondition: k_max <= n/2 - 1 and k_max + 2 <= 3 available derivative
    orders.
    """
    if k_max > imm.n // 2 - 1:
        raise UnsupportedError(f"K = {k_max} exceeds n/2 - 1 = {imm.n // 2 - 1}")
    geo = chart_geometry(imm, ci, max_cov=k_max)
    return geo.cov_ii[: k_max + 1], [np.sqrt(s) for s in geo.cov_ii_norms[: k_max + 1]]
