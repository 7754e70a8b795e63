"""Lorentz norms L^(p,q) over weighted sample sets.

The distribution function of finitely many weighted samples is a step
function, so the defining integral

    ||f||_{(p,q)}^q = p * int_0^inf lambda^{q-1} mu(lambda)^{q/p} dlambda

collapses to a closed-form sum over the sorted distinct values; no quadrature
tolerance is involved.  q = inf is the weak norm sup lambda * mu(lambda)^{1/p},
attained at one of the finitely many breakpoints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidExponentError


@dataclass(frozen=True)
class WeightedSampleSet:
    """(|f| value, measure weight) pairs; the substrate of all norms here."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)
        if v.shape != w.shape:
            raise ValueError("values and weights must have equal length")
        if np.any(v < 0):
            raise ValueError("values must be nonnegative (pass |f| samples)")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if not np.all(np.isfinite(w)) or not np.all(np.isfinite(v)):
            raise ValueError("non-finite samples")

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weights))

    def merged(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct values ascending with tied weights merged."""
        order = np.argsort(self.values, kind="stable")
        v = self.values[order]
        w = self.weights[order]
        distinct, start = np.unique(v, return_index=True)
        sums = np.add.reduceat(w, start)
        return distinct, sums


def distribution_function(s: WeightedSampleSet, lam: float) -> float:
    """mu(lam) = total weight of samples with value strictly above lam."""
    if lam < 0:
        raise InvalidExponentError("lambda must be nonnegative")
    return float(np.sum(s.weights[s.values > lam]))


def lorentz_norm(s: WeightedSampleSet, p: float, q: float) -> float:
    """Exact L^(p,q) norm of the sample set.

    With distinct values 0 <= v_1 < ... < v_m carrying suffix weights
    S_k = weight{f >= v_k}, the defining integral is

        (p/q) * sum_k S_k^{q/p} (v_k^q - v_{k-1}^q),   v_0 = 0,

    raised to 1/q; q = inf gives max_k v_k S_k^{1/p}.
    """
    if p < 1 or (q != np.inf and q < 1):
        raise InvalidExponentError(f"exponents out of range: p={p}, q={q}")
    if s.values.size == 0:
        return 0.0
    v, w = s.merged()
    if v[0] == 0.0:
        v, w = v[1:], w[1:]
        if v.size == 0:
            return 0.0
    suffix = np.cumsum(w[::-1])[::-1]
    if q == np.inf:
        return float(np.max(v * suffix ** (1.0 / p)))
    vq = v**q
    prev = np.concatenate([[0.0], vq[:-1]])
    acc = np.sum(suffix ** (q / p) * (vq - prev))
    return float(((p / q) * acc) ** (1.0 / q))


def weak_norm(s: WeightedSampleSet, p: float) -> float:
    """Weak-L^p norm, alias L^(p, inf)."""
    return lorentz_norm(s, p, np.inf)


def lebesgue_norm(s: WeightedSampleSet, p: float) -> float:
    """Plain L^p norm; by construction equals lorentz_norm(s, p, p)."""
    return float(np.sum(s.weights * s.values**p) ** (1.0 / p))


def sobolev_lorentz_norm(
    derivative_samples: list[WeightedSampleSet], p: float, q: float
) -> float:
    """W^{k,(p,q)} norm: sum of L^(p,q) norms of |grad^j f| for j = 0..k.

    The caller supplies one WeightedSampleSet per derivative order, sampled
    with volume weights; this keeps the op agnostic of how the fields were
    produced (chart FD, atoms, ...).
    """
    return float(sum(lorentz_norm(s, p, q) for s in derivative_samples))
