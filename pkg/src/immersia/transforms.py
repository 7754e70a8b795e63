"""Similarity transforms of the ambient space: x -> lam * R x + t."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ORTHOGONALITY_TOL = 1e-12


@dataclass(frozen=True)
class SimilarityTransform:
    """Composition of a rotation R, dilation lam > 0 and translation t."""

    d: int
    rotation: np.ndarray = None
    translation: np.ndarray = None
    dilation: float = 1.0

    def __post_init__(self):
        rot = np.eye(self.d) if self.rotation is None else np.asarray(self.rotation, float)
        tr = np.zeros(self.d) if self.translation is None else np.asarray(self.translation, float)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tr)
        if rot.shape != (self.d, self.d) or tr.shape != (self.d,):
            raise ValueError("transform dimension mismatch")
        if self.dilation <= 0:
            raise ValueError("dilation must be positive")
        if np.max(np.abs(rot.T @ rot - np.eye(self.d))) > ORTHOGONALITY_TOL:
            raise ValueError("rotation is not orthogonal to 1e-12")

    @property
    def is_identity(self) -> bool:
        return (
            self.dilation == 1.0
            and not np.any(self.translation)
            and np.array_equal(self.rotation, np.eye(self.d))
        )

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Apply to points with shape (..., d)."""
        return self.dilation * points @ self.rotation.T + self.translation

    def apply_linear(self, vectors: np.ndarray) -> np.ndarray:
        """Apply the linear part lam * R to derivative data shaped (m, d, *rest)."""
        return self.dilation * np.einsum("ab,mb...->ma...", self.rotation, vectors, optimize=True)

    def compose(self, other: "SimilarityTransform") -> "SimilarityTransform":
        """self after other: x -> self(other(x))."""
        return SimilarityTransform(
            d=self.d,
            rotation=self.rotation @ other.rotation,
            translation=self.dilation * self.rotation @ other.translation + self.translation,
            dilation=self.dilation * other.dilation,
        )

    def inverse(self) -> "SimilarityTransform":
        rot_inv = self.rotation.T
        return SimilarityTransform(
            d=self.d,
            rotation=rot_inv,
            translation=-rot_inv @ self.translation / self.dilation,
            dilation=1.0 / self.dilation,
        )
