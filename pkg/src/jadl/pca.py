"""PCA baseline for dictionary recovery and denoising."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass
class PcaModel:
    components: np.ndarray  # (rank, N), rows orthonormal
    mean: np.ndarray  # (N,); zeros when uncentered
    explained_variance: np.ndarray  # (rank,), non-increasing
    centered: bool = True

    @property
    def rank(self) -> int:
        return self.components.shape[0]


def fit_pca(signals, centered=True) -> PcaModel:
    """Principal components of ``signals`` (rows), largest variance first.

    With ``centered=False`` the mean is not removed and the "variances" are
    second moments about zero. Components whose singular value is
    numerically zero are dropped. Each component is signed so that its
    largest-magnitude entry is positive.
    """
    X = np.atleast_2d(np.asarray(signals, dtype=float))
    M, N = X.shape
    if M < 2:
        raise ValueError("PCA needs at least two signals")
    mean = X.mean(axis=0) if centered else np.zeros(N)
    Xc = X - mean
    _, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    tol = max(M, N) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    keep = s > max(tol, 1e-300)
    s, Vt = s[keep], Vt[keep]
    rows = np.arange(Vt.shape[0])
    flip = np.sign(Vt[rows, np.argmax(np.abs(Vt), axis=1)])
    Vt = Vt * flip[:, None]
    denom = (M - 1) if centered else M
    return PcaModel(Vt.copy(), mean, s**2 / denom, centered)


def pca_denoise(model: PcaModel, signals, n_components):
    """Project onto the first ``n_components`` components and add the mean back."""
    X = np.asarray(signals, dtype=float)
    K = int(n_components)
    if K < 0:
        raise ValueError("n_components must be non-negative")
    if K > model.rank:
        warnings.warn(
            f"n_components={K} exceeds the model rank {model.rank}; clamping",
            stacklevel=2,
        )
        K = model.rank
    V = model.components[:K]
    Xc = X - model.mean
    return model.mean + (Xc @ V.T) @ V


def pca_dictionary(model: PcaModel, n_components):
    """First components as a dictionary array (rows are unit-norm atoms)."""
    return model.components[: min(int(n_components), model.rank)].copy()
