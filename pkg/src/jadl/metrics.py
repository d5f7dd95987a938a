"""Evaluation metrics: atom similarity, denoising error, code statistics."""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .core import ShiftSet, correlate_batch


@dataclass
class SimilarityResult:
    assignment: list  # (true atom, recovered atom) pairs in matching order
    rho: np.ndarray  # per true atom; 0 when unmatched
    sign: np.ndarray  # sign of the best correlation per true atom
    best_shift: np.ndarray  # shift (samples) of the true atom at the best match
    rho_bar: float


def _as_rows(d):
    atoms = getattr(d, "atoms", d)
    return np.atleast_2d(np.asarray(atoms, dtype=float))


def similarity_matrix(recovered, truth, max_shift):
    """``|corr|`` maxima, shape ``(K_true, K_rec)``, plus signs and shifts.

    Atoms are normalized first. A recovered atom longer than the true ones
    (extended mode) is compared with the true atom zero-padded on both sides.
    """
    R = _as_rows(recovered)
    T = _as_rows(truth)
    R = R / np.linalg.norm(R, axis=1, keepdims=True)
    T = T / np.linalg.norm(T, axis=1, keepdims=True)
    L, N = R.shape[1], T.shape[1]
    if L < N or (L - N) % 2:
        raise ValueError(f"cannot compare atoms of length {L} with true atoms of length {N}")
    if L > N:
        pad = (L - N) // 2
        T = np.pad(T, ((0, 0), (pad, pad)))
    shifts = ShiftSet.symmetric(min(int(max_shift), L // 2))
    # corr[i, r, s] = <rec_r, shift(true_i, n_s)>
    corr = correlate_batch(R, T, shifts).transpose(1, 0, 2)
    best = np.argmax(np.abs(corr), axis=2)
    val = np.take_along_axis(corr, best[..., None], axis=2)[..., 0]
    return np.abs(val), np.sign(val), np.asarray(shifts.shifts)[best]


def similarity(recovered, truth, max_shift_s=0.6, sample_rate=128.0) -> SimilarityResult:
    """Match recovered atoms to true atoms greedily by shift-tolerant correlation.

    The true atoms are shifted by up to ``max_shift_s`` seconds. Pairs are
    taken in descending order of similarity without replacement; true atoms
    left without a partner count as 0 in the average.
    """
    max_shift = int(np.floor(max_shift_s * sample_rate + 0.5))
    P, sgn, sh = similarity_matrix(recovered, truth, max_shift)
    K_true, K_rec = P.shape
    rho = np.zeros(K_true)
    sign = np.zeros(K_true)
    best_shift = np.zeros(K_true, dtype=int)
    assignment = []
    free_t, free_r = set(range(K_true)), set(range(K_rec))
    order = np.argsort(-P, axis=None, kind="stable")
    for flat in order:
        i, r = divmod(int(flat), K_rec)
        if i in free_t and r in free_r:
            assignment.append((i, r))
            rho[i], sign[i], best_shift[i] = P[i, r], sgn[i, r], sh[i, r]
            free_t.discard(i)
            free_r.discard(r)
            if not free_t or not free_r:
                break
    return SimilarityResult(assignment, rho, sign, best_shift, float(rho.mean()))


def denoise_error(denoised, clean) -> float:
    """Mean over signals of ``||denoised - clean|| / ||clean||``."""
    Y = np.atleast_2d(np.asarray(denoised, dtype=float))
    X = np.atleast_2d(np.asarray(clean, dtype=float))
    if Y.shape != X.shape:
        raise ValueError(f"shape mismatch {Y.shape} vs {X.shape}")
    norms = np.linalg.norm(X, axis=1)
    ok = norms > 0
    if not ok.all():
        warnings.warn(f"{int((~ok).sum())} zero-norm clean signals excluded", stacklevel=2)
    if not ok.any():
        return float("nan")
    err = np.linalg.norm(Y[ok] - X[ok], axis=1) / norms[ok]
    return float(err.mean())


@dataclass
class CodeStats:
    energy: np.ndarray  # (K,) mean squared coefficient over all signals
    latency: list  # per atom: Counter {shift: count}
    usage: np.ndarray  # (K,) number of signals using the atom

    def histogram(self, atom, shifts: ShiftSet | None = None):
        """Counts per shift; dense over ``shifts`` when given."""
        h = self.latency[atom]
        if shifts is None:
            return dict(sorted(h.items()))
        return {n: h.get(n, 0) for n in shifts.shifts}


def code_stats(codes, n_atoms) -> CodeStats:
    """Average energy per atom and the shifts each atom was used at."""
    M = len(codes)
    energy = np.zeros(n_atoms)
    usage = np.zeros(n_atoms, dtype=int)
    latency = [Counter() for _ in range(n_atoms)]
    for code in codes:
        for i, n, a in code:
            energy[i] += a * a
            usage[i] += 1
            latency[i][n] += 1
    if M:
        energy /= M
    return CodeStats(energy, latency, usage)
