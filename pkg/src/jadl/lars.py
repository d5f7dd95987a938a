"""Least angle regression for the Lasso, plain and with per-atom blocking.

Both solvers share one compiled homotopy routine that works on the
initial correlations and the Gram matrix only. Columns come in
contiguous groups of equal size; once a column of a group is active, the
other columns of the group are blocked until it leaves the active set
again. With groups of size one this is ordinary LARS-Lasso.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numba
import numpy as np

from .core import (
    FFT_THRESHOLD,
    Dictionary,
    ShiftSet,
    SparseCode,
    correlate_batch,
    shift_indices,
)

logger = logging.getLogger(__name__)

RANK_TOL = 1e-10
JITTER = 1e-10

EVENT_KINDS = ("activate", "deactivate", "rank-drop", "polish")
_ACTIVATE, _DEACTIVATE, _RANK_DROP = 0, 1, 2


@dataclass
class TraceEvent:
    step: int
    kind: str  # one of EVENT_KINDS
    column: int
    lam: float
    residual_norm: float


@dataclass
class SolverTrace:
    events: list = field(default_factory=list)
    final_residual_norm: float = 0.0
    polished: bool = False
    hit_step_limit: bool = False

    @property
    def n_activations(self):
        return sum(e.kind == "activate" for e in self.events)

    @property
    def n_deactivations(self):
        return sum(e.kind == "deactivate" for e in self.events)

    def residual_norms(self, kinds=("activate", "deactivate")):
        return [e.residual_norm for e in self.events if e.kind in kinds]


@numba.njit(cache=True)
def _chol_solve(A, b, n, jitter):
    """Solve ``(A + jitter I) x = b`` on the leading n x n block; ok flag."""
    L = np.zeros((n, n))
    x = np.zeros(n)
    for i in range(n):
        for j in range(i + 1):
            s = A[i, j]
            if i == j:
                s += jitter
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                if s <= 0.0:
                    return x, False
                L[i, i] = np.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    y = np.zeros(n)
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * y[k]
        y[i] = s / L[i, i]
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, n):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]
    return x, True


@numba.njit(cache=True)
def _residual2(xnorm2, c0, G, active, beta, n_act):
    r2 = xnorm2
    for p in range(n_act):
        r2 -= 2.0 * beta[p] * c0[active[p]]
        for q in range(n_act):
            r2 += beta[p] * beta[q] * G[active[p], active[q]]
    return max(r2, 0.0)


@numba.njit(cache=True)
def _homotopy(c0, G, lam, xnorm2, group_size, max_activations, max_events):
    """Lasso path from ``max |c0|`` down to ``lam`` with group blocking.

    Returns active columns, their coefficients, the event log and a flag
    telling whether the event budget ran out.
    """
    n = c0.size
    c = c0.copy()
    eligible = np.ones(n, dtype=np.bool_)
    excluded = np.zeros(n, dtype=np.bool_)
    cap = n + 1
    active = np.zeros(cap, dtype=np.int64)
    signs = np.zeros(cap)
    beta = np.zeros(cap)
    n_act = 0
    ev_kind = np.zeros(max_events, dtype=np.int64)
    ev_col = np.zeros(max_events, dtype=np.int64)
    ev_lam = np.zeros(max_events)
    ev_res = np.zeros(max_events)
    n_ev = 0
    a = np.zeros(n)
    G_AA = np.zeros((cap, cap))
    cross = np.zeros(cap)

    j = 0
    best = 0.0
    for k in range(n):
        if abs(c[k]) > best:
            best = abs(c[k])
            j = k
    lam_cur = best
    if lam_cur <= lam or lam_cur == 0.0:
        return (active[:0].copy(), beta[:0].copy(), ev_kind[:0].copy(), ev_col[:0].copy(),
                ev_lam[:0].copy(), ev_res[:0].copy(), False)

    n_activations = 0
    pending = j
    just_dropped = -1
    exhausted = True
    while n_ev < max_events:
        if pending >= 0:
            col = pending
            pending = -1
            schur = G[col, col]
            if n_act > 0:
                for p in range(n_act):
                    cross[p] = G[active[p], col]
                    for q in range(n_act):
                        G_AA[p, q] = G[active[p], active[q]]
                y, ok = _chol_solve(G_AA, cross, n_act, 0.0)
                if ok:
                    for p in range(n_act):
                        schur -= cross[p] * y[p]
                else:
                    schur = 0.0
            if schur <= RANK_TOL * max(G[col, col], 1e-300):
                excluded[col] = True
                eligible[col] = False
                ev_kind[n_ev] = _RANK_DROP
            else:
                active[n_act] = col
                signs[n_act] = 1.0 if c[col] >= 0.0 else -1.0
                beta[n_act] = 0.0
                n_act += 1
                g0 = (col // group_size) * group_size
                for k in range(g0, g0 + group_size):
                    eligible[k] = False
                n_activations += 1
                ev_kind[n_ev] = _ACTIVATE
            ev_col[n_ev] = col
            ev_lam[n_ev] = lam_cur
            ev_res[n_ev] = np.sqrt(_residual2(xnorm2, c0, G, active, beta, n_act))
            n_ev += 1

        if n_act == 0:
            best = -1.0
            k_best = -1
            for k in range(n):
                if eligible[k] and abs(c[k]) > best:
                    best = abs(c[k])
                    k_best = k
            if k_best < 0 or best <= lam:
                exhausted = False
                break
            pending = k_best
            continue

        for p in range(n_act):
            for q in range(n_act):
                G_AA[p, q] = G[active[p], active[q]]
        w, ok = _chol_solve(G_AA, signs, n_act, 0.0)
        if not ok:
            w, ok = _chol_solve(G_AA, signs, n_act, JITTER)
        for k in range(n):
            s = 0.0
            for p in range(n_act):
                s += w[p] * G[active[p], k]
            a[k] = s

        gamma = lam_cur - lam
        event = -1
        target = -1
        if max_activations < 0 or n_activations < max_activations:
            for k in range(n):
                if not eligible[k]:
                    continue
                g = np.inf
                den = 1.0 - a[k]
                if den > 1e-12:
                    g = max(lam_cur - c[k], 0.0) / den
                den = 1.0 + a[k]
                if den > 1e-12:
                    g = min(g, max(lam_cur + c[k], 0.0) / den)
                # a column just dropped sits on the boundary; skip only that tie
                if k == just_dropped and g <= 1e-9 * lam_cur:
                    continue
                if g < gamma:
                    gamma = g
                    event = _ACTIVATE
                    target = k
        for p in range(n_act):
            if w[p] != 0.0:
                g = -beta[p] / w[p]
                if g > 0.0 and g <= gamma:
                    gamma = g
                    event = _DEACTIVATE
                    target = p

        for p in range(n_act):
            beta[p] += gamma * w[p]
        for k in range(n):
            c[k] -= gamma * a[k]
        lam_cur -= gamma
        just_dropped = -1

        if event == -1:
            exhausted = False
            break
        if event == _ACTIVATE:
            pending = target
            continue
        # deactivation: remove position `target`, unblock its group
        col = active[target]
        for p in range(target, n_act - 1):
            active[p] = active[p + 1]
            signs[p] = signs[p + 1]
            beta[p] = beta[p + 1]
        n_act -= 1
        g0 = (col // group_size) * group_size
        for k in range(g0, g0 + group_size):
            eligible[k] = not excluded[k]
        just_dropped = col
        ev_kind[n_ev] = _DEACTIVATE
        ev_col[n_ev] = col
        ev_lam[n_ev] = lam_cur
        ev_res[n_ev] = np.sqrt(_residual2(xnorm2, c0, G, active, beta, n_act))
        n_ev += 1

    return (
        active[:n_act].copy(),
        beta[:n_act].copy(),
        ev_kind[:n_ev].copy(),
        ev_col[:n_ev].copy(),
        ev_lam[:n_ev].copy(),
        ev_res[:n_ev].copy(),
        exhausted,
    )


def _polish(c0, G, lam, active, beta, group_size, excluded, xnorm2, max_sweeps=200):
    """Exact block-coordinate descent over groups, one column per group.

    Used only when the path ends with unblocked columns above ``lam``
    (possible after a deactivation). Every move lowers the constrained
    objective, so the result is a coordinate-wise minimum.
    """
    n_groups = c0.size // group_size
    chosen = {int(k) // group_size: (int(k), float(b)) for k, b in zip(active, beta)}
    c = c0 - G[:, active] @ beta if len(active) else c0.copy()
    diag = np.diag(G)
    tol = 1e-15 * (xnorm2 + 1.0)
    for _ in range(max_sweeps):
        best_drop = 0.0
        for g in range(n_groups):
            cols = np.arange(g * group_size, (g + 1) * group_size)
            cols = cols[~excluded[cols]]
            if cols.size == 0:
                continue
            old = chosen.pop(g, None)
            if old is None:
                c_ex, old_val = c, 0.0
            else:
                k0, b0 = old
                c_ex = c + b0 * G[:, k0]
                old_val = -b0 * c_ex[k0] + 0.5 * b0 * b0 * diag[k0] + lam * abs(b0)
            z = c_ex[cols]
            shrunk = np.maximum(np.abs(z) - lam, 0.0)
            gain = shrunk**2 / (2.0 * diag[cols])
            pos = int(np.argmax(gain))
            if gain[pos] <= 0.0:
                c = c_ex
                best_drop = max(best_drop, old_val)
                continue
            if old is not None and -gain[pos] >= old_val:
                chosen[g] = old
                continue
            k = int(cols[pos])
            b = float(np.sign(z[pos]) * shrunk[pos] / diag[k])
            chosen[g] = (k, b)
            c = c_ex - b * G[:, k]
            best_drop = max(best_drop, old_val + gain[pos])
        if best_drop <= tol:
            break
    new_active = np.array([chosen[g][0] for g in sorted(chosen)], dtype=np.int64)
    new_beta = np.array([chosen[g][1] for g in sorted(chosen)], dtype=float)
    return new_active, new_beta


def _solve(c0, G, lam, xnorm2, group_size, max_activations=None):
    """Run the homotopy, check stationarity, polish if needed."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    n = c0.size
    max_events = 10 * n + 100
    active, beta, kinds, cols, lams, res, exhausted = _homotopy(
        c0, G, float(lam), float(xnorm2), int(group_size),
        -1 if max_activations is None else int(max_activations), max_events,
    )
    trace = SolverTrace(
        events=[
            TraceEvent(s, EVENT_KINDS[k], int(col), float(lm), float(r))
            for s, (k, col, lm, r) in enumerate(zip(kinds, cols, lams, res))
        ],
        hit_step_limit=bool(exhausted),
    )
    if exhausted:
        logger.warning("LARS used its %d-event budget without reaching lambda", max_events)
    capped = max_activations is not None and trace.n_activations >= max_activations
    if not capped and n:
        c = c0 - G[:, active] @ beta if active.size else c0
        allowed = np.ones(n, dtype=bool)
        excluded = np.zeros(n, dtype=bool)
        excluded[cols[kinds == _RANK_DROP]] = True
        allowed[excluded] = False
        for k in active:
            g0 = (k // group_size) * group_size
            allowed[g0 : g0 + group_size] = False
        scale = max(float(np.max(np.abs(c0))), 1.0)
        if np.any(np.abs(c[allowed]) > lam + 1e-9 * scale):
            active, beta = _polish(c0, G, lam, active, beta, group_size, excluded, xnorm2)
            trace.polished = True
            r = np.sqrt(_residual2(float(xnorm2), c0, G, active, beta, active.size))
            trace.events.append(TraceEvent(len(trace.events), "polish", -1, float(lam), float(r)))
    trace.final_residual_norm = float(
        np.sqrt(_residual2(float(xnorm2), c0, G, active, beta, active.size))
    )
    return active, beta, trace


def _gram(cols):
    return cols @ cols.T


def lars_lasso(X, x, lam, max_steps=None, gram=None):
    """Solve ``min_a 0.5 * ||x - X a||^2 + lam * ||a||_1`` with LARS.

    Parameters
    ----------
    X : ndarray, shape (N, P)
        Design matrix, one candidate atom per column.
    x : ndarray, shape (N,)
    lam : float
        Must be positive unless ``max_steps`` is given; ``lam == 0`` caps
        the number of activations at ``P``.
    max_steps : int, optional
        Cap on activation steps.
    gram : ndarray, shape (P, P), optional
        Precomputed ``X.T @ X``.

    Returns
    -------
    coef : ndarray, shape (P,)
    trace : SolverTrace
    """
    X = np.asarray(X, dtype=float)
    x = np.asarray(x, dtype=float)
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(x))):
        raise ValueError("non-finite entries in the Lasso problem")
    cols = np.ascontiguousarray(X.T)
    if lam == 0 and max_steps is None:
        max_steps = cols.shape[0]
    G = _gram(cols) if gram is None else gram
    c0 = cols @ x
    active, beta, trace = _solve(c0, G, float(lam), float(x @ x), 1, max_steps)
    coef = np.zeros(cols.shape[0])
    coef[active] = beta
    return coef, trace


def _circular_gram(atoms, shifts: ShiftSet):
    """Gram of the unrolled circular dictionary from atom cross-correlations."""
    K, N = atoms.shape
    F = np.fft.rfft(atoms)
    # xc[i, k, m] = <d_i, roll(d_k, m)>
    xc = np.fft.irfft(F[:, None, :] * np.conj(F)[None, :, :], n=N)
    ns = np.asarray(shifts.shifts)
    lag = (ns[None, :] - ns[:, None]) % N  # n_t - n_s
    G = xc[:, :, lag]  # (K, K, S, S)
    S = ns.size
    return np.ascontiguousarray(G.transpose(0, 2, 1, 3).reshape(K * S, K * S))


class CodingContext:
    """Unrolled dictionary and its Gram matrix, shared by a batch of signals."""

    def __init__(self, dictionary: Dictionary, shifts: ShiftSet):
        self.dictionary = dictionary
        self.shifts = shifts
        N = dictionary.signal_length(shifts)
        shifts.check_signal_length(N)
        self.n_samples = N
        K, S = dictionary.n_atoms, shifts.size
        # row i*S + s of the unrolled dictionary is atom i at shift s
        self.cols = np.ascontiguousarray(
            dictionary.atoms[:, shift_indices(shifts, N)].reshape(K * S, N)
        )
        if S > FFT_THRESHOLD and shifts.mode == "circular":
            self.gram = _circular_gram(dictionary.atoms, shifts)
        else:
            self.gram = _gram(self.cols)

    def correlations(self, signals):
        """Initial correlations for a batch, shape ``(M, K * S)``."""
        signals = np.atleast_2d(signals)
        if self.shifts.size > FFT_THRESHOLD:
            corr = correlate_batch(signals, self.dictionary.atoms, self.shifts, "fft")
            return corr.reshape(signals.shape[0], -1)
        return np.stack([self.cols @ x for x in signals])


def jitter_sparse_code(signal, dictionary, shifts, lam, context=None, correlations=None):
    """Sparse code of one signal over all shifts, using each atom at most once.

    Runs LARS on the unrolled dictionary; activating any shift of an atom
    blocks the atom's other shifts, and deactivating it unblocks them.

    Parameters
    ----------
    signal : ndarray, shape (N,)
    dictionary : Dictionary
    shifts : ShiftSet
    lam : float
    context : CodingContext, optional
        Reuse the unrolled dictionary across calls.
    correlations : ndarray, shape (K * S,), optional
        Precomputed initial correlations.

    Returns
    -------
    SparseCode, SolverTrace
    """
    if context is None:
        context = CodingContext(dictionary, shifts)
    x = np.asarray(signal, dtype=float)
    if x.shape != (context.n_samples,):
        raise ValueError(f"signal length {x.shape} does not match {context.n_samples}")
    if correlations is None:
        correlations = context.correlations(x[None, :])[0]
    S = shifts.size
    active, beta, trace = _solve(
        np.asarray(correlations, dtype=float),
        context.gram,
        float(lam),
        float(x @ x),
        S,
        dictionary.n_atoms if lam == 0 else None,
    )
    nz = beta != 0.0
    active, beta = active[nz], beta[nz]
    code = SparseCode(active // S, np.asarray(shifts.shifts, dtype=int)[active % S], beta)
    return code, trace


def sparse_code_batch(signals, dictionary, shifts, lam, n_jobs=1):
    """Code every row of ``signals``; output does not depend on ``n_jobs``."""
    signals = np.atleast_2d(np.asarray(signals, dtype=float))
    ctx = CodingContext(dictionary, shifts)
    corr = ctx.correlations(signals)

    def one(j):
        return jitter_sparse_code(signals[j], dictionary, shifts, lam, ctx, corr[j])

    if n_jobs == 1 or signals.shape[0] < 2:
        results = [one(j) for j in range(signals.shape[0])]
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(one, range(signals.shape[0])))
    return [r[0] for r in results], [r[1] for r in results]


def lasso_code_batch(signals, dictionary: Dictionary, lam):
    """Plain Lasso codes over the unshifted atoms, as SparseCode objects.

    Same arithmetic as :func:`lars_lasso` called once per signal.
    """
    signals = np.atleast_2d(np.asarray(signals, dtype=float))
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    cols = np.ascontiguousarray(dictionary.atoms)
    G = _gram(cols)
    max_steps = cols.shape[0] if lam == 0 else None
    codes = []
    for x in signals:
        active, beta, _ = _solve(cols @ x, G, float(lam), float(x @ x), 1, max_steps)
        coef = np.zeros(cols.shape[0])
        coef[active] = beta
        nz = np.flatnonzero(coef)
        codes.append(SparseCode(nz, np.zeros(nz.size, dtype=int), coef[nz]))
    return codes
