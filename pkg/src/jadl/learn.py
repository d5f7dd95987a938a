"""Alternating dictionary learning with per-signal atom shifts."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .core import Dictionary, ShiftSet, SparseCode, shift_indices
from .lars import lasso_code_batch, sparse_code_batch

logger = logging.getLogger(__name__)

DEAD_ATOM_NORM = 1e-12


class NumericalError(RuntimeError):
    """Learning produced a non-finite objective."""


@dataclass
class LearnConfig:
    n_atoms: int
    lam: float
    shifts: ShiftSet = field(default_factory=ShiftSet.identity)
    max_iters: int = 200
    tol: float = 1e-6
    seed: int = 0
    init: Dictionary | None = None
    n_jobs: int = 1
    min_iters: int = 1  # run at least this many iterations regardless of tol
    # keep a signal's previous code when it beats the fresh one
    keep_better_codes: bool = True

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be at least 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.min_iters < 1:
            raise ValueError("min_iters must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")


@dataclass
class LearnResult:
    dictionary: Dictionary
    codes: list
    objective_history: list
    iterations_run: int
    converged: bool = False
    reinitialized: list = field(default_factory=list)  # (iteration, atom) pairs
    wall_time: float = 0.0


def init_dictionary(config: LearnConfig, n_samples: int) -> Dictionary:
    """Random Gaussian atoms, or validate the dictionary given in ``config.init``."""
    L = config.shifts.atom_length(n_samples)
    if config.init is not None:
        d = config.init
        if not isinstance(d, Dictionary):
            d = Dictionary(np.asarray(d), mode=config.shifts.mode)
        if d.n_atoms != config.n_atoms or d.atom_length != L or d.mode != config.shifts.mode:
            raise ValueError(
                f"initial dictionary has shape {d.atoms.shape} ({d.mode}), expected "
                f"({config.n_atoms}, {L}) ({config.shifts.mode})"
            )
        return d.copy()
    rng = np.random.default_rng(config.seed)
    return Dictionary.from_raw(rng.standard_normal((config.n_atoms, L)), config.shifts.mode)


def codes_to_arrays(codes, n_atoms, shifts: ShiftSet):
    """Dense ``(M, K)`` coefficient and shift-position arrays (-1 when unused)."""
    M = len(codes)
    coef = np.zeros((M, n_atoms))
    pos = np.full((M, n_atoms), -1, dtype=int)
    if M == 0:
        return coef, pos
    lengths = np.array([len(c) for c in codes])
    if lengths.sum() == 0:
        return coef, pos
    rows = np.repeat(np.arange(M), lengths)
    atoms = np.concatenate([c.atoms for c in codes])
    ns = np.concatenate([c.shifts for c in codes])
    table = np.asarray(shifts.shifts)
    where = np.searchsorted(table, ns)
    if np.any(where >= table.size) or np.any(table[np.minimum(where, table.size - 1)] != ns):
        raise ValueError("codes use shifts outside the shift set")
    if np.any((atoms < 0) | (atoms >= n_atoms)):
        raise ValueError("codes use atoms outside the dictionary")
    coef[rows, atoms] = np.concatenate([c.coefs for c in codes])
    pos[rows, atoms] = where
    return coef, pos


def residuals(signals, codes, dictionary: Dictionary, shifts: ShiftSet):
    """``x_j - reconstruction_j`` for every signal, shape ``(M, N)``."""
    signals = np.atleast_2d(np.asarray(signals, dtype=float))
    N = signals.shape[1]
    idx = shift_indices(shifts, N)
    coef, pos = codes_to_arrays(codes, dictionary.n_atoms, shifts)
    R = signals.copy()
    for k in range(dictionary.n_atoms):
        J = np.flatnonzero(pos[:, k] >= 0)
        if J.size:
            R[J] -= coef[J, k][:, None] * dictionary.atoms[k][idx[pos[J, k]]]
    return R


def code_objectives(signals, codes, dictionary, shifts, lam):
    """Per-signal ``0.5 * ||x - rec||^2 + lam * ||a||_1``."""
    R = residuals(signals, codes, dictionary, shifts)
    l1 = np.array([c.l1() for c in codes])
    return 0.5 * np.einsum("ij,ij->i", R, R) + lam * l1


def objective(signals, codes, dictionary, shifts, lam) -> float:
    """Learning objective summed over signals."""
    return float(code_objectives(signals, codes, dictionary, shifts, lam).sum())


def update_dictionary(signals, codes, dictionary: Dictionary, shifts: ShiftSet, rng=None):
    """One block-coordinate sweep over the atoms with the codes held fixed.

    Each atom is replaced by the normalized least-squares fit to the
    signals' residuals without it, mapped back through the adjoint of the
    shift used in each signal. In extended mode the fit is divided
    samplewise by the sum of squared coefficients of the windows covering
    that sample; samples covered by no window are set to zero.

    Returns
    -------
    Dictionary
        The updated dictionary.
    list of int
        Atoms that were unused (or cancelled out) and got re-drawn at random.
    """
    signals = np.atleast_2d(np.asarray(signals, dtype=float))
    if len(codes) != signals.shape[0]:
        raise ValueError("need one code per signal")
    R = residuals(signals, codes, dictionary, shifts)
    D, dead, _ = _sweep(codes, dictionary, shifts, R, rng)
    return D, dead


def _sweep(codes, dictionary, shifts, R, rng=None):
    """Atom sweep that updates the residual matrix ``R`` in place."""
    if rng is None:
        rng = np.random.default_rng(0)
    M, N = R.shape
    atoms = dictionary.atoms.copy()
    K, L = atoms.shape
    idx = shift_indices(shifts, N)
    coef, pos = codes_to_arrays(codes, K, shifts)
    extended = shifts.mode == "extended"
    dead = []
    for k in range(K):
        J = np.flatnonzero(pos[:, k] >= 0)
        if J.size == 0:
            dead.append(k)
            atoms[k] = _random_atom(rng, L)
            continue
        a = coef[J, k]
        win = idx[pos[J, k]]  # (|J|, N) atom-domain indices
        r_ex = R[J] + a[:, None] * atoms[k][win]
        upd = np.bincount(win.ravel(), weights=(a[:, None] * r_ex).ravel(), minlength=L)
        if extended:
            cover = np.bincount(win.ravel(), weights=np.repeat(a * a, N), minlength=L)
            upd = np.divide(upd, cover, out=np.zeros(L), where=cover > 0)
        norm = np.linalg.norm(upd)
        if norm < DEAD_ATOM_NORM:
            dead.append(k)
            atoms[k] = _random_atom(rng, L)
            # codes still reference atom k; keep residuals consistent
            R[J] = r_ex - a[:, None] * atoms[k][win]
            continue
        new = upd / norm
        R_new = r_ex - a[:, None] * new[win]
        if extended and np.sum(R_new * R_new) > np.sum(R[J] * R[J]):
            # normalizing the rescaled fit is not exact here; never go uphill
            continue
        atoms[k] = new
        R[J] = R_new
    if dead:
        logger.debug("re-initialized atoms %s", dead)
    return Dictionary(atoms, mode=dictionary.mode), dead, R


def _random_atom(rng, L):
    v = rng.standard_normal(L)
    return v / np.linalg.norm(v)


def _per_signal(R, codes, lam):
    l1 = np.array([c.l1() for c in codes])
    return 0.5 * np.einsum("ij,ij->i", R, R) + lam * l1


def _run(signals, config: LearnConfig, coder, monitor=None):
    signals = np.atleast_2d(np.asarray(signals, dtype=float))
    if signals.shape[0] < 1:
        raise ValueError("need at least one signal")
    if not np.all(np.isfinite(signals)):
        raise ValueError("signals contain non-finite values")
    M, N = signals.shape
    shifts = config.shifts
    shifts.check_signal_length(N)
    D = init_dictionary(config, N)
    # separate stream for dead-atom re-draws so init stays reproducible
    rng = np.random.default_rng([config.seed, 1])
    history = []
    reinit = []
    codes = None
    R = None  # residuals of `codes` under `D`, carried between iterations
    obj_j = None
    converged = False
    t0 = time.perf_counter()
    it = 0
    for it in range(1, config.max_iters + 1):
        new_codes = coder(signals, D)
        R_new = residuals(signals, new_codes, D, shifts)
        if config.keep_better_codes and codes is not None:
            new_j = _per_signal(R_new, new_codes, config.lam)
            keep = obj_j < new_j
            new_codes = [o if k else n for n, o, k in zip(new_codes, codes, keep)]
            R_new[keep] = R[keep]
        if monitor is not None:
            monitor("code", signals, codes, new_codes, D)
        codes, R = new_codes, R_new
        D_new, dead, R = _sweep(codes, D, shifts, R, rng)
        if monitor is not None:
            monitor("update", signals, codes, D, D_new)
        D = D_new
        reinit.extend((it, k) for k in dead)
        obj_j = _per_signal(R, codes, config.lam)
        obj = _total(obj_j)
        if not np.isfinite(obj):
            raise NumericalError(f"objective became non-finite at iteration {it}")
        history.append(obj)
        if len(history) > 1 and it >= config.min_iters:
            prev = history[-2]
            if abs(obj - prev) <= config.tol * abs(prev):
                converged = True
                break
    return LearnResult(
        dictionary=D,
        codes=codes,
        objective_history=history,
        iterations_run=it,
        converged=converged,
        reinitialized=reinit,
        wall_time=time.perf_counter() - t0,
    )


def _total(per_signal) -> float:
    return float(np.sum(per_signal))


def learn(signals, config: LearnConfig, monitor=None) -> LearnResult:
    """Learn a shift-adaptive dictionary by alternating coding and atom updates.

    Parameters
    ----------
    signals : ndarray, shape (M, N)
    config : LearnConfig
    monitor : callable, optional
        Called as ``monitor(stage, signals, codes_or_old, new, dictionary)``
        after each coding (``stage='code'``) and each update
        (``stage='update'``); used by tests to check per-step descent.
    """

    def coder(X, D):
        codes, _ = sparse_code_batch(X, D, config.shifts, config.lam, n_jobs=config.n_jobs)
        return codes

    return _run(signals, config, coder, monitor)


def learn_plain(signals, config: LearnConfig, monitor=None) -> LearnResult:
    """Ordinary dictionary learning: Lasso codes over unshifted atoms.

    Ignores ``config.shifts`` apart from its mode and always uses the zero
    shift only.
    """
    plain = LearnConfig(
        n_atoms=config.n_atoms,
        lam=config.lam,
        shifts=ShiftSet.identity(config.shifts.mode),
        max_iters=config.max_iters,
        tol=config.tol,
        seed=config.seed,
        init=config.init,
        n_jobs=config.n_jobs,
        min_iters=config.min_iters,
        keep_better_codes=config.keep_better_codes,
    )

    def coder(X, D):
        return lasso_code_batch(X, D, config.lam)

    return _run(signals, plain, coder, monitor)


def encode(signals, dictionary: Dictionary, shifts: ShiftSet, lam, n_jobs=1):
    """Codes of ``signals`` over a fixed dictionary."""
    codes, _ = sparse_code_batch(signals, dictionary, shifts, lam, n_jobs=n_jobs)
    return codes


__all__ = [
    "LearnConfig",
    "LearnResult",
    "NumericalError",
    "SparseCode",
    "codes_to_arrays",
    "encode",
    "init_dictionary",
    "learn",
    "learn_plain",
    "objective",
    "residuals",
    "update_dictionary",
]
