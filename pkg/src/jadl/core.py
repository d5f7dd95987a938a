"""Shift operators, dictionaries and sparse codes.

Signals are plain 1-D float arrays of length ``n_samples``. Batches of
signals are 2-D arrays of shape ``(n_signals, n_samples)``.

Two shift modes are supported:

``circular``
    Atoms live on the signal domain (length N) and a shift by ``n``
    delays the atom with wraparound: ``out[i] = atom[(i - n) % N]``.

``extended``
    Atoms live on a larger domain of ``N + span`` samples, where ``span``
    is the distance between the smallest and largest allowed shift. A
    shift by ``n`` reads the length-N window starting at sample
    ``n + span // 2``, so every shift gives a full-length signal and no
    sample wraps around. Note the window moves *forward* in the atom as
    ``n`` grows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

MODES = ("circular", "extended")

# Above this many shifts, correlations go through the FFT.
FFT_THRESHOLD = 40

UNIT_NORM_TOL = 1e-9


class ShiftDomainError(ValueError):
    """A shift lies outside the range allowed by its shift set or signal."""


def _check_mode(mode):
    if mode not in MODES:
        raise ValueError(f"unknown shift mode {mode!r}, expected one of {MODES}")


@dataclass(frozen=True)
class ShiftSet:
    """Ordered, symmetric set of integer sample shifts.

    Parameters
    ----------
    shifts : tuple of int
        Sorted, distinct, symmetric around zero.
    mode : {'circular', 'extended'}
    stride : int
        Spacing between consecutive shifts (informational; ``symmetric``
        uses it to build the set).
    """

    shifts: tuple[int, ...]
    mode: str = "circular"
    stride: int = 1

    def __post_init__(self):
        _check_mode(self.mode)
        shifts = tuple(int(n) for n in self.shifts)
        object.__setattr__(self, "shifts", shifts)
        if len(shifts) == 0:
            raise ValueError("a shift set needs at least one shift")
        if self.stride < 1:
            raise ValueError("stride must be a positive integer")
        if list(shifts) != sorted(set(shifts)):
            raise ValueError("shifts must be sorted ascending and distinct")
        if shifts != tuple(-n for n in reversed(shifts)):
            raise ValueError("shifts must be symmetric around 0")

    @classmethod
    def symmetric(cls, max_shift, stride=1, mode="circular"):
        """All multiples of ``stride`` in ``[-max_shift, max_shift]``."""
        if max_shift < 0:
            raise ValueError("max_shift must be non-negative")
        if stride < 1:
            raise ValueError("stride must be a positive integer")
        m = int(max_shift) // int(stride)
        shifts = tuple(k * int(stride) for k in range(-m, m + 1))
        return cls(shifts, mode=mode, stride=int(stride))

    @classmethod
    def from_seconds(cls, max_seconds, sample_rate, stride=1, mode="circular"):
        """Shift set covering ``+-max_seconds``, rounded to the nearest sample."""
        max_shift = int(np.floor(max_seconds * sample_rate + 0.5))
        return cls.symmetric(max_shift, stride=stride, mode=mode)

    @classmethod
    def identity(cls, mode="circular"):
        """The single zero shift; learning then reduces to plain DL."""
        return cls((0,), mode=mode)

    @property
    def size(self) -> int:
        return len(self.shifts)

    def __len__(self):
        return len(self.shifts)

    def __iter__(self):
        return iter(self.shifts)

    def __contains__(self, n):
        return int(n) in self._positions

    @property
    def max_shift(self) -> int:
        return self.shifts[-1]

    @property
    def span(self) -> int:
        """Distance between the extreme shifts."""
        return self.shifts[-1] - self.shifts[0]

    @property
    def _positions(self):
        # cached lazily; the dataclass is frozen
        pos = self.__dict__.get("_pos")
        if pos is None:
            pos = {n: s for s, n in enumerate(self.shifts)}
            object.__setattr__(self, "_pos", pos)
        return pos

    def index(self, n) -> int:
        """Position of shift ``n`` in the set."""
        try:
            return self._positions[int(n)]
        except KeyError:
            raise ShiftDomainError(f"shift {n} is not in the shift set") from None

    def atom_length(self, n_samples) -> int:
        """Atom length for signals of ``n_samples`` samples in this mode."""
        if self.mode == "extended":
            return n_samples + self.span
        return n_samples

    def check_signal_length(self, n_samples):
        if n_samples <= 0:
            raise ValueError("signals must have at least one sample")
        if 2 * self.max_shift > n_samples:
            raise ShiftDomainError(
                f"max shift {self.max_shift} exceeds half the signal length {n_samples}"
            )


@dataclass
class Dictionary:
    """K unit-norm atoms stored as rows.

    In extended mode the atoms are longer than the signals; see the module
    docstring.
    """

    atoms: np.ndarray
    mode: str = "circular"

    def __post_init__(self):
        _check_mode(self.mode)
        atoms = np.array(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[None, :]
        if atoms.ndim != 2 or atoms.shape[0] < 1 or atoms.shape[1] < 1:
            raise ValueError("atoms must be a non-empty (K, L) array")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("atoms contain non-finite values")
        norms = np.linalg.norm(atoms, axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_NORM_TOL)
        if bad.size:
            raise ValueError(f"atoms {bad.tolist()} do not have unit l2 norm")
        self.atoms = atoms

    @classmethod
    def from_raw(cls, atoms, mode="circular"):
        """Normalize rows of ``atoms`` and wrap them."""
        atoms = np.array(atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[None, :]
        return cls(atoms / np.linalg.norm(atoms, axis=1, keepdims=True), mode=mode)

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[0]

    @property
    def atom_length(self) -> int:
        return self.atoms.shape[1]

    def __len__(self):
        return self.n_atoms

    def signal_length(self, shifts: ShiftSet) -> int:
        """Length of the signals this dictionary encodes under ``shifts``."""
        if shifts.mode != self.mode:
            raise ValueError(
                f"dictionary mode {self.mode!r} does not match shift mode {shifts.mode!r}"
            )
        if self.mode == "extended":
            return self.atom_length - shifts.span
        return self.atom_length

    def copy(self):
        return Dictionary(self.atoms.copy(), mode=self.mode)


@dataclass
class SparseCode:
    """Code of one signal: at most one ``(atom, shift, coefficient)`` per atom.

    Entries are kept sorted by atom index.
    """

    atoms: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    shifts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    coefs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=int).ravel()
        shifts = np.asarray(self.shifts, dtype=int).ravel()
        coefs = np.asarray(self.coefs, dtype=float).ravel()
        if not (atoms.size == shifts.size == coefs.size):
            raise ValueError("atoms, shifts and coefs must have equal length")
        if np.unique(atoms).size != atoms.size:
            raise ValueError("a sparse code may use each atom at most once")
        order = np.argsort(atoms, kind="stable")
        self.atoms, self.shifts, self.coefs = atoms[order], shifts[order], coefs[order]

    @classmethod
    def from_entries(cls, entries: Sequence[tuple[int, int, float]]):
        if not entries:
            return cls()
        atoms, shifts, coefs = zip(*entries)
        return cls(np.array(atoms), np.array(shifts), np.array(coefs))

    def __iter__(self) -> Iterator[tuple[int, int, float]]:
        for i, n, a in zip(self.atoms, self.shifts, self.coefs):
            yield int(i), int(n), float(a)

    def __len__(self):
        return self.atoms.size

    def entries(self):
        return list(self)

    def l1(self) -> float:
        return float(np.abs(self.coefs).sum())

    def validate(self, shifts: ShiftSet, n_atoms=None):
        for i, n, _ in self:
            if n not in shifts:
                raise ShiftDomainError(f"code uses shift {n} outside the shift set")
            if n_atoms is not None and not 0 <= i < n_atoms:
                raise ValueError(f"code uses atom {i} outside the dictionary")

    def lookup(self, atom):
        """``(shift, coef)`` for ``atom``, or None if the atom is unused."""
        hit = np.flatnonzero(self.atoms == atom)
        if hit.size == 0:
            return None
        k = hit[0]
        return int(self.shifts[k]), float(self.coefs[k])


def _window_start(atom_len, n, n_samples):
    half = (atom_len - n_samples) // 2
    if (atom_len - n_samples) % 2:
        raise ShiftDomainError("extended atoms must exceed the signal by an even span")
    if abs(n) > half:
        raise ShiftDomainError(f"shift {n} exceeds the extended margin {half}")
    return n + half


def apply_shift(atom, n, mode="circular", n_samples=None):
    """Shift ``atom`` by ``n`` samples and return a signal-length vector.

    ``n_samples`` is required in extended mode and defaults to the atom
    length in circular mode.
    """
    _check_mode(mode)
    atom = np.asarray(atom, dtype=float)
    n = int(n)
    if mode == "circular":
        N = atom.size if n_samples is None else int(n_samples)
        if N != atom.size:
            raise ValueError("circular atoms must have the signal length")
        if 2 * abs(n) > N:
            raise ShiftDomainError(f"shift {n} exceeds half the signal length {N}")
        return np.roll(atom, n)
    if n_samples is None:
        raise ValueError("extended mode needs n_samples")
    start = _window_start(atom.size, n, int(n_samples))
    return atom[start : start + int(n_samples)].copy()


def adjoint_shift(vec, n, mode="circular", atom_length=None):
    """Adjoint of :func:`apply_shift`, mapping a signal back to the atom domain.

    For circular shifts this is the inverse shift. In extended mode ``vec``
    is scattered into the window of a zero vector of ``atom_length``.
    """
    _check_mode(mode)
    vec = np.asarray(vec, dtype=float)
    n = int(n)
    N = vec.size
    if mode == "circular":
        if atom_length is not None and atom_length != N:
            raise ValueError("circular atoms must have the signal length")
        if 2 * abs(n) > N:
            raise ShiftDomainError(f"shift {n} exceeds half the signal length {N}")
        return np.roll(vec, -n)
    if atom_length is None:
        raise ValueError("extended mode needs atom_length")
    start = _window_start(int(atom_length), n, N)
    out = np.zeros(int(atom_length))
    out[start : start + N] = vec
    return out


def shift_indices(shifts: ShiftSet, n_samples):
    """Gather indices ``idx`` with ``apply_shift(atom, n_s)[t] == atom[idx[s, t]]``."""
    t = np.arange(n_samples)
    ns = np.asarray(shifts.shifts)[:, None]
    if shifts.mode == "circular":
        return (t[None, :] - ns) % n_samples
    return t[None, :] + ns + shifts.span // 2


def unroll(dictionary: Dictionary, shifts: ShiftSet) -> np.ndarray:
    """Matrix of every shifted atom, shape ``(N, K * S)``.

    Column ``i * S + s`` holds ``apply_shift(atom_i, shifts.shifts[s])``.
    """
    N = dictionary.signal_length(shifts)
    shifts.check_signal_length(N)
    idx = shift_indices(shifts, N)
    cols = dictionary.atoms[:, idx]  # (K, S, N)
    return np.ascontiguousarray(cols.reshape(-1, N).T)


def _fft_correlate(signals, atoms, shifts: ShiftSet):
    """FFT correlations, shape ``(M, K, S)``."""
    M, N = signals.shape
    L = atoms.shape[1]
    nfft = L
    X = np.fft.rfft(signals, n=nfft)
    A = np.fft.rfft(atoms, n=nfft)
    ns = np.asarray(shifts.shifts)
    if shifts.mode == "circular":
        # irfft(X * conj(A))[n] = sum_i x[i] a[i - n]
        full = np.fft.irfft(X[:, None, :] * np.conj(A)[None, :, :], n=nfft)
        return full[:, :, ns % N]
    # irfft(conj(X) * A)[k] = sum_i x[i] a[i + k]
    full = np.fft.irfft(np.conj(X)[:, None, :] * A[None, :, :], n=nfft)
    return full[:, :, ns + shifts.span // 2]


def correlate_batch(signals, atoms, shifts: ShiftSet, method="auto"):
    """Correlations of every signal with every shifted atom.

    Parameters
    ----------
    signals : ndarray, shape (M, N)
    atoms : ndarray, shape (K, L)
    shifts : ShiftSet
    method : {'auto', 'fft', 'direct'}
        ``auto`` uses the FFT when the set has more than ``FFT_THRESHOLD``
        shifts.

    Returns
    -------
    ndarray, shape (M, K, S)
        ``out[j, i, s] = <signals[j], apply_shift(atoms[i], n_s)>``.
    """
    signals = np.atleast_2d(np.asarray(signals, dtype=float))
    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    M, N = signals.shape
    if atoms.shape[1] != shifts.atom_length(N):
        raise ValueError(
            f"atom length {atoms.shape[1]} inconsistent with signal length {N} "
            f"in {shifts.mode} mode"
        )
    shifts.check_signal_length(N)
    if method == "auto":
        method = "fft" if shifts.size > FFT_THRESHOLD else "direct"
    if method == "fft":
        return _fft_correlate(signals, atoms, shifts)
    if method != "direct":
        raise ValueError(f"unknown correlation method {method!r}")
    K, S = atoms.shape[0], shifts.size
    cols = atoms[:, shift_indices(shifts, N)].reshape(K * S, N)
    return (signals @ cols.T).reshape(M, K, S)


def correlate_all_shifts(signal, atom, shifts: ShiftSet, method="auto"):
    """``<signal, apply_shift(atom, n)>`` for every shift ``n``; length S."""
    return correlate_batch(
        np.asarray(signal, dtype=float)[None, :],
        np.asarray(atom, dtype=float)[None, :],
        shifts,
        method=method,
    )[0, 0]


def reconstruct(code: SparseCode, dictionary: Dictionary, shifts: ShiftSet):
    """Signal ``sum_i a_i * shift(atom_i, n_i)`` encoded by ``code``."""
    N = dictionary.signal_length(shifts)
    out = np.zeros(N)
    for i, n, a in code:
        out += a * apply_shift(dictionary.atoms[i], n, dictionary.mode, N)
    return out


def reconstruct_all(codes, dictionary: Dictionary, shifts: ShiftSet):
    """Stack of :func:`reconstruct` over a list of codes, shape ``(M, N)``."""
    N = dictionary.signal_length(shifts)
    out = np.zeros((len(codes), N))
    for j, code in enumerate(codes):
        out[j] = reconstruct(code, dictionary, shifts)
    return out
