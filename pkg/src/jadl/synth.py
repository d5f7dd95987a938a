"""Synthetic multi-trial benchmark: jittered spike and oscillations plus noise."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .core import Dictionary, ShiftSet, SparseCode, shift_indices


@dataclass
class SynthConfig:
    n_samples: int = 512
    sample_rate: float = 128.0
    n_signals: int = 200
    coef_mean: float = 1.0
    coef_std: float = 0.3
    shift_std_s: float = 0.2
    max_shift_s: float = 0.6
    n_events_max: int = 3
    # clean energy / noise energy averaged over signals; None disables noise
    snr: float | None = 0.790
    seed: int = 0
    # true atoms
    spike_center_s: float = 2.0
    spike_width: float = 1.25  # Gaussian std, samples
    osc_freqs: tuple = (7.0, 11.0)
    osc_centers_s: tuple = (1.4, 2.6)
    osc_width_s: float = 0.2  # Gaussian window std
    # spurious events
    event_amp: tuple = (0.05, 0.2)
    event_freq: tuple = (2.0, 20.0)
    event_support_s: tuple = (0.2, 1.0)

    def __post_init__(self):
        for name in ("n_samples", "sample_rate", "n_signals", "coef_std", "shift_std_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.n_events_max < 0:
            raise ValueError("n_events_max must be non-negative")
        if self.snr is not None and not self.snr > 0:
            raise ValueError("snr must be positive (or None for no noise)")
        if len(self.osc_freqs) != len(self.osc_centers_s):
            raise ValueError("need one center per oscillation frequency")
        self.osc_freqs = tuple(float(f) for f in self.osc_freqs)
        self.osc_centers_s = tuple(float(c) for c in self.osc_centers_s)
        self.event_amp = tuple(self.event_amp)
        self.event_freq = tuple(self.event_freq)
        self.event_support_s = tuple(self.event_support_s)

    @property
    def n_atoms(self) -> int:
        return 1 + len(self.osc_freqs)

    def shift_set(self, mode="circular", stride=1) -> ShiftSet:
        return ShiftSet.from_seconds(self.max_shift_s, self.sample_rate, stride, mode)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown synth config fields: {sorted(unknown)}")
        return cls(**known)


@dataclass
class GroundTruth:
    config: SynthConfig
    dictionary: Dictionary
    coefs: np.ndarray  # (M, K)
    shifts: np.ndarray  # (M, K) samples
    clean: np.ndarray  # (M, N)
    events: np.ndarray  # (M, N)
    noisy: np.ndarray  # (M, N)
    noise_scale: float = 0.0
    extras: dict = field(default_factory=dict)

    def codes(self):
        K = self.coefs.shape[1]
        return [SparseCode(np.arange(K), s, a) for a, s in zip(self.coefs, self.shifts)]

    def measured_snr(self) -> float:
        noise = self.noisy - self.clean - self.events
        return float(np.mean(np.sum(self.clean**2, 1) / np.sum(noise**2, 1)))


def _gabor(t, center, width, freq, phase=0.0):
    return np.exp(-0.5 * ((t - center) / width) ** 2) * np.cos(2 * np.pi * freq * (t - center) + phase)


def make_true_dictionary(config: SynthConfig) -> Dictionary:
    """Spike followed by Gaussian-windowed sinusoids, all unit norm."""
    N, fs = config.n_samples, config.sample_rate
    t = np.arange(N) / fs
    idx = np.arange(N)
    spike = np.exp(-0.5 * ((idx - config.spike_center_s * fs) / config.spike_width) ** 2)
    atoms = [spike]
    for f, c in zip(config.osc_freqs, config.osc_centers_s):
        atoms.append(_gabor(t, c, config.osc_width_s, f))
    return Dictionary.from_raw(np.array(atoms), "circular")


def synthesize(coefs, shifts, dictionary: Dictionary):
    """Clean signals ``sum_i a_ij shift(d_i, n_ij)`` (circular shifts)."""
    M, K = coefs.shape
    N = dictionary.atom_length
    out = np.zeros((M, N))
    for i in range(K):
        ss = ShiftSet.symmetric(int(np.max(np.abs(shifts[:, i]))) if M else 0)
        idx = shift_indices(ss, N)
        out += coefs[:, i][:, None] * dictionary.atoms[i][idx[shifts[:, i] + ss.max_shift]]
    return out


def _draw_shifts(rng, config, size):
    max_n = config.shift_set().max_shift
    std = config.shift_std_s * config.sample_rate
    out = np.empty(size)
    todo = np.ones(size, dtype=bool)
    while todo.any():
        draw = rng.normal(0.0, std, size=int(todo.sum()))
        out[todo] = draw
        todo[todo] = np.abs(np.rint(draw)) > max_n
    return np.rint(out).astype(int)


def spurious_events(rng, config: SynthConfig):
    """0..``n_events_max`` random Gaussian-windowed oscillations per signal."""
    M, N, fs = config.n_signals, config.n_samples, config.sample_rate
    t = np.arange(N) / fs
    out = np.zeros((M, N))
    counts = rng.integers(0, config.n_events_max + 1, size=M)
    for j in range(M):
        for _ in range(counts[j]):
            amp = rng.uniform(*config.event_amp)
            freq = rng.uniform(*config.event_freq)
            support = rng.uniform(*config.event_support_s)
            center = rng.uniform(0.0, N / fs)
            phase = rng.uniform(0.0, 2 * np.pi)
            # support is the +-2 std extent of the window
            out[j] += amp * _gabor(t, center, support / 4.0, freq, phase)
    return out, counts


def generate(config: SynthConfig) -> GroundTruth:
    """Draw a full benchmark dataset; identical configs give identical data."""
    rng = np.random.default_rng(config.seed)
    D = make_true_dictionary(config)
    config.shift_set().check_signal_length(config.n_samples)
    M, K = config.n_signals, D.n_atoms
    coefs = rng.normal(config.coef_mean, config.coef_std, size=(M, K))
    shifts = _draw_shifts(rng, config, (M, K))
    clean = synthesize(coefs, shifts, D)
    if config.n_events_max > 0:
        events, counts = spurious_events(rng, config)
    else:
        events, counts = np.zeros_like(clean), np.zeros(M, dtype=int)
    noisy = clean + events
    scale = 0.0
    if config.snr is not None:
        z = rng.standard_normal(clean.shape)
        ratio = np.sum(clean**2, 1) / np.sum(z**2, 1)
        scale = float(np.sqrt(np.mean(ratio) / config.snr))
        noisy = noisy + scale * z
    return GroundTruth(
        config=config,
        dictionary=D,
        coefs=coefs,
        shifts=shifts,
        clean=clean,
        events=events,
        noisy=noisy,
        noise_scale=scale,
        extras={"event_counts": counts},
    )
