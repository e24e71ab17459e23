"""Audio corruption catalogue and the RandAugment policy built on it."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from . import kernels
from .audio_io import Waveform, resample_to
from .dsp import brickwall_filter_array
from .errors import ConfigError, DomainError


class CorruptionKind(str, enum.Enum):
    GAUSSIAN_NOISE = "gaussian_noise"    # SNR in dB
    LOWPASS = "lowpass"                  # cutoff Hz
    HIGHPASS = "highpass"                # cutoff Hz
    PEAKING_EQ = "peaking_eq"            # gain dB, random center, Q = 1
    SEVEN_BAND_EQ = "seven_band_eq"      # max |gain| dB per band
    ALIASING = "aliasing"                # downsampling factor >= 1
    BIT_CRUSH = "bit_crush"              # bits >= 1
    TANH_DISTORTION = "tanh_distortion"  # drive k > 0
    GAIN = "gain"                        # dB
    GAIN_TRANSITION = "gain_transition"  # end gain in dB
    TIME_MASK = "time_mask"              # masked fraction in [0, 1]
    TIME_STRETCH = "time_stretch"        # playback-rate factor > 0
    AIR_ABSORPTION = "air_absorption"    # distance in meters >= 0
    ROOM_REVERB = "room_reverb"          # RT60 seconds > 0


K = CorruptionKind

SEVEN_BAND_CENTERS_HZ = (60.0, 150.0, 400.0, 1000.0, 2400.0, 4800.0, 7000.0)
AIR_ABSORPTION_COEFF = 0.005
PEAKING_Q = 1.0


def _check_domain(kind, m, sr):
    nyq = sr / 2
    ok = {
        K.LOWPASS: 0 < m < nyq,
        K.HIGHPASS: 0 < m < nyq,
        K.ALIASING: m >= 1,
        K.BIT_CRUSH: m >= 1,
        K.TANH_DISTORTION: m > 0,
        K.TIME_MASK: 0 <= m <= 1,
        K.TIME_STRETCH: m > 0,
        K.AIR_ABSORPTION: m >= 0,
        K.ROOM_REVERB: m > 0,
        K.SEVEN_BAND_EQ: m >= 0,
    }.get(kind, True)
    if not ok or not math.isfinite(m):
        raise DomainError(f"magnitude {m} outside the domain of {kind.value}")


def peaking_coefficients(center_hz, gain_db, q, sample_rate_hz):
    """Second-order peaking EQ (audio-EQ-cookbook form); returns ``(b, a)``."""
    a_lin = 10 ** (gain_db / 40)
    w0 = 2 * math.pi * center_hz / sample_rate_hz
    alpha = math.sin(w0) / (2 * q)
    cw = math.cos(w0)
    b = np.array([1 + alpha * a_lin, -2 * cw, 1 - alpha * a_lin])
    a = np.array([1 + alpha / a_lin, -2 * cw, 1 - alpha / a_lin])
    return b / a[0], a / a[0]


def _fit_length(y, n):
    if y.size >= n:
        return y[:n]
    return np.concatenate([y, np.zeros(n - y.size)])


def _rms(x):
    return float(np.sqrt(np.mean(x * x)))


def corrupt_array(x, sr, kind, magnitude, rng):
    """Array form of :func:`apply_corruption`."""
    kind = CorruptionKind(kind)
    m = float(magnitude)
    _check_domain(kind, m, sr)
    x = np.asarray(x, dtype=np.float64)
    n = x.size

    if kind is K.GAUSSIAN_NOISE:
        sigma = _rms(x) * 10 ** (-m / 20)
        return x + sigma * rng.standard_normal(n)
    if kind is K.LOWPASS:
        return brickwall_filter_array(x, sr, m, "lowpass")
    if kind is K.HIGHPASS:
        return brickwall_filter_array(x, sr, m, "highpass")
    if kind is K.PEAKING_EQ:
        center = math.exp(rng.uniform(math.log(100.0), math.log(0.4 * sr)))
        return kernels.biquad(*peaking_coefficients(center, m, PEAKING_Q, sr), x)
    if kind is K.SEVEN_BAND_EQ:
        y = x
        for fc in SEVEN_BAND_CENTERS_HZ:
            gain = rng.uniform(-m, m)
            if fc < 0.45 * sr:
                y = kernels.biquad(*peaking_coefficients(fc, gain, PEAKING_Q, sr), y)
        return y
    if kind is K.ALIASING:
        low = resample_to(Waveform(x, sr), max(1, int(round(sr / m))), anti_alias=False)
        back = resample_to(low, sr, anti_alias=False)
        return _fit_length(back.samples, n)
    if kind is K.BIT_CRUSH:
        scale = 2.0 ** (int(m) - 1)
        return np.clip(np.round(x * scale), -scale, scale - 1) / scale
    if kind is K.TANH_DISTORTION:
        return np.tanh(m * x)
    if kind is K.GAIN:
        return x * 10 ** (m / 20)
    if kind is K.GAIN_TRANSITION:
        seg = n // 2
        start = int(rng.integers(0, n - seg + 1))
        db = np.empty(n)
        db[:start] = 0.0
        db[start:start + seg] = np.linspace(0.0, m, seg)
        db[start + seg:] = m
        return x * 10 ** (db / 20)
    if kind is K.TIME_MASK:
        seg = int(round(m * n))
        start = int(rng.integers(0, n - seg + 1))
        y = x.copy()
        y[start:start + seg] = 0.0
        return y
    if kind is K.TIME_STRETCH:
        n_new = max(1, int(round(n / m)))
        t = np.arange(n_new) * m
        y = np.interp(t, np.arange(n), x, right=0.0)
        return _fit_length(y, n)
    if kind is K.AIR_ABSORPTION:
        spec = np.fft.rfft(x)
        f_khz = np.fft.rfftfreq(n, 1.0 / sr) / 1000.0
        spec *= np.exp(-AIR_ABSORPTION_COEFF * m * f_khz ** 2)
        return np.fft.irfft(spec, n=n)
    if kind is K.ROOM_REVERB:
        n_ir = max(1, min(n, int(round(m * sr))))
        t = np.arange(n_ir) / sr
        h = rng.standard_normal(n_ir) * np.exp(-6.91 * t / m)
        h /= np.sqrt(np.sum(h * h))
        return fftconvolve(x, h)[:n]
    raise AssertionError(kind)  # pragma: no cover


def apply_corruption(w: Waveform, kind, magnitude, rng=None) -> Waveform:
    rng = np.random.default_rng(0) if rng is None else rng
    y = corrupt_array(w.samples, w.sample_rate_hz, kind, magnitude, rng)
    return Waveform(y, w.sample_rate_hz)


@dataclass(frozen=True)
class CorruptionOp:
    kind: CorruptionKind
    lo: float
    hi: float

    def __post_init__(self):
        object.__setattr__(self, "kind", CorruptionKind(self.kind))
        if not self.lo <= self.hi:
            raise ConfigError(f"{self.kind.value}: range lo={self.lo} > hi={self.hi}")


DEFAULT_RANGES = {
    K.GAUSSIAN_NOISE: (10.0, 40.0),
    K.LOWPASS: (2000.0, 7000.0),
    K.HIGHPASS: (50.0, 500.0),
    K.PEAKING_EQ: (-12.0, 12.0),
    K.SEVEN_BAND_EQ: (0.0, 12.0),
    K.ALIASING: (1.5, 4.0),
    K.BIT_CRUSH: (6.0, 12.0),
    K.TANH_DISTORTION: (1.0, 20.0),
    K.GAIN: (-12.0, 12.0),
    K.GAIN_TRANSITION: (-12.0, 12.0),
    K.TIME_MASK: (0.05, 0.2),
    K.TIME_STRETCH: (0.8, 1.25),
    K.AIR_ABSORPTION: (1.0, 50.0),
    K.ROOM_REVERB: (0.1, 0.8),
}


def default_ops():
    return [CorruptionOp(kind, *rng) for kind, rng in DEFAULT_RANGES.items()]


@dataclass
class AugmentPolicy:
    ops: list = field(default_factory=default_ops)
    n_select: int = 2
    apply_prob: float = 0.5
    seed: int = 0

    def __post_init__(self):
        self.ops = [op if isinstance(op, CorruptionOp) else CorruptionOp(**op) for op in self.ops]
        if not 1 <= self.n_select <= len(self.ops):
            raise ConfigError(f"n_select must lie in [1, {len(self.ops)}]")
        if not 0 <= self.apply_prob <= 1:
            raise ConfigError("apply_prob must lie in [0, 1]")

    def to_dict(self):
        return {
            "ops": [{"kind": op.kind.value, "lo": op.lo, "hi": op.hi} for op in self.ops],
            "n_select": self.n_select,
            "apply_prob": self.apply_prob,
            "seed": self.seed,
        }


def rand_augment_array(x, sr, policy: AugmentPolicy, counter=0, log=None):
    rng = np.random.default_rng([policy.seed, int(counter)])
    picks = rng.choice(len(policy.ops), size=policy.n_select, replace=False)
    y = x
    for idx in picks:
        if rng.random() >= policy.apply_prob:
            continue
        op = policy.ops[idx]
        mag = rng.uniform(op.lo, op.hi)
        y = corrupt_array(y, sr, op.kind, mag, rng)
        if log is not None:
            log.append((op.kind, mag))
    return y


def rand_augment(w: Waveform, policy: AugmentPolicy, counter=0, log=None) -> Waveform:
    """Pick ``n_select`` ops uniformly without replacement, apply each with
    probability ``apply_prob`` at a magnitude drawn uniformly from its range.

    The random stream is keyed by ``(policy.seed, counter)``. Pass a list as
    ``log`` to receive the applied ``(kind, magnitude)`` pairs.
    """
    y = rand_augment_array(w.samples, w.sample_rate_hz, policy, counter, log)
    return Waveform(y if y is not w.samples else y.copy(), w.sample_rate_hz)
