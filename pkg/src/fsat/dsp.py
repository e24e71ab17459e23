"""STFT analysis/synthesis, its adjoint, band masks and brickwall filters.

Arrays carry optional leading batch dimensions throughout; spectrograms are
laid out ``(..., n_frames, n_bins)``.

Scaling: frames are divided by sqrt(sum(window^2)), so white noise of
variance s^2 has E|X|^2 = s^2 in every bin and magnitude perturbations are in
the same units as per-bin signal RMS.

Framing: the signal is zero-padded by ``n_fft - hop`` samples on both sides
so every real sample is covered by exactly ``n_fft / hop`` frames. Without
the front pad the first sample only sees ``window[0] == 0`` and cannot be
reconstructed.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .audio_io import DEFAULT_SAMPLE_RATE, Waveform
from .errors import ConfigError, DomainError, SizeError


@dataclass(frozen=True)
class StftConfig:
    n_fft: int = 512
    hop: int = 128
    window: str = "hann"
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        n, h = self.n_fft, self.hop
        if n < 2 or n & (n - 1):
            raise ConfigError(f"n_fft must be a power of two, got {n}")
        if not 0 < h <= n or n % h:
            raise ConfigError(f"hop must divide n_fft and lie in (0, n_fft], got {h}")
        if self.window != "hann":
            raise ConfigError(f"unsupported window {self.window!r}")
        if self.sample_rate_hz <= 0:
            raise ConfigError("sample rate must be positive")

    @property
    def n_bins(self):
        return self.n_fft // 2 + 1

    @property
    def pad(self):
        return self.n_fft - self.hop

    def n_frames(self, length):
        return -(-(length + self.pad) // self.hop)

    def padded_length(self, length):
        return (self.n_frames(length) - 1) * self.hop + self.n_fft

    @property
    def bin_hz(self):
        return self.sample_rate_hz / self.n_fft


@lru_cache(maxsize=16)
def _hann(n):
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)
    w.flags.writeable = False
    return w


@lru_cache(maxsize=16)
def _scale(n):
    return 1.0 / math.sqrt(float(np.sum(_hann(n) ** 2)))


@lru_cache(maxsize=64)
def _inverse_window_sum(cfg: StftConfig, length):
    """1 / sum_t window^2 over the cropped output region."""
    w2 = np.broadcast_to(_hann(cfg.n_fft) ** 2, (cfg.n_frames(length), cfg.n_fft))
    wsum = kernels.overlap_add_np(np.ascontiguousarray(w2), cfg.hop)[cfg.pad:cfg.pad + length]
    if wsum.min() <= 1e-8 * wsum.max():
        raise ConfigError(f"window-square sum vanishes for n_fft={cfg.n_fft}, hop={cfg.hop}")
    inv = 1.0 / wsum
    inv.flags.writeable = False
    return inv


@lru_cache(maxsize=16)
def _adjoint_weights(n_fft):
    c = np.full(n_fft // 2 + 1, 2.0 / n_fft)
    c[0] = c[-1] = 1.0 / n_fft
    c.flags.writeable = False
    return c


def _frames(x, cfg: StftConfig):
    length = x.shape[-1]
    n_frames = cfg.n_frames(length)
    padded = np.zeros((*x.shape[:-1], cfg.padded_length(length)), dtype=x.dtype)
    padded[..., cfg.pad:cfg.pad + length] = x
    view = np.lib.stride_tricks.sliding_window_view(padded, cfg.n_fft, axis=-1)
    return view[..., ::cfg.hop, :][..., :n_frames, :]


def stft_array(x, cfg: StftConfig):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < cfg.n_fft:
        raise SizeError(f"signal of {x.shape[-1]} samples is shorter than one frame ({cfg.n_fft})")
    return np.fft.rfft(_frames(x, cfg) * _hann(cfg.n_fft), axis=-1) * _scale(cfg.n_fft)


def istft_array(spec, cfg: StftConfig, length):
    """Window-square-normalized overlap-add inverse of :func:`stft_array`."""
    spec = np.asarray(spec)
    if spec.shape[-1] != cfg.n_bins:
        raise SizeError(f"expected {cfg.n_bins} bins, got {spec.shape[-1]}")
    if spec.shape[-2] != cfg.n_frames(length):
        raise SizeError(f"expected {cfg.n_frames(length)} frames for length {length}, got {spec.shape[-2]}")
    frames = np.fft.irfft(spec, n=cfg.n_fft, axis=-1) * (_hann(cfg.n_fft) / _scale(cfg.n_fft))
    out = kernels.overlap_add(frames, cfg.hop)
    return out[..., cfg.pad:cfg.pad + length] * _inverse_window_sum(cfg, length)


def istft_adjoint_array(g, cfg: StftConfig):
    """Adjoint of ``V -> istft_array(V, cfg, len(g))`` under ``<A, B> = Re sum conj(A) B``.

    The map is real-linear in V (imaginary parts of the DC and Nyquist bins are
    discarded by the inverse FFT), so the returned G has purely real DC/Nyquist
    entries.
    """
    g = np.asarray(g, dtype=np.float64)
    length = g.shape[-1]
    weighted = g * _inverse_window_sum(cfg, length)
    frames = _frames(weighted, cfg) * (_hann(cfg.n_fft) / _scale(cfg.n_fft))
    return np.fft.rfft(frames, axis=-1) * _adjoint_weights(cfg.n_fft)


# --------------------------------------------------------------------------
# typed wrappers


@dataclass
class ComplexSpectrogram:
    bins: np.ndarray
    cfg: StftConfig
    original_length: int

    def __post_init__(self):
        if self.bins.shape[-1] != self.cfg.n_bins:
            raise SizeError(f"expected {self.cfg.n_bins} bins, got {self.bins.shape[-1]}")

    @property
    def magnitude(self):
        return np.abs(self.bins)

    @property
    def phase(self):
        ph = np.angle(self.bins)
        ph[ph <= -np.pi] = np.pi
        return ph

    @property
    def n_frames(self):
        return self.bins.shape[-2]


def stft(w: Waveform, cfg: StftConfig) -> ComplexSpectrogram:
    samples = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)
    return ComplexSpectrogram(stft_array(samples, cfg), cfg, samples.shape[-1])


def istft(s: ComplexSpectrogram) -> Waveform:
    y = istft_array(s.bins, s.cfg, s.original_length)
    return Waveform(y, s.cfg.sample_rate_hz)


def istft_adjoint(g, cfg: StftConfig, original_length=None):
    g = g.samples if isinstance(g, Waveform) else np.asarray(g, dtype=np.float64)
    if original_length is not None and g.shape[-1] != original_length:
        raise SizeError(f"gradient has {g.shape[-1]} samples, expected {original_length}")
    return istft_adjoint_array(g, cfg)


# --------------------------------------------------------------------------
# bands


@dataclass(frozen=True)
class FrequencyBand:
    f_l: float
    f_u: float

    def __post_init__(self):
        if not 0 <= self.f_l < self.f_u:
            raise DomainError(f"band must satisfy 0 <= f_l < f_u, got [{self.f_l}, {self.f_u}]")

    def __str__(self):
        return f"{self.f_l:g}-{self.f_u:g}Hz"


@dataclass(frozen=True)
class BandMask:
    r_l: int
    r_u: int
    n_bins: int

    def __post_init__(self):
        if not 0 <= self.r_l <= self.r_u <= self.n_bins - 1:
            raise DomainError(f"invalid bin range [{self.r_l}, {self.r_u}] for {self.n_bins} bins")

    @property
    def diag(self):
        d = np.zeros(self.n_bins)
        d[self.r_l:self.r_u + 1] = 1.0
        return d

    @property
    def selector(self):
        s = np.zeros(self.n_bins, dtype=bool)
        s[self.r_l:self.r_u + 1] = True
        return s

    @classmethod
    def full(cls, n_bins):
        return cls(0, n_bins - 1, n_bins)


def _floor_div_exact(num, den):
    """floor(num / den) for finite floats whose product with an integer is exact."""
    q = math.floor(num / den)
    if q * den > num:
        q -= 1
    elif (q + 1) * den <= num:
        q += 1
    return q


def band_to_bins(band: FrequencyBand, cfg: StftConfig) -> BandMask:
    """Map a band in Hz to the inclusive bin range ``[floor(f_l N/sr), ceil(f_u N/sr)]``."""
    nyquist = cfg.sample_rate_hz / 2
    if band.f_u > nyquist:
        raise DomainError(f"band upper edge {band.f_u} Hz exceeds Nyquist {nyquist} Hz")
    # n_fft is a power of two, so f * n_fft is exact in binary floating point
    r_l = _floor_div_exact(band.f_l * cfg.n_fft, cfg.sample_rate_hz)
    r_u = -_floor_div_exact(-band.f_u * cfg.n_fft, cfg.sample_rate_hz)
    return BandMask(r_l, min(r_u, cfg.n_bins - 1), cfg.n_bins)


def apply_band_mask(delta, mask: BandMask):
    delta = np.asarray(delta)
    if delta.shape[-1] != mask.n_bins:
        raise SizeError(f"last axis has {delta.shape[-1]} bins, mask expects {mask.n_bins}")
    return np.where(mask.selector, delta, np.zeros((), dtype=delta.dtype))


def compose_perturbed(s: ComplexSpectrogram, delta_s, clamp_nonneg=True) -> ComplexSpectrogram:
    """Add ``delta_s`` to the magnitude of ``s`` keeping its phase."""
    bins = compose_perturbed_array(s.bins, np.exp(1j * s.phase), s.magnitude, delta_s, clamp_nonneg)
    return ComplexSpectrogram(bins, s.cfg, s.original_length)


def compose_perturbed_array(spec, unit_phase, magnitude, delta_s, clamp_nonneg=True):
    """``(|X| + delta_s) * exp(j angle X)`` written as ``X + delta_s * exp(j angle X)``.

    The additive form leaves bins with ``delta_s == 0`` bit-identical to ``X``.
    """
    delta_s = np.asarray(delta_s)
    if delta_s.shape != spec.shape:
        raise SizeError(f"perturbation shape {delta_s.shape} does not match spectrogram {spec.shape}")
    out = spec + delta_s * unit_phase
    if clamp_nonneg:
        out = np.where(magnitude + delta_s < 0, 0.0, out)
    return out


# --------------------------------------------------------------------------
# brickwall filters


class FilterMode(str, enum.Enum):
    HIGHPASS = "highpass"
    LOWPASS = "lowpass"


def brickwall_filter_array(x, sample_rate_hz, cutoff_hz, mode):
    """Zero FFT bins below (HIGHPASS) or at/above (LOWPASS) the cutoff.

    The two modes partition the spectrum, so their outputs sum to the input.
    """
    mode = FilterMode(mode)
    nyquist = sample_rate_hz / 2
    if not 0 < cutoff_hz < nyquist:
        raise DomainError(f"cutoff {cutoff_hz} Hz must lie in (0, {nyquist})")
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    spec = np.fft.rfft(x, axis=-1)
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate_hz)
    drop = freqs < cutoff_hz if mode is FilterMode.HIGHPASS else freqs >= cutoff_hz
    spec[..., drop] = 0.0
    return np.fft.irfft(spec, n=n, axis=-1)


def brickwall_filter(w: Waveform, cutoff_hz, mode) -> Waveform:
    return Waveform(brickwall_filter_array(w.samples, w.sample_rate_hz, cutoff_hz, mode),
                    w.sample_rate_hz)
