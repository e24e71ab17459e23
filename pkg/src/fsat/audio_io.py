"""WAV I/O, manifests, resampling and the synthetic real/fake corpus."""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import ConfigError, DecodeError, DomainError, ManifestError, WavFormatError

DEFAULT_SAMPLE_RATE = 16000


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ConfigError("waveform must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(self.samples)):
            raise ConfigError("waveform contains non-finite samples")
        if int(self.sample_rate_hz) <= 0:
            raise ConfigError(f"sample rate must be positive, got {self.sample_rate_hz}")
        self.sample_rate_hz = int(self.sample_rate_hz)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self):
        return self.samples.size / self.sample_rate_hz


class Label(enum.IntEnum):
    REAL = 0
    FAKE = 1

    @classmethod
    def parse(cls, text):
        try:
            return cls[str(text).strip().upper()]
        except KeyError:
            raise ValueError(f"unknown label {text!r}") from None


class Split(str, enum.Enum):
    TRAIN = "train"
    TEST = "test"


@dataclass
class LabeledClip:
    waveform: Waveform
    label: Label
    source_id: str
    split: Split


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: Label
    split: Split
    source_id: str


@dataclass
class Manifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    root: Path = Path(".")

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.path in seen:
                raise ManifestError(f"duplicate path {e.path!r}")
            seen.add(e.path)

    def __len__(self):
        return len(self.entries)

    def __eq__(self, other):
        return isinstance(other, Manifest) and self.entries == other.entries

    def split(self, which):
        which = Split(which)
        return Manifest([e for e in self.entries if e.split is which], self.root)

    def resolve(self, entry):
        return Path(self.root) / entry.path

    def load_clips(self, sample_rate_hz=None):
        """Decode every entry. Clips are resampled when ``sample_rate_hz`` is given."""
        clips = []
        for e in self.entries:
            w = read_wav(self.resolve(e))
            if sample_rate_hz is not None and w.sample_rate_hz != sample_rate_hz:
                w = resample_to(w, sample_rate_hz, anti_alias=True)
            clips.append(LabeledClip(w, e.label, e.source_id, e.split))
        return clips


# --------------------------------------------------------------------------
# WAV


def read_wav(path) -> Waveform:
    path = Path(path)
    with warnings.catch_warnings():
        warnings.simplefilter("error", wavfile.WavFileWarning)
        try:
            rate, data = wavfile.read(path)
        except FileNotFoundError:
            raise
        except wavfile.WavFileWarning as exc:
            raise WavFormatError(f"{path}: {exc}") from exc
        except ValueError as exc:
            msg = str(exc)
            if "Unknown wave file format" in msg or "Unsupported" in msg:
                raise DecodeError(f"{path}: {msg}") from exc
            raise WavFormatError(f"{path}: {msg}") from exc
        except Exception as exc:
            raise WavFormatError(f"{path}: {exc}") from exc

    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise DecodeError(f"{path}: unsupported sample type {data.dtype}; need PCM16 or float32")
    if samples.ndim == 2:
        if samples.shape[1] > 2:
            raise DecodeError(f"{path}: {samples.shape[1]} channels; at most 2 supported")
        samples = samples.mean(axis=1)
    if samples.size == 0:
        raise WavFormatError(f"{path}: no samples")
    return Waveform(np.clip(samples, -1.0, 1.0), rate)


def quantize_pcm16(samples):
    """Clamp to [-1, 1] and round to signed 16-bit codes."""
    q = np.round(np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0) * 32768.0)
    return np.clip(q, -32768, 32767).astype(np.int16)


def write_wav(waveform, path):
    if not isinstance(waveform, Waveform):
        waveform = Waveform(waveform)
    path = Path(path)
    wavfile.write(path, waveform.sample_rate_hz, quantize_pcm16(waveform.samples))


# --------------------------------------------------------------------------
# resampling


def _fft_lowpass(x, sample_rate_hz, cutoff_hz):
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(x.size, 1.0 / sample_rate_hz)
    spec[freqs > cutoff_hz] = 0.0
    return np.fft.irfft(spec, n=x.size)


def resample_to(waveform: Waveform, target_hz: int, anti_alias: bool = True) -> Waveform:
    """Linear-interpolation resampler.

    With ``anti_alias`` the signal is first brickwall low-passed at the lower of
    the two Nyquist frequencies; without it, content above the target Nyquist
    folds back (the aliasing corruption relies on this).
    """
    target_hz = int(target_hz)
    if target_hz <= 0:
        raise DomainError(f"target rate must be positive, got {target_hz}")
    src = waveform.sample_rate_hz
    if target_hz == src:
        return Waveform(waveform.samples.copy(), src)
    x = waveform.samples
    if anti_alias:
        x = _fft_lowpass(x, src, min(src, target_hz) / 2.0)
    n_out = max(1, int(round(x.size * target_hz / src)))
    t = np.arange(n_out) * (src / target_hz)
    y = np.interp(t, np.arange(x.size), x)
    return Waveform(y, target_hz)


# --------------------------------------------------------------------------
# manifests


def load_manifest(path, check_files=False) -> Manifest:
    """Parse ``path<TAB>label<TAB>split<TAB>source_id`` records.

    Paths are relative to the manifest's directory.
    """
    path = Path(path)
    entries = []
    seen = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ManifestError(f"expected 4 tab-separated fields, got {len(parts)}", lineno)
            rel, label, split, source_id = parts
            if not rel:
                raise ManifestError("empty path", lineno)
            if label not in ("real", "fake"):
                raise ManifestError(f"label must be real or fake, got {label!r}", lineno)
            if split not in ("train", "test"):
                raise ManifestError(f"split must be train or test, got {split!r}", lineno)
            if rel in seen:
                raise ManifestError(f"duplicate path {rel!r} (first on line {seen[rel]})", lineno)
            seen[rel] = lineno
            entries.append(ManifestEntry(rel, Label.parse(label), Split(split), source_id))
    manifest = Manifest(entries, path.parent)
    if check_files:
        for e in entries:
            read_wav(manifest.resolve(e))
    return manifest


def save_manifest(manifest: Manifest, path):
    lines = [f"{e.path}\t{e.label.name.lower()}\t{e.split.value}\t{e.source_id}\n"
             for e in manifest.entries]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(lines)


# --------------------------------------------------------------------------
# synthetic corpus


@dataclass
class SynthConfig:
    n_real: int = 1250
    n_fake: int = 1250
    clip_seconds: float = 1.0
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE
    artifact_band: tuple = (5500.0, 7500.0)
    artifact_level_db: float = -10.0
    clip_rms: float = 0.02
    test_fraction: float = 0.2
    seed: int = 0
    # a weaker second artifact band, below the attack band; None disables it
    secondary_band: tuple | None = (2600.0, 3400.0)
    secondary_level_db: float = -18.0
    # real clips carry no energy above this frequency
    real_bandwidth_hz: float = 2500.0

    def __post_init__(self):
        self.artifact_band = tuple(float(f) for f in self.artifact_band)
        lo, hi = self.artifact_band
        if self.n_real < 0 or self.n_fake < 0 or self.n_real + self.n_fake == 0:
            raise ConfigError("need at least one clip")
        if self.clip_seconds <= 0 or self.sample_rate_hz <= 0:
            raise ConfigError("clip_seconds and sample_rate_hz must be positive")
        if not 0 <= lo < hi <= self.sample_rate_hz / 2:
            raise ConfigError(f"artifact band {self.artifact_band} must satisfy 0 <= lo < hi <= Nyquist")
        if not 0 < self.clip_rms < 1:
            raise ConfigError("clip_rms must lie in (0, 1)")
        if not 0 < self.real_bandwidth_hz <= self.sample_rate_hz / 2:
            raise ConfigError("real_bandwidth_hz must lie in (0, Nyquist]")
        if not 0 <= self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in [0, 1)")
        if self.secondary_band is not None:
            self.secondary_band = tuple(float(f) for f in self.secondary_band)
            s_lo, s_hi = self.secondary_band
            if not 0 <= s_lo < s_hi <= self.sample_rate_hz / 2:
                raise ConfigError(f"secondary band {self.secondary_band} must satisfy 0 <= lo < hi <= Nyquist")


def _band_noise(rng, n, sample_rate_hz, lo, hi):
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate_hz)
    spec[(freqs < lo) | (freqs > hi)] = 0.0
    return np.fft.irfft(spec, n=n)


def _rms(x):
    return float(np.sqrt(np.mean(x * x)))


def synth_real_clip(rng, n, sample_rate_hz, clip_rms, bandwidth_hz=4000.0):
    """Voiced-speech stand-in: harmonic stack + pink-ish noise, band-limited to ``bandwidth_hz``."""
    t = np.arange(n) / sample_rate_hz
    f0 = rng.uniform(100.0, 400.0)
    n_harm = int(rng.integers(3, 7))
    harmonics = rng.choice(np.arange(1, 11), size=n_harm, replace=False)
    vibrato = 1.0 + 0.01 * np.sin(2 * np.pi * rng.uniform(3.0, 6.0) * t)
    phase_track = 2 * np.pi * f0 * np.cumsum(vibrato) / sample_rate_hz
    x = np.zeros(n)
    for h in harmonics:
        x += rng.uniform(0.2, 1.0) / h * np.sin(h * phase_track + rng.uniform(0, 2 * np.pi))
    # syllable-rate amplitude envelope
    env = 0.6 + 0.4 * np.sin(2 * np.pi * rng.uniform(2.0, 5.0) * t + rng.uniform(0, 2 * np.pi))
    x *= env

    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate_hz)
    spec[1:] /= np.sqrt(freqs[1:] / freqs[1])
    spec[0] = 0.0
    pink = np.fft.irfft(spec, n=n)
    x += pink * (_rms(x) / _rms(pink)) * 10 ** (rng.uniform(-25.0, -15.0) / 20)

    x = _fft_lowpass(x, sample_rate_hz, bandwidth_hz)
    return x * (clip_rms / _rms(x))


def synth_pair(cfg: SynthConfig, index: int):
    """Return the (real, fake) sample arrays for pair ``index``.

    Both share the same base clip. The fake adds band-limited noise inside
    ``cfg.artifact_band`` at ``cfg.artifact_level_db`` relative to the clip
    RMS, plus independent noise in ``cfg.secondary_band`` when one is set.
    """
    n = int(round(cfg.clip_seconds * cfg.sample_rate_hz))
    base = synth_real_clip(np.random.default_rng([cfg.seed, 0, index]), n,
                           cfg.sample_rate_hz, cfg.clip_rms, cfg.real_bandwidth_hz)
    rng = np.random.default_rng([cfg.seed, 1, index])
    fake = base.copy()
    bands = [(cfg.artifact_band, cfg.artifact_level_db)]
    if cfg.secondary_band is not None:
        bands.append((cfg.secondary_band, cfg.secondary_level_db))
    for (lo, hi), level_db in bands:
        noise = _band_noise(rng, n, cfg.sample_rate_hz, lo, hi)
        fake += noise * (cfg.clip_rms * 10 ** (level_db / 20) / _rms(noise))
    return base, fake


def gen_synthetic_corpus(cfg: SynthConfig, out_dir, manifest_name="manifest.tsv") -> Manifest:
    """Write the corpus WAVs and manifest under ``out_dir``; return the manifest."""
    out_dir = Path(out_dir)
    (out_dir / "real").mkdir(parents=True, exist_ok=True)
    (out_dir / "fake").mkdir(parents=True, exist_ok=True)
    n_pairs = max(cfg.n_real, cfg.n_fake)
    order = np.random.default_rng([cfg.seed, 2]).permutation(n_pairs)
    n_test = int(round(cfg.test_fraction * n_pairs))
    is_test = np.zeros(n_pairs, dtype=bool)
    is_test[order[:n_test]] = True

    entries = []
    for i in range(n_pairs):
        real, fake = synth_pair(cfg, i)
        split = Split.TEST if is_test[i] else Split.TRAIN
        for label, samples, count in ((Label.REAL, real, cfg.n_real), (Label.FAKE, fake, cfg.n_fake)):
            if i >= count:
                continue
            rel = f"{label.name.lower()}/{i:05d}.wav"
            write_wav(Waveform(samples, cfg.sample_rate_hz), out_dir / rel)
            entries.append(ManifestEntry(rel, label, split, f"synth-{cfg.seed}-{i:05d}"))
    manifest = Manifest(entries, out_dir)
    save_manifest(manifest, out_dir / manifest_name)
    return manifest
