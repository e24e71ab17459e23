import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.io import wavfile

from fsat.audio_io import (Label, Manifest, ManifestEntry, Split, SynthConfig, Waveform,
                           gen_synthetic_corpus, load_manifest, quantize_pcm16, read_wav,
                           resample_to, save_manifest, synth_pair, write_wav)
from fsat.errors import ConfigError, DecodeError, DomainError, ManifestError, WavFormatError


def test_waveform_validation():
    with pytest.raises(ConfigError):
        Waveform(np.zeros((2, 2)))
    with pytest.raises(ConfigError):
        Waveform(np.array([0.0, np.nan]))
    with pytest.raises(ConfigError):
        Waveform(np.zeros(3), 0)
    assert Waveform(np.zeros(8000), 16000).duration == 0.5


@given(st.lists(st.floats(-1.5, 1.5), min_size=1, max_size=200))
@settings(max_examples=50, deadline=None)
def test_pcm16_quantization_error_bound(values):
    x = np.array(values)
    q = quantize_pcm16(x).astype(np.float64) / 32768.0
    target = np.clip(x, -1, 32767 / 32768)  # +1.0 has no PCM16 code
    assert np.all(np.abs(q - target) <= 0.5 / 32768 + 1e-15)


def test_wav_round_trip(tmp_path, rng):
    x = rng.uniform(-0.9, 0.9, 1234)
    write_wav(Waveform(x, 22050), tmp_path / "a.wav")
    w = read_wav(tmp_path / "a.wav")
    assert w.sample_rate_hz == 22050
    np.testing.assert_allclose(w.samples, x, atol=0.5 / 32768 + 1e-12)


def test_read_float_and_stereo(tmp_path):
    wavfile.write(tmp_path / "f.wav", 8000, np.array([[0.5, -0.5], [0.25, 0.25]], dtype=np.float32))
    w = read_wav(tmp_path / "f.wav")
    np.testing.assert_allclose(w.samples, [0.0, 0.25])


def test_read_errors(tmp_path):
    (tmp_path / "junk.wav").write_bytes(b"RIFF\x00\x00\x00\x00WAVEjunk")
    with pytest.raises((WavFormatError, DecodeError)):
        read_wav(tmp_path / "junk.wav")
    wavfile.write(tmp_path / "i32.wav", 8000, np.zeros(10, dtype=np.int32))
    with pytest.raises(DecodeError):
        read_wav(tmp_path / "i32.wav")
    with pytest.raises(FileNotFoundError):
        read_wav(tmp_path / "missing.wav")


def test_resample(rng):
    t = np.arange(16000) / 16000
    w = Waveform(np.sin(2 * np.pi * 440 * t), 16000)
    down = resample_to(w, 8000)
    assert len(down) == 8000 and down.sample_rate_hz == 8000
    spec = np.abs(np.fft.rfft(down.samples))
    assert np.argmax(spec) == 440
    assert resample_to(w, 16000).samples is not w.samples
    with pytest.raises(DomainError):
        resample_to(w, 0)


def test_manifest_round_trip_and_errors(tmp_path):
    entries = [ManifestEntry("real/0.wav", Label.REAL, Split.TRAIN, "s0"),
               ManifestEntry("fake/0.wav", Label.FAKE, Split.TEST, "s0")]
    save_manifest(Manifest(entries, tmp_path), tmp_path / "m.tsv")
    m = load_manifest(tmp_path / "m.tsv")
    assert m.entries == entries and len(m.split("test")) == 1
    bad = {"fields": "a.wav\treal\ttrain\n",
           "label": "a.wav\tmaybe\ttrain\tx\n",
           "split": "a.wav\treal\tdev\tx\n",
           "dupe": "a.wav\treal\ttrain\tx\na.wav\tfake\ttrain\ty\n"}
    for name, text in bad.items():
        (tmp_path / f"{name}.tsv").write_text(text)
        with pytest.raises(ManifestError):
            load_manifest(tmp_path / f"{name}.tsv")
    with pytest.raises(ManifestError):
        Manifest(entries + entries[:1])


def test_synth_pair_structure():
    cfg = SynthConfig(artifact_level_db=-20.0, clip_rms=0.05, real_bandwidth_hz=3000.0,
                      artifact_band=(3300.0, 7500.0), secondary_band=None)
    real, fake = synth_pair(cfg, 0)
    assert np.sqrt(np.mean(real ** 2)) == pytest.approx(0.05)
    art = fake - real
    assert np.sqrt(np.mean(art ** 2)) == pytest.approx(0.005)
    freqs = np.fft.rfftfreq(real.size, 1 / 16000)
    assert np.abs(np.fft.rfft(real))[freqs > 3000].max() < 1e-9
    spec_art = np.abs(np.fft.rfft(art))
    assert spec_art[(freqs < 3300) | (freqs > 7500)].max() < 1e-9
    again = synth_pair(cfg, 0)
    assert np.array_equal(again[1], fake)


def test_synth_secondary_band():
    cfg = SynthConfig(clip_rms=0.02, artifact_level_db=-10.0, secondary_band=(2600.0, 3400.0),
                      secondary_level_db=-18.0, real_bandwidth_hz=2500.0)
    real, fake = synth_pair(cfg, 1)
    spec = np.abs(np.fft.rfft(fake - real)) ** 2
    freqs = np.fft.rfftfreq(real.size, 1 / 16000)
    sec = spec[(freqs >= 2600) & (freqs <= 3400)].sum()
    main_band = spec[(freqs >= 5500) & (freqs <= 7500)].sum()
    assert sec / main_band == pytest.approx(10 ** (-0.8), rel=1e-6)
    assert spec[(freqs > 3400) & (freqs < 5500)].max() < 1e-12


@pytest.mark.parametrize("kw", [dict(n_real=0, n_fake=0), dict(clip_rms=1.5),
                                dict(artifact_band=(7000.0, 9000.0)), dict(test_fraction=1.0),
                                dict(secondary_band=(7000.0, 9000.0)), dict(real_bandwidth_hz=0.0)])
def test_synth_config_validation(kw):
    with pytest.raises(ConfigError):
        SynthConfig(**kw)


def test_corpus_layout(tiny_corpus):
    manifest, path = tiny_corpus
    assert len(manifest) == 24
    assert len(manifest.split("test")) == 6
    clips = load_manifest(path, check_files=True).load_clips()
    assert {c.label for c in clips} == {Label.REAL, Label.FAKE}
    assert all(len(c.waveform) == 4000 for c in clips)
    # real and fake of one pair land in the same split
    by_id = {}
    for c in clips:
        by_id.setdefault(c.source_id, set()).add(c.split)
    assert all(len(s) == 1 for s in by_id.values())


def test_corpus_is_deterministic(tmp_path):
    cfg = SynthConfig(n_real=3, n_fake=2, clip_seconds=0.1, seed=5)
    gen_synthetic_corpus(cfg, tmp_path / "a")
    gen_synthetic_corpus(cfg, tmp_path / "b")
    for rel in ("manifest.tsv", "real/00002.wav", "fake/00001.wav"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
    assert not (tmp_path / "a" / "fake/00002.wav").exists()
