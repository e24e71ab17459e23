"""Accuracy reports, corruption and high-pass sweeps, score histograms."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import Label, LabeledClip
from .augment import corrupt_array
from .dsp import brickwall_filter_array
from .errors import ConfigError, DomainError
from .model import forward

N_HIST_BINS = 20


def stack_clips(dataset):
    """``(X, y)`` arrays from a list of LabeledClip or an ``(X, y)`` pair."""
    if isinstance(dataset, tuple):
        X, y = dataset
        return np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.int64)
    clips = list(dataset)
    if not clips:
        return np.zeros((0, 0)), np.zeros(0, dtype=np.int64)
    lengths = {len(c.waveform) for c in clips}
    if len(lengths) != 1:
        raise ConfigError(f"clips must share one length, got {sorted(lengths)}")
    X = np.stack([c.waveform.samples for c in clips])
    y = np.array([int(c.label) for c in clips], dtype=np.int64)
    return X, y


def sample_rate_of(dataset, default=16000):
    if isinstance(dataset, tuple) or not dataset:
        return default
    return dataset[0].waveform.sample_rate_hz


def predict_scores(params, X, batch_size=64):
    X = np.asarray(X)
    scores = np.empty(len(X))
    for start in range(0, len(X), batch_size):
        _, s, _ = forward(params, X[start:start + batch_size])
        scores[start:start + batch_size] = s
    return scores


@dataclass
class EvalReport:
    condition: str
    n_real: int
    n_fake: int
    acc_real: float | None
    acc_fake: float | None
    acc_avg: float
    hist_real: list = field(default_factory=list)
    hist_fake: list = field(default_factory=list)

    def to_dict(self):
        return {
            "condition": self.condition,
            "n_real": self.n_real,
            "n_fake": self.n_fake,
            "acc_real": self.acc_real,
            "acc_fake": self.acc_fake,
            "acc_avg": self.acc_avg,
            "hist_real": list(self.hist_real),
            "hist_fake": list(self.hist_fake),
        }

    def same_metrics(self, other):
        a, b = self.to_dict(), other.to_dict()
        a.pop("condition"), b.pop("condition")
        return a == b


def report_from_scores(scores, y, threshold=0.5, condition="clean"):
    """Predict FAKE iff ``score >= threshold``; an absent class reports ``None``."""
    scores = np.asarray(scores)
    y = np.asarray(y)
    pred = scores >= threshold
    real, fake = y == Label.REAL, y == Label.FAKE
    acc_real = float(np.mean(~pred[real])) if real.any() else None
    acc_fake = float(np.mean(pred[fake])) if fake.any() else None
    present = [a for a in (acc_real, acc_fake) if a is not None]
    acc_avg = (acc_real + acc_fake) / 2 if len(present) == 2 else (present[0] if present else math.nan)
    edges = np.linspace(0.0, 1.0, N_HIST_BINS + 1)
    hist_real = np.histogram(scores[real], bins=edges)[0].tolist()
    hist_fake = np.histogram(scores[fake], bins=edges)[0].tolist()
    return EvalReport(condition, int(real.sum()), int(fake.sum()), acc_real, acc_fake,
                      acc_avg, hist_real, hist_fake)


def evaluate(params, dataset, threshold=0.5, condition="clean"):
    X, y = stack_clips(dataset)
    if len(X) == 0:
        raise ConfigError("evaluate needs a non-empty dataset")
    return report_from_scores(predict_scores(params, X), y, threshold, condition)


def corruption_sweep(params, dataset, ops, threshold=0.5, seed=0, on_corrupted=None):
    """One report per ``(kind, magnitude)``, applied to every clip.

    Clip ``i`` uses the random stream ``default_rng([seed, i])`` for every op.
    ``on_corrupted(kind, magnitude, X_corrupted)`` sees each corrupted batch.
    """
    X, y = stack_clips(dataset)
    sr = sample_rate_of(dataset)
    reports = []
    for kind, magnitude in ops:
        Xc = np.stack([corrupt_array(x, sr, kind, magnitude, np.random.default_rng([seed, i]))
                       for i, x in enumerate(X)])
        if on_corrupted is not None:
            on_corrupted(kind, magnitude, Xc)
        cond = f"{getattr(kind, 'value', kind)}@{magnitude:g}"
        reports.append(report_from_scores(predict_scores(params, Xc), y, threshold, cond))
    return reports


def corrupted_clips(dataset, kind, magnitude, seed=0):
    X, _ = stack_clips(dataset)
    sr = sample_rate_of(dataset)
    return np.stack([corrupt_array(x, sr, kind, magnitude, np.random.default_rng([seed, i]))
                     for i, x in enumerate(X)])


def highpass_sweep(params, dataset, cutoffs_hz, threshold=0.5):
    """Evaluate after brickwall high-pass filtering at each cutoff (0 = unfiltered)."""
    X, y = stack_clips(dataset)
    sr = sample_rate_of(dataset)
    cutoffs = [float(c) for c in cutoffs_hz]
    if any(b < a for a, b in zip(cutoffs, cutoffs[1:])):
        raise ConfigError("cutoffs must be ascending")
    out = []
    for c in cutoffs:
        if c < 0 or c >= sr / 2:
            raise DomainError(f"cutoff {c} Hz outside [0, {sr / 2})")
        Xf = X if c == 0 else brickwall_filter_array(X, sr, c, "highpass")
        out.append((c, report_from_scores(predict_scores(params, Xf), y, threshold, f"highpass@{c:g}Hz")))
    return out


# --------------------------------------------------------------------------
# export


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_reports(reports, out_dir, stem="report"):
    """Write ``<stem>.jsonl`` (one record per line) and ``<stem>.json`` (summary)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [r.to_dict() for r in reports]
    with open(out_dir / f"{stem}.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(_dumps(row) + "\n")
    with open(out_dir / f"{stem}.json", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"conditions": rows}, sort_keys=True, indent=2) + "\n")


def score_histogram_export(reports, path):
    """Per-condition, per-class 20-bin histograms over [0, 1] as JSON."""
    doc = {
        "bin_edges": np.linspace(0.0, 1.0, N_HIST_BINS + 1).round(6).tolist(),
        "conditions": [
            {"condition": r.condition, "n_real": r.n_real, "n_fake": r.n_fake,
             "hist_real": list(r.hist_real), "hist_fake": list(r.hist_fake)}
            for r in reports
        ],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")
