import json
import math

import numpy as np
import pytest

from fsat.augment import CorruptionKind
from fsat.errors import ConfigError, DomainError
from fsat.evaluation import (corrupted_clips, corruption_sweep, evaluate, highpass_sweep,
                             report_from_scores, score_histogram_export, stack_clips, write_reports)


def test_report_counts():
    r = report_from_scores([0.1, 0.6, 0.9, 0.4, 0.5], [0, 0, 1, 1, 1], threshold=0.5)
    assert (r.n_real, r.n_fake) == (2, 3)
    assert r.acc_real == 0.5 and r.acc_fake == pytest.approx(2 / 3)
    assert r.acc_avg == pytest.approx((0.5 + 2 / 3) / 2)
    assert sum(r.hist_real) == 2 and sum(r.hist_fake) == 3
    assert r.hist_fake[18] == 1  # 0.9 sits in [0.90, 0.95)


def test_report_single_class_and_empty():
    r = report_from_scores([0.9, 0.8], [1, 1])
    assert r.acc_real is None and r.acc_fake == 1.0 and r.acc_avg == 1.0
    e = report_from_scores([], [])
    assert e.acc_real is None and math.isnan(e.acc_avg)


def test_same_metrics_ignores_condition():
    a = report_from_scores([0.2, 0.7], [0, 1], condition="x")
    b = report_from_scores([0.2, 0.7], [0, 1], condition="y")
    assert a.same_metrics(b) and a != b


def test_sweeps_on_corpus(tiny_corpus, params):
    manifest, _ = tiny_corpus
    clips = manifest.split("train").load_clips()
    base = evaluate(params, clips)
    assert base.n_real + base.n_fake == len(clips)
    rows = highpass_sweep(params, clips, [0, 1000, 4000])
    assert rows[0][1].same_metrics(base)
    assert [c for c, _ in rows] == [0.0, 1000.0, 4000.0]
    with pytest.raises(ConfigError):
        highpass_sweep(params, clips, [2000, 1000])
    with pytest.raises(DomainError):
        highpass_sweep(params, clips, [8000])

    seen = []
    reps = corruption_sweep(params, clips, [(CorruptionKind.GAIN, 0.0), (CorruptionKind.BIT_CRUSH, 4)],
                            on_corrupted=lambda k, m, X: seen.append((k, m, X.shape)))
    assert reps[0].same_metrics(base)
    assert [r.condition for r in reps] == ["gain@0", "bit_crush@4"]
    assert seen[1][2] == (len(clips), 4000)
    X1 = corrupted_clips(clips, CorruptionKind.GAUSSIAN_NOISE, 10.0, seed=2)
    X2 = corrupted_clips(clips, CorruptionKind.GAUSSIAN_NOISE, 10.0, seed=2)
    assert np.array_equal(X1, X2)


def test_stack_clips_rejects_mixed_lengths(tiny_corpus):
    clips = tiny_corpus[0].load_clips()[:2]
    clips[1].waveform.samples = clips[1].waveform.samples[:100]
    with pytest.raises(ConfigError):
        stack_clips(clips)
    X, y = stack_clips([])
    assert X.shape[0] == 0


def test_exports(tmp_path):
    reports = [report_from_scores([0.2, 0.7], [0, 1], condition="c1"),
               report_from_scores([0.6, 0.3], [0, 1], condition="c2")]
    write_reports(reports, tmp_path, "rep")
    lines = (tmp_path / "rep.jsonl").read_text().splitlines()
    assert [json.loads(l)["condition"] for l in lines] == ["c1", "c2"]
    assert json.loads((tmp_path / "rep.json").read_text())["conditions"][1]["acc_avg"] == 0.0
    score_histogram_export(reports, tmp_path / "h.json")
    doc = json.loads((tmp_path / "h.json").read_text())
    assert len(doc["bin_edges"]) == 21 and doc["conditions"][0]["hist_real"][4] == 1
