"""Run configuration: one YAML document, every default listed in ``DEFAULTS``.

Unknown keys are rejected so typos fail loudly. Relative paths inside a config
file resolve against that file's directory. One top-level ``seed`` is fanned
out into independent per-purpose seeds (see ``derive_seed``).
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .attack import AttackConfig, Domain, GridEntry, standard_grid
from .audio_io import SynthConfig
from .augment import AugmentPolicy, CorruptionKind, default_ops
from .dsp import FrequencyBand, StftConfig
from .errors import ConfigError
from .train import TrainConfig

PURPOSES = ("data", "init", "augment", "attack", "eval")

DEFAULTS = {
    "seed": 0,
    "data": {
        "manifest": None,
        "n_real": 1250,
        "n_fake": 1250,
        "clip_seconds": 1.0,
        "sample_rate_hz": 16000,
        "artifact_band": [5500.0, 7500.0],
        "artifact_level_db": -10.0,
        "secondary_band": [2600.0, 3400.0],
        "secondary_level_db": -18.0,
        "real_bandwidth_hz": 2500.0,
        "clip_rms": 0.02,
        "test_fraction": 0.2,
    },
    "stft": {"n_fft": 512, "hop": 128, "window": "hann"},
    "augment": {
        "enabled": False,
        "n_select": 2,
        "apply_prob": 0.5,
        "ops": None,
    },
    # training-time attack, used when train.gamma > 0
    "attack": {
        "domain": "freq_magnitude",
        "band": [4000.0, 8000.0],
        "epsilon": 0.01,
        "alpha": 0.04,
        "iterations": 2,
        "restarts": 1,
        "random_init": False,
    },
    "train": {
        "gamma": 0.0,
        "optimizer": "adam",
        "lr": 1e-3,
        "momentum": 0.9,
        "epochs": 30,
        "batch_size": 16,
        "checkpoint_every": 1,
        "precision": "f64",
        # start from these weights instead of a fresh init (F-SAT fine-tuning)
        "init_checkpoint": None,
    },
    "eval": {
        "checkpoint": None,
        "split": "test",
        "threshold": 0.5,
        "batch_size": 64,
        "attacks": [
            {"domain": "freq_magnitude", "band": [4000.0, 8000.0], "epsilon": 0.01,
             "alpha": 0.04, "iterations": 5, "restarts": 1, "random_init": False, "source": "A"},
        ],
        "standard_grid": False,
        "grid_sources": ["A"],
        "surrogates": {},
        "corruptions": [
            {"kind": "gain", "magnitude": 3.0},
            {"kind": "gaussian_noise", "magnitude": 20.0},
            {"kind": "aliasing", "magnitude": 4.0},
        ],
        "write_wavs": True,
        "highpass_cutoffs": [0, 1000, 2000, 3000, 4000, 5000, 6000, 7000, 7500, 7750],
    },
}

_ATTACK_KEYS = set(DEFAULTS["attack"]) | {"source"}


def derive_seed(seed: int, purpose: str) -> int:
    """Independent 32-bit seed for ``purpose``, a pure function of ``seed``."""
    if purpose not in PURPOSES:
        raise ConfigError(f"unknown seed purpose {purpose!r}")
    ss = np.random.SeedSequence([int(seed), PURPOSES.index(purpose)])
    return int(ss.generate_state(1, np.uint32)[0])


def _merge(base, user, where=""):
    out = copy.deepcopy(base)
    for key, value in user.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where + key!r}")
        if isinstance(base[key], dict) and base[key] and key != "surrogates":
            if not isinstance(value, dict):
                raise ConfigError(f"{where + key!r} must be a mapping")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def _path(value, base_dir):
    if value is None:
        return None
    p = Path(value).expanduser()
    return p if p.is_absolute() else (base_dir / p)


def _band(value, what):
    try:
        lo, hi = (float(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what} must be a [low, high] pair in Hz") from exc
    return FrequencyBand(lo, hi)


def attack_from_dict(d, stft: StftConfig, seed: int) -> AttackConfig:
    unknown = set(d) - _ATTACK_KEYS
    if unknown:
        raise ConfigError(f"unknown attack keys {sorted(unknown)}")
    d = {**DEFAULTS["attack"], **d}
    domain = Domain(d["domain"]) if d["domain"] in {m.value for m in Domain} else None
    if domain is None:
        raise ConfigError(f"attack domain must be one of {[m.value for m in Domain]}")
    band = None if domain is Domain.TIME else _band(d["band"], "attack band")
    return AttackConfig(domain=domain, epsilon=float(d["epsilon"]), alpha=float(d["alpha"]),
                        iterations=int(d["iterations"]), restarts=int(d["restarts"]), band=band,
                        random_init=bool(d["random_init"]), stft=stft, seed=seed)


@dataclass
class EvalOptions:
    checkpoint: Path | None
    split: str
    threshold: float
    batch_size: int
    attacks: list
    surrogates: dict
    corruptions: list
    write_wavs: bool
    highpass_cutoffs: list
    seed: int


@dataclass
class RunConfig:
    seed: int
    manifest: Path | None
    synth: SynthConfig
    stft: StftConfig
    augment: AugmentPolicy | None
    train: TrainConfig
    eval: EvalOptions
    init_checkpoint: Path | None = None
    raw: dict = field(repr=False, default_factory=dict)

    def to_dict(self):
        """The effective configuration with defaults and derived seeds resolved."""
        d = copy.deepcopy(self.raw)
        d["derived_seeds"] = {p: derive_seed(self.seed, p) for p in PURPOSES}
        if self.augment is not None:
            d["augment"]["ops"] = self.augment.to_dict()["ops"]
        for key in ("manifest",):
            d["data"][key] = None if self.manifest is None else str(self.manifest)
        d["train"]["init_checkpoint"] = None if self.init_checkpoint is None else str(self.init_checkpoint)
        d["eval"]["checkpoint"] = None if self.eval.checkpoint is None else str(self.eval.checkpoint)
        d["eval"]["surrogates"] = {k: str(v) for k, v in self.eval.surrogates.items()}
        return d

    def dump(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=True)


def parse_config(doc: dict | None, base_dir=Path("."), seed: int | None = None) -> RunConfig:
    """Validate a config mapping; ``seed`` (from the command line) beats the file."""
    try:
        return _parse(doc, base_dir, seed)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc


def _parse(doc, base_dir, seed):
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    raw = _merge(DEFAULTS, doc)
    if seed is not None:
        raw["seed"] = seed
    if not isinstance(raw["seed"], int) or raw["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")
    base_dir = Path(base_dir)
    top = raw["seed"]

    data = raw["data"]
    synth = SynthConfig(
        n_real=int(data["n_real"]), n_fake=int(data["n_fake"]), clip_seconds=float(data["clip_seconds"]),
        sample_rate_hz=int(data["sample_rate_hz"]), artifact_band=tuple(data["artifact_band"]),
        artifact_level_db=float(data["artifact_level_db"]),
        secondary_band=None if data["secondary_band"] is None else tuple(data["secondary_band"]),
        secondary_level_db=float(data["secondary_level_db"]),
        real_bandwidth_hz=float(data["real_bandwidth_hz"]), clip_rms=float(data["clip_rms"]),
        test_fraction=float(data["test_fraction"]), seed=derive_seed(top, "data"))
    s = raw["stft"]
    stft = StftConfig(n_fft=int(s["n_fft"]), hop=int(s["hop"]), window=s["window"],
                      sample_rate_hz=synth.sample_rate_hz)

    a = raw["augment"]
    augment = None
    if a["enabled"]:
        ops = default_ops() if a["ops"] is None else a["ops"]
        augment = AugmentPolicy(ops=ops, n_select=int(a["n_select"]), apply_prob=float(a["apply_prob"]),
                                seed=derive_seed(top, "augment"))

    t = raw["train"]
    train_attack = attack_from_dict(raw["attack"], stft, derive_seed(top, "attack"))
    train = TrainConfig(gamma=float(t["gamma"]), optimizer=t["optimizer"], lr=float(t["lr"]),
                        momentum=float(t["momentum"]), epochs=int(t["epochs"]),
                        batch_size=int(t["batch_size"]), augment=augment,
                        attack=train_attack if float(t["gamma"]) > 0 else None,
                        seed=derive_seed(top, "init"), checkpoint_every=int(t["checkpoint_every"]),
                        precision=t["precision"])

    e = raw["eval"]
    if e["split"] not in ("train", "test"):
        raise ConfigError("eval.split must be train or test")
    if not 0 <= float(e["threshold"]) <= 1:
        raise ConfigError("eval.threshold must lie in [0, 1]")
    eval_seed = derive_seed(top, "eval")
    if e["standard_grid"]:
        entries = standard_grid(sources=tuple(e["grid_sources"]), stft=stft, seed=eval_seed)
    else:
        entries = []
        for item in e["attacks"] or []:
            item = dict(item)
            source = item.pop("source", "A")
            entries.append(GridEntry(attack_from_dict(item, stft, eval_seed), source))
    corruptions = []
    for item in e["corruptions"] or []:
        if set(item) != {"kind", "magnitude"}:
            raise ConfigError("each eval.corruptions entry needs exactly kind and magnitude")
        try:
            kind = CorruptionKind(item["kind"])
        except ValueError as exc:
            raise ConfigError(f"unknown corruption kind {item['kind']!r}") from exc
        corruptions.append((kind, float(item["magnitude"])))
    if not isinstance(e["surrogates"], dict):
        raise ConfigError("eval.surrogates must map source names to checkpoint paths")
    ev = EvalOptions(
        checkpoint=_path(e["checkpoint"], base_dir), split=e["split"], threshold=float(e["threshold"]),
        batch_size=int(e["batch_size"]), attacks=entries,
        surrogates={str(k): _path(v, base_dir) for k, v in e["surrogates"].items()},
        corruptions=corruptions, write_wavs=bool(e["write_wavs"]),
        highpass_cutoffs=[float(c) for c in e["highpass_cutoffs"]], seed=eval_seed)
    return RunConfig(top, _path(data["manifest"], base_dir), synth, stft, augment, train, ev,
                     _path(t["init_checkpoint"], base_dir), raw)


def load_config(path=None, seed: int | None = None) -> RunConfig:
    if path is None:
        return parse_config({}, Path.cwd(), seed)
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    return parse_config(doc, path.parent, seed)
