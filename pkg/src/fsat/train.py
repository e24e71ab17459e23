"""Baseline, RandAugment and F-SAT training loops plus checkpoints."""
from __future__ import annotations

import json
import logging
import struct
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attack import AttackConfig, run_attack
from .augment import AugmentPolicy, rand_augment_array
from .errors import CheckpointError, ConfigError, TrainingError
from .evaluation import sample_rate_of, stack_clips
from .model import (PARAM_NAMES, PARAM_SHAPES, ClassifierParams, adam_step, backward, forward,
                    init_classifier, nll, sgd_step)

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    gamma: float = 0.0
    optimizer: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.9
    epochs: int = 30
    batch_size: int = 16
    augment: AugmentPolicy | None = None
    attack: AttackConfig | None = None
    seed: int = 0
    checkpoint_every: int = 0
    precision: str = "f64"

    def __post_init__(self):
        if self.gamma < 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        if self.gamma > 0 and self.attack is None:
            raise ConfigError("gamma > 0 requires an attack config")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be adam or sgd, got {self.optimizer!r}")
        if self.lr <= 0 or not 0 <= self.momentum < 1:
            raise ConfigError("need lr > 0 and 0 <= momentum < 1")
        if self.epochs < 0 or self.batch_size < 1 or self.checkpoint_every < 0:
            raise ConfigError("epochs >= 0, batch_size >= 1, checkpoint_every >= 0 required")


@dataclass
class EpochRecord:
    epoch: int
    loss_clean: float
    loss_robust: float
    loss_total: float
    train_accuracy: float
    wall_time_s: float = field(default=0.0, compare=False)

    def to_dict(self, with_time=True):
        d = {"epoch": self.epoch, "loss_clean": self.loss_clean, "loss_robust": self.loss_robust,
             "loss_total": self.loss_total, "train_accuracy": self.train_accuracy}
        if with_time:
            d["wall_time_s"] = self.wall_time_s
        return d


@dataclass
class TrainHistory:
    gamma: float = 0.0
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def to_dict(self, with_time=False):
        return {"gamma": self.gamma, "records": [r.to_dict(with_time) for r in self.records]}

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("gamma", 0.0), [EpochRecord(**r) for r in d.get("records", [])])


def _epoch_order(seed, epoch, n):
    return np.random.default_rng([seed, 1, epoch]).permutation(n)


def _step(params, grads, cfg, state):
    if cfg.optimizer == "sgd":
        return sgd_step(params, grads, cfg.lr, cfg.momentum, state)
    return adam_step(params, grads, cfg.lr, state)


def train(dataset, cfg: TrainConfig, params: ClassifierParams | None = None,
          history: TrainHistory | None = None, opt_state=None, on_epoch=None):
    """Train on ``dataset`` (LabeledClip list or ``(X, y)``); returns ``(params, history)``.

    Per batch: optional RandAugment, clean cross-entropy, and when gamma > 0 a
    robust cross-entropy on adversarial clips crafted against the current
    weights; the step follows ``L_clean + gamma * L_robust``.

    Passing ``params``/``history``/``opt_state`` from a checkpoint resumes at
    epoch ``len(history)``. ``on_epoch(params, history, opt_state)`` runs after
    every epoch.
    """
    X, y = stack_clips(dataset)
    if len(X) == 0:
        raise ConfigError("training set is empty")
    sr = sample_rate_of(dataset)
    n = len(X)
    params = init_classifier(cfg.seed, cfg.precision) if params is None else params
    history = TrainHistory(cfg.gamma) if history is None else history
    gamma = cfg.gamma

    for epoch in range(len(history), cfg.epochs):
        t0 = time.perf_counter()
        order = _epoch_order(cfg.seed, epoch, n)
        sums = np.zeros(3)
        n_correct = 0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            xb, yb = X[idx], y[idx]
            if cfg.augment is not None:
                xb = np.stack([rand_augment_array(xb[i], sr, cfg.augment, epoch * n + j)
                               for i, j in enumerate(idx)])
            m = len(idx)
            _, _, trace = forward(params, xb)
            l_clean = nll(trace.logits, yb)
            n_correct += int(np.sum(np.argmax(trace.logits, axis=1) == yb))
            grads = backward(params, trace, yb, weights=np.full(m, 1.0 / m),
                             need_input=False).d_params

            l_robust = np.zeros(m)
            if gamma > 0:
                adv = run_attack(params, xb, yb, cfg.attack, keys=epoch * n + idx).adversarial
                _, _, rtrace = forward(params, adv)
                l_robust = nll(rtrace.logits, yb)
                rgrads = backward(params, rtrace, yb, weights=np.full(m, gamma / m),
                                  need_input=False).d_params
                grads = {k: grads[k] + rgrads[k] for k in PARAM_NAMES}

            batch_losses = (l_clean.mean(), l_robust.mean())
            if not np.all(np.isfinite(batch_losses)):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b} "
                                    f"(clean={batch_losses[0]}, robust={batch_losses[1]})")
            try:
                opt_state = _step(params, grads, cfg, opt_state)
            except TrainingError as exc:
                raise TrainingError(f"epoch {epoch}, batch {b}: {exc}") from exc
            sums += (l_clean.sum(), l_robust.sum(), m)

        mean_clean, mean_robust = sums[0] / sums[2], sums[1] / sums[2]
        rec = EpochRecord(epoch, float(mean_clean), float(mean_robust),
                          float(mean_clean + gamma * mean_robust), n_correct / n,
                          time.perf_counter() - t0)
        history.records.append(rec)
        log.info("epoch %d: clean %.4f robust %.4f total %.4f acc %.3f (%.1fs)", epoch,
                 rec.loss_clean, rec.loss_robust, rec.loss_total, rec.train_accuracy, rec.wall_time_s)
        if on_epoch is not None:
            on_epoch(params, history, opt_state)
    return params, history


# --------------------------------------------------------------------------
# checkpoints
#
# Layout (little-endian): magic "FSATCKPT", u16 format version, u8 precision
# tag, i64 seed, i64 optimizer step, u16 array count, then per array: u8 name
# length, name, u8 ndim, u32 dims, raw IEEE-754 data; u32 history length +
# UTF-8 JSON; u32 CRC-32 of all preceding bytes. Optimizer arrays are named
# "<slot>:<param>" (slot m/v for Adam, velocity for SGD).

MAGIC = b"FSATCKPT"
FORMAT_VERSION = 1
_PRECISION_TAGS = {"f64": 0, "f32": 1}
_TAG_PRECISION = {v: k for k, v in _PRECISION_TAGS.items()}
_HEADER = "<HBqqH"


def _opt_arrays(opt_state):
    if opt_state is None:
        return 0, []
    if "step" in opt_state:
        return opt_state["step"], [(k, opt_state[k]) for k in sorted(opt_state) if k != "step"]
    return 0, [("velocity:" + k, opt_state[k]) for k in PARAM_NAMES]


def _opt_state(step, arrays):
    slots = {}
    for name, arr in arrays.items():
        slot, _, param = name.partition(":")
        slots.setdefault(slot, {})[param] = arr
    if not slots:
        return None
    if "velocity" in slots:
        return slots["velocity"]
    state = {"step": step}
    for slot, d in slots.items():
        for param, arr in d.items():
            state[f"{slot}:{param}"] = arr
    return state


def save_checkpoint(params: ClassifierParams, history: TrainHistory, path, opt_state=None):
    dtype = np.dtype(params.dtype).newbyteorder("<")
    step, opt = _opt_arrays(opt_state)
    arrays = list(params.arrays().items()) + opt
    buf = bytearray(MAGIC)
    buf += struct.pack(_HEADER, FORMAT_VERSION, _PRECISION_TAGS[params.precision], params.seed,
                       step, len(arrays))
    for name, arr in arrays:
        raw = name.encode("utf-8")
        buf += struct.pack("<B", len(raw)) + raw
        buf += struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        buf += np.ascontiguousarray(arr, dtype=dtype).tobytes()
    hist = json.dumps(history.to_dict(with_time=False), sort_keys=True).encode("utf-8")
    buf += struct.pack("<I", len(hist)) + hist
    buf += struct.pack("<I", zlib.crc32(bytes(buf)))
    Path(path).write_bytes(bytes(buf))


def load_checkpoint(path, precision=None, allow_widen=False):
    """Return ``(params, history, opt_state)``.

    ``precision`` requests a storage precision; loading an f32 checkpoint as
    f64 needs ``allow_widen=True``. Narrowing is never done implicitly.
    """
    data = Path(path).read_bytes()
    try:
        if data[:8] != MAGIC:
            raise CheckpointError("not a checkpoint file (bad magic)")
        body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
        if zlib.crc32(body) != crc:
            raise CheckpointError("checksum mismatch (corrupt checkpoint)")
        pos = 8
        version, tag, seed, step, n_arrays = struct.unpack_from(_HEADER, body, pos)
        pos += struct.calcsize(_HEADER)
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        stored = _TAG_PRECISION[tag]
        dtype = np.dtype({"f64": "<f8", "f32": "<f4"}[stored])
        arrays = {}
        for _ in range(n_arrays):
            (ln,) = struct.unpack_from("<B", body, pos)
            pos += 1
            name = body[pos:pos + ln].decode("utf-8")
            pos += ln
            (ndim,) = struct.unpack_from("<B", body, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", body, pos)
            pos += 4 * ndim
            count = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(body, dtype=dtype, count=count, offset=pos).reshape(shape)
            pos += count * dtype.itemsize
            base = name.partition(":")[2] or name
            if base not in PARAM_SHAPES or tuple(shape) != PARAM_SHAPES[base]:
                raise CheckpointError(f"array {name!r} has unexpected shape {tuple(shape)}")
            arrays[name] = arr.astype(dtype.newbyteorder("="))
        (hlen,) = struct.unpack_from("<I", body, pos)
        pos += 4
        history = TrainHistory.from_dict(json.loads(body[pos:pos + hlen].decode("utf-8")))
        if pos + hlen != len(body):
            raise CheckpointError("trailing bytes in checkpoint")
    except CheckpointError:
        raise
    except (struct.error, KeyError, ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from exc

    missing = [k for k in PARAM_NAMES if k not in arrays]
    if missing:
        raise CheckpointError(f"checkpoint lacks {missing}")
    target = stored if precision is None else precision
    if target != stored:
        if not (stored == "f32" and target == "f64" and allow_widen):
            raise CheckpointError(f"checkpoint stores {stored}; loading as {target} "
                                  "requires allow_widen (f32 -> f64 only)")
    params = ClassifierParams(**{k: arrays[k] for k in PARAM_NAMES}, seed=seed, precision=target)
    opt = {k: v.astype(params.dtype) for k, v in arrays.items() if ":" in k}
    return params, history, _opt_state(step, opt)
