"""Two-layer raw-waveform conv classifier with hand-written backprop.

conv1 (8 x 1 x 31, stride 4) -> ReLU -> conv2 (16 x 8 x 15, stride 4) -> ReLU
-> mean over time -> linear 16 -> 2. Class 1 is FAKE.

All functions accept a single clip ``(L,)`` or a batch ``(B, L)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, FsatError, SizeError, TrainingError

CONV1 = (8, 1, 31)
CONV2 = (16, 8, 15)
STRIDES = (4, 4)
N_CLASSES = 2
PARAM_NAMES = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "head_w", "head_b")
PARAM_SHAPES = {
    "conv1_w": CONV1,
    "conv1_b": (CONV1[0],),
    "conv2_w": CONV2,
    "conv2_b": (CONV2[0],),
    "head_w": (N_CLASSES, CONV2[0]),
    "head_b": (N_CLASSES,),
}
# uniform bound = INIT_GAIN / sqrt(fan_in); sqrt(6) keeps ReLU activations from shrinking layer to layer
INIT_GAIN = np.sqrt(6.0)
# shortest input for which conv2 yields one output
MIN_INPUT_LENGTH = CONV1[2] + (CONV2[2] - 1) * STRIDES[0]

_DTYPES = {"f64": np.float64, "f32": np.float32}


class StaleTraceError(FsatError):
    """``backward`` was handed a trace from other params or an older update."""


@dataclass
class ClassifierParams:
    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    head_w: np.ndarray
    head_b: np.ndarray
    seed: int = 0
    precision: str = "f64"
    version: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.precision not in _DTYPES:
            raise ConfigError(f"precision must be one of {sorted(_DTYPES)}")
        dtype = _DTYPES[self.precision]
        for name in PARAM_NAMES:
            arr = np.asarray(getattr(self, name), dtype=dtype)
            if arr.shape != PARAM_SHAPES[name]:
                raise SizeError(f"{name} has shape {arr.shape}, expected {PARAM_SHAPES[name]}")
            if not np.all(np.isfinite(arr)):
                raise ConfigError(f"{name} contains non-finite values")
            setattr(self, name, arr)

    @property
    def dtype(self):
        return _DTYPES[self.precision]

    def arrays(self):
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self):
        return ClassifierParams(**{k: v.copy() for k, v in self.arrays().items()},
                                seed=self.seed, precision=self.precision)

    def astype(self, precision):
        return ClassifierParams(**self.arrays(), seed=self.seed, precision=precision)

    def equals(self, other):
        return (self.precision == other.precision
                and all(np.array_equal(a, b) for a, b in zip(self.arrays().values(),
                                                            other.arrays().values())))


def init_classifier(seed: int = 0, precision: str = "f64") -> ClassifierParams:
    """Weights ~ U(-g/sqrt(fan_in), g/sqrt(fan_in)) with g = INIT_GAIN, biases zero."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name in PARAM_NAMES:
        shape = PARAM_SHAPES[name]
        if name.endswith("_b"):
            arrays[name] = np.zeros(shape)
        else:
            bound = INIT_GAIN / np.sqrt(np.prod(shape[1:]))
            arrays[name] = rng.uniform(-bound, bound, size=shape)
    return ClassifierParams(**arrays, seed=seed, precision=precision)


@dataclass
class ForwardTrace:
    params: ClassifierParams
    version: int
    x: np.ndarray
    z1: np.ndarray
    a1: np.ndarray
    z2: np.ndarray
    pooled: np.ndarray
    logits: np.ndarray
    probs: np.ndarray
    batched: bool


@dataclass
class Gradients:
    d_params: dict
    d_input: np.ndarray


def _as_batch(x, dtype):
    x = np.asarray(x.samples if hasattr(x, "samples") else x, dtype=dtype)
    batched = x.ndim == 2
    if x.ndim == 1:
        x = x[None, :]
    elif x.ndim != 2:
        raise SizeError(f"expected (L,) or (B, L) input, got shape {x.shape}")
    if x.shape[1] < MIN_INPUT_LENGTH:
        raise SizeError(f"input of {x.shape[1]} samples is shorter than the receptive field "
                        f"({MIN_INPUT_LENGTH})")
    return x, batched


def _softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(params: ClassifierParams, x):
    """Return ``(logits, score_fake, trace)``."""
    xb, batched = _as_batch(x, params.dtype)
    z1 = kernels.conv1d_forward(xb[:, None, :], params.conv1_w, params.conv1_b, STRIDES[0])
    a1 = np.maximum(z1, 0.0)
    z2 = kernels.conv1d_forward(a1, params.conv2_w, params.conv2_b, STRIDES[1])
    pooled = np.maximum(z2, 0.0).mean(axis=2)
    logits = pooled @ params.head_w.T + params.head_b
    probs = _softmax(logits)
    trace = ForwardTrace(params, params.version, xb, z1, a1, z2, pooled, logits, probs, batched)
    if batched:
        return logits, probs[:, 1], trace
    return logits[0], float(probs[0, 1]), trace


def _labels(y, n):
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if y.size == 1 and n > 1:
        y = np.full(n, y[0])
    if y.size != n or np.any((y < 0) | (y >= N_CLASSES)):
        raise ConfigError(f"labels must be {n} values in {{0, 1}}")
    return y


def nll(logits, y):
    """Per-sample cross-entropy ``-log softmax(logits)[y]``."""
    logits = np.atleast_2d(logits)
    y = _labels(y, logits.shape[0])
    m = logits.max(axis=1)
    lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
    return lse - logits[np.arange(logits.shape[0]), y]


def loss(params: ClassifierParams, x, y):
    """Cross-entropy of one clip (float) or per-clip losses of a batch (array)."""
    logits, _, trace = forward(params, x)
    per = nll(trace.logits, y)
    return per if trace.batched else float(per[0])


def backward(params: ClassifierParams, trace: ForwardTrace, y, weights=None,
             need_params=True, need_input=True) -> Gradients:
    """Gradients of ``sum_i weights[i] * loss_i`` (weights default to 1).

    ``d_input`` row i is the gradient with respect to clip i; with unit weights
    it is the gradient of that clip's own loss. Training skips the input
    gradient and attacks skip the parameter gradients; a skipped part is
    ``None``.
    """
    if trace.params is not params or trace.version != params.version:
        raise StaleTraceError("trace does not belong to these parameters")
    n = trace.x.shape[0]
    y = _labels(y, n)
    w = np.ones(n, dtype=params.dtype) if weights is None else np.asarray(weights, dtype=params.dtype)

    dlogits = trace.probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits *= w[:, None]

    dpooled = dlogits @ params.head_w
    dz2 = np.where(trace.z2 > 0, dpooled[:, :, None] / trace.z2.shape[2], 0.0).astype(params.dtype)
    da1, d_conv2_w, d_conv2_b = kernels.conv1d_backward(trace.a1, params.conv2_w, dz2, STRIDES[1],
                                                        need_dw=need_params)
    dz1 = np.where(trace.z1 > 0, da1, 0.0).astype(params.dtype)
    dx, d_conv1_w, d_conv1_b = kernels.conv1d_backward(trace.x[:, None, :], params.conv1_w, dz1,
                                                       STRIDES[0], need_dx=need_input,
                                                       need_dw=need_params)
    d_params = None
    if need_params:
        d_params = {
            "conv1_w": d_conv1_w, "conv1_b": d_conv1_b,
            "conv2_w": d_conv2_w, "conv2_b": d_conv2_b,
            "head_w": dlogits.T @ trace.pooled, "head_b": dlogits.sum(axis=0),
        }
    d_input = None
    if need_input:
        d_input = dx[:, 0, :] if trace.batched else dx[0, 0, :]
    return Gradients(d_params, d_input)


def input_gradient(params, x, y):
    """Per-clip loss and its gradient with respect to the input samples."""
    _, _, trace = forward(params, x)
    per = nll(trace.logits, y)
    grads = backward(params, trace, y)
    return per, grads.d_input


def sgd_step(params: ClassifierParams, grads, lr, momentum=0.0, velocity=None):
    """In-place momentum SGD: ``v <- m v - lr g``; ``theta <- theta + v``.

    ``grads`` is a ``Gradients`` or a name->array dict. Returns the velocity dict.
    """
    if lr <= 0 or not 0 <= momentum < 1:
        raise ConfigError("need lr > 0 and 0 <= momentum < 1")
    g = grads.d_params if isinstance(grads, Gradients) else grads
    for name in PARAM_NAMES:
        if not np.all(np.isfinite(g[name])):
            raise TrainingError(f"non-finite gradient for {name}")
    if velocity is None:
        velocity = {name: np.zeros_like(getattr(params, name)) for name in PARAM_NAMES}
    for name in PARAM_NAMES:
        v = momentum * velocity[name] - lr * g[name]
        velocity[name] = v
        setattr(params, name, getattr(params, name) + v)
    params.version += 1
    return velocity


def adam_step(params: ClassifierParams, grads, lr, state=None, beta1=0.9, beta2=0.999, eps=1e-8):
    """In-place Adam update with bias correction. Returns the optimizer state."""
    if lr <= 0:
        raise ConfigError("need lr > 0")
    g = grads.d_params if isinstance(grads, Gradients) else grads
    for name in PARAM_NAMES:
        if not np.all(np.isfinite(g[name])):
            raise TrainingError(f"non-finite gradient for {name}")
    if state is None:
        state = {"step": 0}
        for name in PARAM_NAMES:
            state["m:" + name] = np.zeros_like(getattr(params, name))
            state["v:" + name] = np.zeros_like(getattr(params, name))
    state["step"] += 1
    t = state["step"]
    for name in PARAM_NAMES:
        m = beta1 * state["m:" + name] + (1 - beta1) * g[name]
        v = beta2 * state["v:" + name] + (1 - beta2) * g[name] ** 2
        state["m:" + name], state["v:" + name] = m, v
        update = lr * (m / (1 - beta1 ** t)) / (np.sqrt(v / (1 - beta2 ** t)) + eps)
        setattr(params, name, getattr(params, name) - update)
    params.version += 1
    return state
