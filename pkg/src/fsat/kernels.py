"""Hot numeric kernels, each with a numba path and a pure-numpy path.

``overlap_add`` and ``biquad`` bind to the numba versions unless
``FSAT_DISABLE_NUMBA=1`` is set. The convolutions always bind to the numpy
path: the einsum contraction goes through BLAS and beats the scalar numba
loops at these channel counts (see ``benchmarks/bench_kernels.py``). Both
paths are importable directly for testing and benchmarking.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import lfilter

from ._accel import USE_NUMBA, njit

# --------------------------------------------------------------------------
# overlap-add


def overlap_add_np(frames, hop):
    """Sum ``frames[..., t, :]`` into a signal at offsets ``t * hop``.

    ``hop`` must divide the frame length.
    """
    *lead, n_frames, n = frames.shape
    m = n // hop
    out = np.zeros((*lead, n_frames + m - 1, hop), dtype=frames.dtype)
    blocks = frames.reshape(*lead, n_frames, m, hop)
    for i in range(m):
        out[..., i:i + n_frames, :] += blocks[..., :, i, :]
    return out.reshape(*lead, (n_frames + m - 1) * hop)


@njit
def _overlap_add_nb(frames, hop):
    b, n_frames, n = frames.shape
    out = np.zeros((b, (n_frames - 1) * hop + n), dtype=frames.dtype)
    for j in range(b):
        for t in range(n_frames):
            off = t * hop
            for i in range(n):
                out[j, off + i] += frames[j, t, i]
    return out


def overlap_add_nb(frames, hop):
    lead = frames.shape[:-2]
    flat = np.ascontiguousarray(frames.reshape(-1, *frames.shape[-2:]))
    out = _overlap_add_nb(flat, hop)
    return out.reshape(*lead, out.shape[-1])


# --------------------------------------------------------------------------
# strided 1-D convolution (cross-correlation), layout (batch, channel, time)


def conv1d_forward_np(x, w, b, stride):
    k = w.shape[2]
    cols = sliding_window_view(x, k, axis=2)[:, :, ::stride, :]
    y = np.einsum("bclk,fck->bfl", cols, w, optimize=True)
    return y + b[None, :, None]


def conv1d_backward_np(x, w, dy, stride, need_dx=True, need_dw=True):
    """Return ``(dx, dw, db)`` for ``y = conv1d_forward(x, w, b, stride)``.

    Skipped outputs come back as ``None``.
    """
    k = w.shape[2]
    n_out = dy.shape[2]
    dw = db = dx = None
    if need_dw:
        cols = sliding_window_view(x, k, axis=2)[:, :, ::stride, :]
        dw = np.einsum("bclk,bfl->fck", cols, dy, optimize=True)
        db = dy.sum(axis=(0, 2))
    if not need_dx:
        return dx, dw, db
    dcols = np.einsum("bfl,fck->bclk", dy, w, optimize=True)
    dx = np.zeros_like(x)
    span = stride * (n_out - 1) + 1
    for i in range(k):
        dx[:, :, i:i + span:stride] += dcols[:, :, :, i]
    return dx, dw, db


@njit
def _conv1d_forward_nb(x, w, b, stride):
    nb, nc, _ = x.shape
    nf, _, k = w.shape
    n_out = (x.shape[2] - k) // stride + 1
    y = np.empty((nb, nf, n_out), dtype=x.dtype)
    for s in range(nb):
        for f in range(nf):
            for t in range(n_out):
                acc = b[f]
                base = t * stride
                for c in range(nc):
                    for i in range(k):
                        acc += w[f, c, i] * x[s, c, base + i]
                y[s, f, t] = acc
    return y


@njit
def _conv1d_backward_nb(x, w, dy, stride):
    nb, nc, _ = x.shape
    nf, _, k = w.shape
    n_out = dy.shape[2]
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    db = np.zeros(nf, dtype=x.dtype)
    for s in range(nb):
        for f in range(nf):
            for t in range(n_out):
                g = dy[s, f, t]
                if g == 0.0:
                    continue
                db[f] += g
                base = t * stride
                for c in range(nc):
                    for i in range(k):
                        dw[f, c, i] += g * x[s, c, base + i]
                        dx[s, c, base + i] += g * w[f, c, i]
    return dx, dw, db


def conv1d_forward_nb(x, w, b, stride):
    return _conv1d_forward_nb(np.ascontiguousarray(x), np.ascontiguousarray(w), b, stride)


def conv1d_backward_nb(x, w, dy, stride, need_dx=True, need_dw=True):
    dx, dw, db = _conv1d_backward_nb(np.ascontiguousarray(x), np.ascontiguousarray(w),
                                     np.ascontiguousarray(dy), stride)
    return (dx if need_dx else None), (dw if need_dw else None), (db if need_dw else None)


# --------------------------------------------------------------------------
# second-order IIR section, direct form I, coefficients normalized by a0


def biquad_np(b, a, x):
    return lfilter(b, a, x, axis=-1)


@njit
def _biquad_nb(b, a, x):
    out = np.empty_like(x)
    b0, b1, b2 = b[0] / a[0], b[1] / a[0], b[2] / a[0]
    a1, a2 = a[1] / a[0], a[2] / a[0]
    for j in range(x.shape[0]):
        x1 = x2 = y1 = y2 = 0.0
        for n in range(x.shape[1]):
            xn = x[j, n]
            yn = b0 * xn + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2
            x2, x1 = x1, xn
            y2, y1 = y1, yn
            out[j, n] = yn
    return out


def biquad_nb(b, a, x):
    x = np.asarray(x, dtype=np.float64)
    flat = np.ascontiguousarray(x.reshape(-1, x.shape[-1]))
    out = _biquad_nb(np.asarray(b, dtype=np.float64), np.asarray(a, dtype=np.float64), flat)
    return out.reshape(x.shape)


conv1d_forward = conv1d_forward_np
conv1d_backward = conv1d_backward_np
if USE_NUMBA:
    overlap_add = overlap_add_nb
    biquad = biquad_nb
else:
    overlap_add = overlap_add_np
    biquad = biquad_np

BACKEND = "numba" if USE_NUMBA else "numpy"
