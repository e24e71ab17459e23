"""Time the numba and pure-numpy kernel paths on training-sized inputs.

    python benchmarks/bench_kernels.py [--repeat 20]

Each kernel is warmed up once (which triggers JIT compilation) before timing.
Outputs of the two paths are checked for agreement before any timing is shown.
"""
import argparse
import timeit

import numpy as np

from fsat import kernels
from fsat.augment import peaking_coefficients


def cases(rng):
    batch, length = 16, 16000
    x = rng.standard_normal((batch, 1, length))
    w1 = rng.standard_normal((8, 1, 31))
    b1 = np.zeros(8)
    y1 = kernels.conv1d_forward_np(x, w1, b1, 4)
    dy1 = rng.standard_normal(y1.shape)
    frames = rng.standard_normal((batch, 128, 512))
    b, a = peaking_coefficients(1000.0, 6.0, 1.0, 16000)
    clip = rng.standard_normal((batch, length))
    return {
        "conv1 forward": (kernels.conv1d_forward_np, kernels.conv1d_forward_nb, (x, w1, b1, 4)),
        "conv1 backward": (kernels.conv1d_backward_np, kernels.conv1d_backward_nb, (x, w1, dy1, 4)),
        "overlap-add": (kernels.overlap_add_np, kernels.overlap_add_nb, (frames, 128)),
        "biquad": (kernels.biquad_np, kernels.biquad_nb, (b, a, clip)),
    }


def _close(a, b):
    if isinstance(a, tuple):
        return all(_close(u, v) for u, v in zip(a, b))
    return np.allclose(a, b, rtol=1e-9, atol=1e-9)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    print(f"active backend for overlap-add/biquad: {kernels.BACKEND}")
    print(f"{'kernel':<16}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, (f_np, f_nb, inputs) in cases(np.random.default_rng(args.seed)).items():
        ref, got = f_np(*inputs), f_nb(*inputs)
        if not _close(ref, got):
            raise SystemExit(f"{name}: numba and numpy paths disagree")
        t_np = min(timeit.repeat(lambda: f_np(*inputs), number=1, repeat=args.repeat))
        t_nb = min(timeit.repeat(lambda: f_nb(*inputs), number=1, repeat=args.repeat))
        print(f"{name:<16}{1e3 * t_np:>10.2f}{1e3 * t_nb:>10.2f}{t_np / t_nb:>8.2f}x")


if __name__ == "__main__":
    main()
