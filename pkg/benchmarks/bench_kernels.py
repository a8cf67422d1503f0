"""Compare the numba and pure-numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--no-train]

Kernel timings call both backends directly through ``_kernels.BACKENDS``.
The end-to-end timing trains the same small conv net twice in
subprocesses, once with SPARSEPROX_DISABLE_NUMBA=1.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from sparseprox import _kernels
from sparseprox.prox import ProxStep, tl1_threshold

TRAIN_SNIPPET = """
import time
import numpy as np
from sparseprox import _kernels, nn, trainer
from sparseprox.data import Dataset
rng = np.random.default_rng(0)
x = rng.random((512, 8, 8, 1))
y = (x[:, :4].sum(axis=(1, 2, 3)) > x[:, 4:].sum(axis=(1, 2, 3))).astype(int)
ds = Dataset(x, y, 2)
model = nn.build_network((8, 8, 1), [{"kind": "conv2d", "filters": 8, "kernel_size": 3},
                                     {"kind": "dense", "units": 64}, {"kind": "dense", "units": 2}], seed=0)
cfg = trainer.TrainConfig(lam=1e-4, learning_rate=0.1, batch_size=16, max_iterations=40, loss_delta_tol=0, a=0.1)
trainer.train(model, ds, cfg)  # warm up / compile
t = time.perf_counter()
cfg = trainer.TrainConfig(lam=1e-4, learning_rate=0.1, batch_size=16, max_iterations=320, loss_delta_tol=0, a=0.1)
trainer.train(model, ds, cfg)
print(_kernels.BACKEND, time.perf_counter() - t)
"""


def bench(fn, repeat):
    fn()  # compile
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_table(repeat):
    rng = np.random.default_rng(0)
    W = rng.normal(scale=0.1, size=(512, 512))
    step = ProxStep(1e-3, 0.1)
    t = tl1_threshold(step)
    x = rng.random((64, 28, 28, 8))
    cols = _kernels.BACKENDS["numpy"]["im2col"](x, 3)
    cases = {
        "tl1_prox 512x512": lambda be: (lambda: be["tl1_prox_array"](W, step.beta, step.a, t)),
        "im2col 64x28x28x8 k3": lambda be: (lambda: be["im2col"](x, 3)),
        "col2im 64x28x28x8 k3": lambda be: (lambda: be["col2im"](cols, x.shape, 3)),
    }
    backends = [b for b in ("numpy", "numba") if b in _kernels.BACKENDS]
    print(f"{'kernel':<24}" + "".join(f"{b:>12}" for b in backends) + "     speedup")
    for name, make in cases.items():
        times = [bench(make(_kernels.BACKENDS[b]), repeat) for b in backends]
        speed = f"{times[0] / times[1]:8.1f}x" if len(times) == 2 else ""
        print(f"{name:<24}" + "".join(f"{1e3 * s:10.2f}ms" for s in times) + "   " + speed)


def train_table():
    for flag in ("1", "0"):
        env = dict(os.environ, SPARSEPROX_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", TRAIN_SNIPPET], env=env, capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        print(f"train 320 steps [{backend}]: {float(secs):.2f}s")


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--no-train", action="store_true")
    args = p.parse_args()
    if not _kernels.HAS_NUMBA:
        print("numba is not importable; only the numpy backend can be timed")
    kernel_table(args.repeat)
    if not args.no_train:
        train_table()


if __name__ == "__main__":
    main()
