"""Benchmark the compiled kernels against the numpy fallback.

Run with ``python -m tdcnn.bench``. Times the two hot kernels on
training-shaped inputs plus one full optimizer step on the default 64x64
model, once per available backend, and prints the speedups.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from . import _backend
from .arch import HiddenArch, ModelSpec, build_model, model_backward, model_forward
from .losses import AdamState, FocalLossConfig, adam_step, focal_loss
from .tensor import SeededRng, one_hot


def _time(fn, repeat: int) -> float:
    fn()  # warm up
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _bench_matmul(backend, dtype, repeat):
    rng = np.random.default_rng(0)
    a = rng.standard_normal((256, 256)).astype(dtype)
    b = rng.standard_normal((256, 256)).astype(dtype)
    return _time(lambda: backend.matmul(a, b), repeat)


def _bench_conv(backend, dtype, repeat, backward):
    rng = np.random.default_rng(1)
    xpad = rng.standard_normal((16, 16, 34, 34)).astype(dtype)
    w = rng.standard_normal((32, 16, 3, 3)).astype(dtype)
    bias = np.zeros(32, dtype=dtype)
    if not backward:
        return _time(lambda: backend.conv2d_forward(xpad, w, bias), repeat)
    gy = rng.standard_normal((16, 32, 32, 32)).astype(dtype)
    return _time(lambda: backend.conv2d_backward(xpad, w, gy), repeat)


def _bench_train_step(backend, dtype, repeat):
    previous = _backend.active
    _backend.active = backend
    try:
        spec = ModelSpec(
            input_size=(64, 64),
            hidden=HiddenArch.RECTO_TRIANGULAR,
            dtype_name="float32" if dtype == np.float32 else "float64",
        )
        model = build_model(spec, SeededRng(0))
        params = model.parameters()
        state = AdamState()
        rng = np.random.default_rng(2)
        x = rng.random((16, 1, 64, 64)).astype(dtype)
        labels = np.arange(16) % 2
        cfg = FocalLossConfig()

        def step():
            probs, caches = model_forward(model, x, train_mode=True)
            _, grad_logits = focal_loss(probs, one_hot(labels, 2, probs.dtype), cfg)
            adam_step(params, model_backward(model, caches, grad_logits), state)

        return _time(step, repeat)
    finally:
        _backend.active = previous


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="tdcnn.bench", description=__doc__)
    parser.add_argument("--repeat", type=int, default=3, help="timed repetitions (best kept)")
    parser.add_argument(
        "--precision", choices=("32", "64"), default="32", help="benchmark precision"
    )
    args = parser.parse_args(argv)
    dtype = np.float32 if args.precision == "32" else np.float64

    backends = _backend.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; benchmarking the numpy backend alone")
    cases = [
        ("matmul 256x256x256", lambda bk: _bench_matmul(bk, dtype, args.repeat)),
        ("conv fwd 16x16x32x32 -> 32ch", lambda bk: _bench_conv(bk, dtype, args.repeat, False)),
        ("conv bwd 16x16x32x32 -> 32ch", lambda bk: _bench_conv(bk, dtype, args.repeat, True)),
        ("train step 64x64 batch 16", lambda bk: _bench_train_step(bk, dtype, args.repeat)),
    ]
    name_width = max(len(name) for name, _ in cases)
    header = f"{'case':<{name_width}}  " + "".join(f"{n:>12}  " for n in backends)
    print(f"precision: float{args.precision}")
    print(header)
    print("-" * len(header))
    for case_name, runner in cases:
        times = {n: runner(bk) for n, bk in backends.items()}
        row = f"{case_name:<{name_width}}  " + "".join(
            f"{times[n] * 1e3:>10.2f}ms  " for n in backends
        )
        if "compiled" in times and "numpy" in times:
            row += f"speedup x{times['numpy'] / times['compiled']:.1f}"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
