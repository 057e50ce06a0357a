#!/usr/bin/env python3
"""Benchmark: numba kernels vs the pure-numpy im2col fallback.

Times the convolution and pooling kernels on the shapes the toy models
actually use, plus one training-step composite. Run from the repo root:

    python3 benchmarks/bench_kernels.py [--repeats 20]

The kernel backend is fixed per process via JNDNET_KERNELS, so this
script re-executes itself once per backend and merges the tables.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

CASES = [
    # (name, batch, H, cin, cout, kernel, stride)
    ("enc 3x3 s1 32px", 12, 32, 16, 16, 3, 1),
    ("enc 3x3 s1 16px", 12, 16, 32, 32, 3, 1),
    ("branch 3x3 s4", 12, 16, 16, 32, 3, 4),
    ("head 1x1", 12, 32, 32, 3, 1, 1),
    ("dec 3x3 64px", 12, 64, 16, 16, 3, 1),
]


def time_call(fn, repeats):
    fn()  # warm-up (includes JIT compilation on the numba path)
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats * 1000.0


def run_backend(repeats):
    from jndnet.nn import backend as K

    rng = np.random.default_rng(0)
    rows = {}
    for name, n, h, cin, cout, k, s in CASES:
        x = rng.normal(size=(n, h, h, cin)).astype(np.float32)
        w = rng.normal(size=(k, k, cin, cout)).astype(np.float32)
        b = np.zeros(cout, dtype=np.float32)
        pad = (k - 1) // 2
        y = K.conv2d_forward(x, w, b, s, pad)
        gy = rng.normal(size=y.shape).astype(np.float32)
        rows[f"{name} fwd"] = time_call(lambda: K.conv2d_forward(x, w, b, s, pad), repeats)
        rows[f"{name} bwd_in"] = time_call(
            lambda: K.conv2d_backward_input(gy, w, s, pad, x.shape), repeats
        )
        rows[f"{name} bwd_w"] = time_call(
            lambda: K.conv2d_backward_weights(x, gy, s, pad, w.shape), repeats
        )

    x = rng.normal(size=(12, 32, 32, 32)).astype(np.float32)
    _, idx = K.maxpool2x2_forward(x)
    gy = rng.normal(size=(12, 16, 16, 32)).astype(np.float32)
    rows["maxpool fwd"] = time_call(lambda: K.maxpool2x2_forward(x), repeats)
    rows["maxpool bwd"] = time_call(lambda: K.maxpool2x2_backward(gy, idx, x.shape), repeats)

    # one full classifier training step at the acceptance scale
    from jndnet.datagen import make_synthetic_dataset, make_ptc_batch
    from jndnet.models import BackboneConfig, PtcModel
    from jndnet.nn import AdamState, adam_step, focal_loss

    cfg = BackboneConfig(input_size=32, encoder_blocks=3, base_channels=16,
                         multiscale_channels=32, convs_per_block=2, bn_momentum=0.9)
    model = PtcModel(cfg, seed=0)
    records = make_synthetic_dataset(6, size=32, seed=0)
    batch = make_ptc_batch(records, 12, np.random.default_rng(0), 32)
    xs = np.stack([s.input for s in batch]).astype(np.float32)
    ts = np.stack([s.target for s in batch]).astype(np.float32)
    state = AdamState()
    drop_rng = np.random.default_rng(1)

    def step():
        probs, cache = model.forward(xs, training=True, rng=drop_rng)
        _, grad = focal_loss(probs, ts)
        model.zero_grads()
        model.backward(grad.astype(np.float32), cache)
        adam_step(model.params(), state, 1e-4)

    rows["classifier train step"] = time_call(step, max(3, repeats // 4))
    return rows


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=20)
    parser.add_argument("--backend", help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.backend:
        print(json.dumps(run_backend(args.repeats)))
        return

    results = {}
    for backend in ("numba", "numpy"):
        env = dict(os.environ, JNDNET_KERNELS=backend)
        out = subprocess.run(
            [sys.executable, __file__, "--repeats", str(args.repeats), "--backend", backend],
            env=env, capture_output=True, text=True, check=True,
        )
        results[backend] = json.loads(out.stdout.strip().splitlines()[-1])

    names = list(results["numba"])
    width = max(len(n) for n in names)
    print(f"{'kernel':<{width}}  {'numba (ms)':>12}  {'numpy (ms)':>12}  {'speedup':>8}")
    for name in names:
        a, b = results["numba"][name], results["numpy"][name]
        print(f"{name:<{width}}  {a:12.3f}  {b:12.3f}  {b / a:8.2f}x")


if __name__ == "__main__":
    main()
