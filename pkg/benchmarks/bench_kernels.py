"""Compare the compiled kernel lane against the numpy fallback.

The lane is chosen once at import, so this script re-executes itself in a
subprocess per lane (NANOCNN_KERNELS forces the choice) and merges the
timings into one table. Each case reports the best of several repeats.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def best_of(fn, repeats):
    fn()  # warmup
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def run_cases(repeats):
    from nanocnn import kernels, ops
    from nanocnn.autograd import Node
    from nanocnn.models import build_model, init_parameters
    from nanocnn.train import Adam

    rng = np.random.default_rng(0)
    results = {"lane": kernels.BACKEND, "cases": {}}

    x = rng.standard_normal((8, 32, 56, 56)).astype(np.float32)
    results["cases"]["im2col 8x32x56x56 k3"] = best_of(
        lambda: kernels.im2col(x, 3, 3, 1, 1), repeats)

    cols = kernels.im2col(x, 3, 3, 1, 1)
    results["cases"]["col2im 8x32x56x56 k3"] = best_of(
        lambda: kernels.col2im(cols, 32, 56, 56, 3, 3, 1, 1), repeats)

    p = rng.standard_normal((8, 64, 56, 56)).astype(np.float32)
    results["cases"]["maxpool fwd 8x64x56x56"] = best_of(
        lambda: kernels.maxpool_forward(p, 2, 2, 0), repeats)

    pooled, idx = kernels.maxpool_forward(p, 2, 2, 0)
    g = np.ones_like(pooled)
    results["cases"]["maxpool bwd 8x64x56x56"] = best_of(
        lambda: kernels.maxpool_backward(g, idx, 56, 56), repeats)

    cx = Node(rng.standard_normal((8, 64, 28, 28)).astype(np.float32))
    cw = Node(rng.standard_normal((128, 64, 3, 3)).astype(np.float32) * 0.05)
    results["cases"]["conv2d fwd 64->128 @28"] = best_of(
        lambda: ops.conv2d(cx, cw, padding=1), repeats)

    model = init_parameters(build_model("custom_cnn", 3), seed=0)
    opt = Adam(model.trainable_parameters(), lr=1e-3)
    batch = rng.standard_normal((4, 3, 64, 64)).astype(np.float32)
    targets = np.array([0, 1, 2, 0])

    def train_step():
        model.zero_grad()
        loss = ops.softmax_cross_entropy(
            model.forward(batch, training=True), targets)
        loss.backward()
        opt.step()

    results["cases"]["train step custom @64 b4"] = best_of(train_step, repeats)
    return results


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--lane", choices=["compiled", "numpy"],
                        help="internal: run this lane and print json")
    args = parser.parse_args(argv)

    if args.lane:
        print(json.dumps(run_cases(args.repeats)))
        return 0

    lanes = {}
    for lane in ("compiled", "numpy"):
        env = dict(os.environ, NANOCNN_KERNELS=lane)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__),
             "--lane", lane, "--repeats", str(args.repeats)],
            capture_output=True, text=True, env=env)
        if proc.returncode != 0:
            print(f"{lane} lane unavailable:\n{proc.stderr}", file=sys.stderr)
            continue
        data = json.loads(proc.stdout.strip().split("\n")[-1])
        lanes[data["lane"]] = data["cases"]

    if "compiled" not in lanes or "numpy" not in lanes:
        only = next(iter(lanes), None)
        if only:
            print(f"only the {only} lane ran; no comparison possible")
        return 1

    width = max(len(k) for k in lanes["numpy"])
    print(f"{'case':<{width}}  {'compiled':>10}  {'numpy':>10}  {'speedup':>7}")
    for case in lanes["numpy"]:
        c = lanes["compiled"][case]
        n = lanes["numpy"][case]
        print(f"{case:<{width}}  {c * 1e3:>8.2f}ms  {n * 1e3:>8.2f}ms  "
              f"{n / c:>6.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
