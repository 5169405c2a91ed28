"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--events 1000]

Prints one row per kernel with the best-of-``repeat`` time per call for each
available backend, then the same for a full event stream (graph updates plus
representation updates) run with each backend swapped in.
"""
import argparse
import timeit

import numpy as np

from svcrec.dynrep import DyRepParams, process_event
from svcrec.graph import CoInvocationEvent, GraphState
from svcrec.numerics import kernels

KERNELS = ("max_aggregate", "attention_row_update", "adam_update", "scaled_softplus",
           "scaled_softplus_grad", "softmax_masked")


def kernel_cases(rng):
    d = 32
    W_h = rng.normal(size=(d, d))
    nbr_z = rng.uniform(-1, 1, size=(12, d))
    w = rng.dirichlet(np.ones(12))
    row = rng.dirichlet(np.ones(20))
    n = 128 * 128
    p, g = rng.normal(size=n), rng.normal(size=n)
    m, v = np.zeros(n), np.zeros(n)
    return {
        "max_aggregate (12x32)": lambda k: k.max_aggregate(W_h, nbr_z, w),
        "attention_row_update (20)": lambda k: k.attention_row_update(row.copy(), 3, 0.05, 0.06, 0.7, False),
        "adam_update (16384)": lambda k: k.adam_update(p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 10, 100.0),
        "scaled_softplus_grad": lambda k: k.scaled_softplus_grad(0.37, 1.3),
        "scaled_softplus": lambda k: k.scaled_softplus(0.37, 1.3),
    }


def event_stream(n_events, seed=0, n=30, d=16):
    rng = np.random.default_rng(seed)
    Z = rng.uniform(-0.9, 0.9, size=(n, d))
    params = DyRepParams.init(d, rng)
    pairs = [tuple(int(x) for x in rng.choice(n, size=2, replace=False)) for _ in range(n_events)]

    def go():
        state = GraphState([f"s{i}" for i in range(n)], Z)
        for t, (u, v) in enumerate(pairs, start=1):
            process_event(state, params, CoInvocationEvent(u, v, float(t)))
    return go


def use_backend(mod):
    for name in KERNELS:
        setattr(kernels, name, getattr(mod, name))


def best(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=2000, help="calls per timing for the kernels")
    ap.add_argument("--events", type=int, default=1000)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    names = list(backends)
    if "cython" not in backends:
        print("compiled kernels not built: only the numpy fallback is timed")
    cases = kernel_cases(np.random.default_rng(0))
    head = "".join(f"{n:>14s}" for n in names)
    print(f"{'kernel':30s}{head}{'speedup':>10s}")
    for label, fn in cases.items():
        t = {n: best(lambda: fn(backends[n]), args.repeat, args.number) for n in names}
        ratio = t["python"] / t["cython"] if "cython" in t else float("nan")
        print(f"{label:30s}" + "".join(f"{t[n] * 1e6:12.2f}us" for n in names) + f"{ratio:9.1f}x")

    stream = event_stream(args.events)
    saved = {n: getattr(kernels, n) for n in KERNELS}
    t = {}
    try:
        for n in names:
            use_backend(backends[n])
            t[n] = best(stream, max(1, args.repeat // 2), 1)
    finally:
        for k, f in saved.items():
            setattr(kernels, k, f)
    ratio = t["python"] / t["cython"] if "cython" in t else float("nan")
    print(f"{f'event stream ({args.events})':30s}" + "".join(f"{t[n] * 1e3:12.2f}ms" for n in names)
          + f"{ratio:9.1f}x")


if __name__ == "__main__":
    main()
