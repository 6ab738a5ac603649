#!/usr/bin/env python3
"""Time the numba kernels against their pure-numpy fallbacks.

Kernel timings compare both implementations inside one process. The
end-to-end figure trains a short desk-scale run in two subprocesses, one
with ``FEDPLS_DISABLE_NUMBA=1``.

    python benchmarks/bench_kernels.py [--repeat 2000] [--episodes 20]
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from fedpls import kernels
from fedpls._accel import HAVE_NUMBA

E2E_SNIPPET = """
import time
from fedpls import BACKEND
from fedpls.harness import profile, run_experiment
cfg = profile("desk").replace(**{{"run.episodes": {episodes}, "run.agent": "{agent}"}})
run_experiment(cfg.replace(**{{"run.episodes": 1}}))  # warm caches and jit
t = time.perf_counter()
run_experiment(cfg)
print(BACKEND, time.perf_counter() - t)
"""


def slot_inputs(B, L, rng):
    return rng.uniform(0, 6.3, (B, L)), rng.exponential(1.0, (B, L, B)), rng.exponential(1.0, B)


def mlp_inputs(batch, rng, sizes=(5, 64, 64, 4)):
    n = sum(sizes[k] * sizes[k + 1] + sizes[k + 1] for k in range(len(sizes) - 1))
    return rng.standard_normal(n) * 0.1, sizes, rng.standard_normal((batch, sizes[0])), rng.standard_normal((batch, sizes[-1]))


def per_call_us(fn, repeat):
    fn()  # first call compiles under numba
    return min(timeit.repeat(fn, number=repeat, repeat=3)) / repeat * 1e6


def kernel_table(repeat):
    rng = np.random.default_rng(0)
    rows = []
    for B, L in ((4, 2), (25, 4)):
        p, g, e = slot_inputs(B, L, rng)
        cases = {
            "numpy": lambda: kernels.evaluate_slot_numpy(p, g, e, 1.0),
            "numba": (lambda: kernels.evaluate_slot_numba(p, g, e, 1.0)) if HAVE_NUMBA else None,
        }
        rows.append((f"evaluate_slot B={B} L={L}", cases))
    for batch in (2, 32):
        v, s, x, d = mlp_inputs(batch, rng)

        def np_pass(v=v, s=s, x=x, d=d):
            acts = kernels.mlp_forward_numpy(v, s, x)
            kernels.mlp_backward_numpy(v, s, x, acts, d)

        def nb_pass(v=v, s=s, x=x, d=d):
            acts = kernels.mlp_forward_numba(v, s, x)
            kernels.mlp_backward_numba(v, s, x, acts, d)

        rows.append((f"mlp fwd+bwd 5-64-64-4 batch={batch}", {"numpy": np_pass, "numba": nb_pass if HAVE_NUMBA else None}))

    print(f"{'kernel':<36}{'numpy us':>12}{'numba us':>12}{'speedup':>10}")
    for name, cases in rows:
        t_np = per_call_us(cases["numpy"], repeat)
        if cases["numba"] is None:
            print(f"{name:<36}{t_np:>12.2f}{'n/a':>12}{'':>10}")
            continue
        t_nb = per_call_us(cases["numba"], repeat)
        print(f"{name:<36}{t_np:>12.2f}{t_nb:>12.2f}{t_np / t_nb:>9.2f}x")


def end_to_end(episodes, agent):
    times = {}
    for disable in ("1", "0"):
        env = dict(os.environ, FEDPLS_DISABLE_NUMBA=disable)
        code = E2E_SNIPPET.format(episodes=episodes, agent=agent)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        backend, seconds = out.stdout.split()
        times[backend] = float(seconds)
    line = ", ".join(f"{k} {v:.2f} s" for k, v in times.items())
    if len(times) == 2:
        line += f" (speedup {times['numpy'] / times['numba']:.2f}x)"
    print(f"desk run, {episodes} episodes, {agent}: {line}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=2000, help="calls per timing sample")
    ap.add_argument("--episodes", type=int, default=20, help="episodes in the end-to-end comparison (0 skips it)")
    args = ap.parse_args(argv)
    kernel_table(args.repeat)
    if args.episodes > 0:
        for agent in ("reinforce", "dqn"):
            end_to_end(args.episodes, agent)


if __name__ == "__main__":
    main()
