"""Compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Times the inner OFUL loop (``play_rounds``) and the scalar primitives on the
same inputs through both backends, checks the outputs agree, and prints the
speedup. Also times one full preset replication per backend in a subprocess.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from meml_bandits import _kernels_py

try:
    from meml_bandits import _kernels
except ImportError:  # extension not built
    _kernels = None


def _episode_inputs(T, K, d, seed=0):
    rng = np.random.default_rng(seed)
    actions = rng.normal(size=(T, K, d))
    actions /= np.linalg.norm(actions, axis=2, keepdims=True)
    return dict(
        actions=np.ascontiguousarray(actions),
        noise=rng.normal(0, 0.1, size=T),
        theta=rng.normal(size=d),
        bias=rng.normal(size=d),
        forced=np.full(T, -1, dtype=np.int64),
    )


def _play(mod, inp, lam=1.0):
    T, _, d = inp["actions"].shape
    gram, inv, resp = np.zeros((d, d)), np.eye(d) / lam, np.zeros(d)
    chosen, rewards, regret = np.empty(T, np.int64), np.empty(T), np.empty(T)
    mod.play_rounds(inp["actions"], inp["noise"], inp["theta"], inp["bias"], inp["forced"],
                    gram, inv, resp, lam, 0.1, 1.0, 1.0 / T, 0.5, 0, 256, chosen, rewards, regret)
    return chosen, regret


def bench_episode(T, K, d, repeat):
    inp = _episode_inputs(T, K, d)
    ref_chosen, ref_regret = _play(_kernels_py, inp)
    row = {"T": T, "K": K, "d": d}
    for name, mod in (("python", _kernels_py), ("cython", _kernels)):
        if mod is None:
            continue
        chosen, regret = _play(mod, inp)
        assert np.array_equal(chosen, ref_chosen), "backends chose different arms"
        assert np.allclose(regret, ref_regret, atol=1e-12)
        n = max(1, int(2000 // T))
        row[name] = min(timeit.repeat(lambda: _play(mod, inp), number=n, repeat=repeat)) / n
    return row


def bench_rank_one(d, repeat, n=2000):
    rng = np.random.default_rng(1)
    xs = rng.normal(size=(n, d))
    out = {"d": d}
    for name, mod in (("python", _kernels_py), ("cython", _kernels)):
        if mod is None:
            continue

        def run():
            gram, inv, resp = np.zeros((d, d)), np.eye(d), np.zeros(d)
            for x in xs:
                mod.rank_one_update(gram, inv, resp, x, 1.0)
        out[name] = min(timeit.repeat(run, number=1, repeat=repeat)) / n
    return out


def bench_preset(name):
    times = {}
    for backend, flag in (("python", "1"), ("cython", "0")):
        env = dict(os.environ, MEML_BANDITS_PURE_PYTHON=flag)
        code = ("import time; from meml_bandits.cli import run_scenario; "
                "from meml_bandits.config import parse_config, preset_path; import tempfile; "
                f"c = parse_config(preset_path('{name}')); t = time.perf_counter(); "
                "run_scenario(c, tempfile.mkdtemp(), replications=2); "
                "print(time.perf_counter() - t)")
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                             text=True, check=True)
        times[backend] = float(res.stdout.strip().splitlines()[-1])
    return times


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled extension not available; timing the fallback only")

    print(f"{'play_rounds':<14}{'T':>6}{'K':>5}{'d':>4}{'python s':>12}{'cython s':>12}{'speedup':>9}")
    for T, K, d in [(70, 10, 2), (500, 10, 2), (500, 50, 8), (2000, 20, 16)]:
        r = bench_episode(T, K, d, args.repeat)
        cy = r.get("cython", float("nan"))
        print(f"{'':<14}{T:>6}{K:>5}{d:>4}{r['python']:>12.3e}{cy:>12.3e}{r['python'] / cy:>9.1f}")

    print(f"\n{'rank_one_update':<16}{'d':>4}{'python s':>12}{'cython s':>12}{'speedup':>9}")
    for d in (2, 8, 32):
        r = bench_rank_one(d, args.repeat)
        cy = r.get("cython", float("nan"))
        print(f"{'':<16}{d:>4}{r['python']:>12.3e}{cy:>12.3e}{r['python'] / cy:>9.1f}")

    if _kernels is not None:
        t = bench_preset("fig-left")
        print(f"\nfig-left, 2 replications: python {t['python']:.2f} s, "
              f"cython {t['cython']:.2f} s, speedup {t['python'] / t['cython']:.1f}x")


if __name__ == "__main__":
    main()
