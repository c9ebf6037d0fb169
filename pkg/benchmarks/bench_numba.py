"""Compare the numba kernels against the pure-numpy fallback.

The flag is read at import time, so each path runs in its own interpreter:

    python benchmarks/bench_numba.py [--repeat 5]
"""
import argparse
import json
import os
import subprocess
import sys
import time


def _best(fn, repeat):
    fn()  # warm-up (includes JIT compilation)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def child(repeat):
    import numpy as np

    from tactipush._jit import USE_NUMBA
    from tactipush.bench.scenario import build_trial
    from tactipush.simworld.models import World
    from tactipush.simworld.rollout import ZeroCommand, rollout
    from tactipush.simworld.state import advance
    from tactipush.tactile.render import MarkerLayout, splat

    trial = build_trial("Zone3", "linear_bang_bang", 0)
    world = trial.world
    twist = np.array([0.0, 0.05, 0.0, 0.0, 0.0, 0.0])

    def physics():
        st = trial.initial.copy()
        advance(st, world, twist, world.physics_dt, 1000)

    layout = MarkerLayout(resolution=64)
    rng = np.random.default_rng(0)
    cy = rng.uniform(0, 64, 64)
    cx = rng.uniform(0, 64, 64)

    def render():
        for _ in range(60):
            splat(cy, cx, layout.dot_radius, 64, use_numba=True)

    def full():
        rollout(trial.initial, ZeroCommand(), 0.5, world=World(), layout=MarkerLayout(resolution=32))

    out = {"numba": USE_NUMBA, "physics_1000_ticks": _best(physics, repeat),
           "splat_loops_60_frames": _best(render, repeat), "rollout_0.5s": _best(full, repeat)}
    print(json.dumps(out))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--child", action="store_true")
    args = ap.parse_args()
    if args.child:
        child(args.repeat)
        return
    results = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, TACTIPUSH_NO_NUMBA=flag)
        proc = subprocess.run([sys.executable, __file__, "--child", "--repeat", str(args.repeat)],
                              env=env, capture_output=True, text=True, check=True)
        results[label] = json.loads(proc.stdout.strip().splitlines()[-1])
    keys = [k for k in results["numba"] if k != "numba"]
    print(f"{'kernel':<22}{'numba (s)':>12}{'numpy (s)':>12}{'speedup':>10}")
    for k in keys:
        a, b = results["numba"][k], results["numpy"][k]
        print(f"{k:<22}{a:>12.4f}{b:>12.4f}{b / a:>9.1f}x")


if __name__ == "__main__":
    main()
