"""Benchmark the compiled cycle engine against the pure-Python one.

Both backends execute the same engine configuration (same scene, same
scenario packets, same cycle count). The script reports wall-clock
throughput for each backend and the speedup of the compiled extension,
and verifies that the two backends produce bit-identical captures and
identical instrumentation counters, which is the correctness contract
the compiled core must honour.

Usage
-----
    python benchmarks/bench_backends.py [--cycles N] [--repeats K]
                                        [--preset NAME] [--scene FILE]

With no arguments a built-in three-reflector scene is emulated for
16384 cycles at the asic4 geometry. Pass ``--scene scenes/foo.toml``
to benchmark a scene file instead.
"""

import argparse
import math
import time

import numpy as np

from rfemu._backend import HAVE_CORE, get_engine_class
from rfemu.controlpath import PRESETS
from rfemu.scenario import Scene, frame_generate, solve_frame
from rfemu.sim_harness import build_engine_config

# three two-hop paths plus the direct path: enough links to keep every
# engine stage busy without making the pure backend take minutes; o1
# and o2 sit close enough that their transmit-side delays share a bank
# group, exercising the redundant-transfer reuse path
DEFAULT_SCENE = {
    "sample_rate_hz": 518e6,
    "scenario_length": 4096,
    "carrier_hz": 10e9,
    "objects": [
        {"id": "tx", "role": "transmitter", "position": [0, 0, 0]},
        {"id": "o1", "role": "passive", "position": [2500, 0, 0],
         "rcs": {"alpha": 0.8, "beta": 0.9}},
        {"id": "o2", "role": "passive", "position": [2570, 200, 0],
         "rcs": {"alpha": 0.7, "beta": 0.8}},
        {"id": "o3", "role": "passive", "position": [1700, -700, 0],
         "rcs": {"alpha": 0.6, "beta": 0.7}},
        {"id": "rx", "role": "receiver", "position": [5000, 0, 0]},
    ],
    "links": [
        {"src": "tx", "dst": "o1"}, {"src": "o1", "dst": "rx"},
        {"src": "tx", "dst": "o2"}, {"src": "o2", "dst": "rx"},
        {"src": "tx", "dst": "o3"}, {"src": "o3", "dst": "rx"},
        {"src": "tx", "dst": "rx"},
    ],
}


def build_config(args):
    """Solve the scene into one shared engine configuration."""
    if args.scene:
        scene = Scene.from_toml(args.scene)
    else:
        scene = Scene.from_dict(DEFAULT_SCENE)
    geometry = PRESETS[args.preset]
    n_scen = math.ceil(args.cycles / scene.scenario_length)
    frames = frame_generate(scene, n_scen)
    scps = [solve_frame(frame, scene, geometry=geometry, scenario_id=s)
            for s, frame in enumerate(frames)]
    return build_engine_config(scene, geometry, scps, args.cycles)


def bench_backend(name, config, repeats):
    """Run one backend ``repeats`` times; best wall time and one result."""
    cls = get_engine_class(name)
    best = math.inf
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = cls(config).run()
        best = min(best, time.perf_counter() - t0)
        if result is None:
            result = out
    return best, result


def results_match(a, b):
    """Bitwise capture equality plus counter equality between results."""
    if sorted(a.captures) != sorted(b.captures):
        return False
    for node in a.captures:
        ca, cb = a.captures[node], b.captures[node]
        if not (np.array_equal(ca.re_bits, cb.re_bits)
                and np.array_equal(ca.im_bits, cb.im_bits)):
            return False
    return a.counters == b.counters


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--cycles", type=int, default=16384,
                        help="emulated cycles per run (default 16384)")
    parser.add_argument("--repeats", type=int, default=3,
                        help="timed runs per backend, best kept (default 3)")
    parser.add_argument("--preset", default="asic4",
                        choices=sorted(PRESETS),
                        help="engine geometry preset (default asic4)")
    parser.add_argument("--scene", default=None,
                        help="scene TOML to benchmark instead of the "
                             "built-in three-reflector scene")
    args = parser.parse_args(argv)

    config = build_config(args)
    backends = ["pure"] + (["compiled"] if HAVE_CORE else [])
    if not HAVE_CORE:
        print("note: compiled core not importable; timing pure backend only")

    times, results = {}, {}
    for name in backends:
        times[name], results[name] = bench_backend(name, config, args.repeats)

    print(f"\n{args.cycles} cycles, {len(config.links)} links, "
          f"preset {args.preset}, best of {args.repeats}:")
    print(f"  {'backend':<10} {'time':>10} {'cycles/s':>12}")
    for name in backends:
        rate = args.cycles / times[name]
        print(f"  {name:<10} {times[name]:>9.3f}s {rate:>12.3e}")
    if "compiled" in times:
        print(f"  speedup: {times['pure'] / times['compiled']:.1f}x")
        ok = results_match(results["pure"], results["compiled"])
        print(f"  captures and counters identical: {'yes' if ok else 'NO'}")
        if not ok:
            return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
