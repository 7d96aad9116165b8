"""Compare the compiled and plain-numpy rendering paths.

Backend selection happens at import time, so each backend runs in its own
subprocess with FIELDFUSE_NUMBA set accordingly. The parent process collects
timings, checks that both backends produce the same pixels, and prints a
table.

Usage:
    python3 benchmarks/bench_render.py [--repeats 3] [--backends numpy,numba]
"""

import argparse
import json
import os
import subprocess
import sys
import time


def _run_workloads(repeats):
    import numpy as np

    import fieldfuse as ff
    from fieldfuse._accel import NUMBA_ENABLED
    from fieldfuse.blend import BlendConfig, blend_image
    from fieldfuse.experiments import demo_scene, two_field_degradation_scene
    from fieldfuse.field import render_image
    from fieldfuse.geometry import look_at

    def timed(fn):
        fn()  # warmup; also triggers JIT compilation on the numba path
        best = min(
            (lambda t0: (fn(), time.perf_counter() - t0)[1])(time.perf_counter())
            for _ in range(repeats)
        )
        return best

    results = {"backend": "numba" if NUMBA_ENABLED else "numpy", "workloads": {}}

    scene = demo_scene()
    geom = ff.ImageGeometry(256, 256)
    model = ff.default_from_shape("pinhole", geom)
    pose = look_at((0.0, 2.3, 0.7), (0.0, 0.0, 0.0))

    def render_workload():
        return render_image(scene, model, pose, geom, n_samples=192)

    seconds = timed(render_workload)
    results["workloads"]["render 256x256 n=192"] = {
        "seconds": seconds,
        "rays_per_s": geom.width * geom.height / seconds,
    }

    _, fields = two_field_degradation_scene()
    bgeom = ff.ImageGeometry(128, 128)
    bmodel = ff.default_from_shape("pinhole", bgeom)
    bpose = look_at((0.0, 2.2, 0.3), (0.0, 0.0, 0.0))
    cfg = BlendConfig(method="idwsample", gamma=10.0, n_samples=128)

    def blend_workload():
        return blend_image(fields, bmodel, bpose, bgeom, cfg)

    seconds = timed(blend_workload)
    results["workloads"]["blend 128x128 n=128 idwsample"] = {
        "seconds": seconds,
        "rays_per_s": bgeom.width * bgeom.height / seconds,
    }

    # fingerprint for the cross-backend agreement check
    small_geom = ff.ImageGeometry(48, 36)
    small_model = ff.default_from_shape("pinhole", small_geom)
    img = render_image(scene, small_model, pose, small_geom, n_samples=64)
    results["fingerprint"] = {
        "color": img.color.reshape(-1).tolist(),
        "accumulation": float(img.accumulation.sum()),
    }
    return results


def _worker(repeats):
    print(json.dumps(_run_workloads(repeats)))


def _parent(backends, repeats):
    import numpy as np

    reports = {}
    for backend in backends:
        env = dict(os.environ)
        env["FIELDFUSE_NUMBA"] = "1" if backend == "numba" else "0"
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__),
             "--worker", "--repeats", str(repeats)],
            env=env, capture_output=True, text=True, check=True,
        )
        reports[backend] = json.loads(proc.stdout.splitlines()[-1])
        assert reports[backend]["backend"] == backend, (
            f"worker selected {reports[backend]['backend']}, wanted {backend}"
        )

    names = list(next(iter(reports.values()))["workloads"])
    width = max(len(n) for n in names)
    header = f"{'workload':<{width}}  " + "".join(
        f"{b + ' (s)':>14}" for b in backends
    )
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name in names:
        times = [reports[b]["workloads"][name]["seconds"] for b in backends]
        row = f"{name:<{width}}  " + "".join(f"{t:>14.4f}" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.1f}x"
        print(row)

    if len(backends) == 2:
        a, b = (reports[x]["fingerprint"] for x in backends)
        drift = np.abs(
            np.asarray(a["color"]) - np.asarray(b["color"])
        ).max()
        acc_drift = abs(a["accumulation"] - b["accumulation"])
        print(f"\nbackend agreement: max |color delta| {drift:.3e}, "
              f"|accumulation delta| {acc_drift:.3e}")
        if drift > 1e-9 or acc_drift > 1e-9:
            raise SystemExit("backends disagree beyond 1e-9")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=3,
                        help="timing repeats per workload (best is kept)")
    parser.add_argument("--backends", default="numpy,numba",
                        help="comma-separated subset of numpy,numba")
    parser.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()
    if args.worker:
        _worker(args.repeats)
        return
    backends = [b.strip() for b in args.backends.split(",") if b.strip()]
    for b in backends:
        if b not in ("numpy", "numba"):
            parser.error(f"unknown backend {b!r}")
    _parent(backends, args.repeats)


if __name__ == "__main__":
    main()
