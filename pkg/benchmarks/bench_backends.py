"""Wall-clock comparison of the compiled and interpreted engine backends.

Usage: python benchmarks/bench_backends.py [--cycles N] [--rate R] [--repeat K]
"""

from __future__ import annotations

import argparse
import statistics
import time

from hetnoc import _backend
from hetnoc.config import expand_mesh, parse_config
from hetnoc.sim import run_synthetic

CONFIG = """[Config]
simulationTime = {cycles}
flitsPerPacket = 8
benchmark = synthetic
seed = 1

[Synthetic]
restarts = 1
warmupStart = 0
warmupDuration = 0
warmupRate = {rate}
runRateMin = {rate}
runRateMax = {rate}
runRateStep = 0.01
runStartAfterWarmup = 0
runDuration = {cycles}
numCores = 1
simDir = sim

[Network]
z = 1
x = 4
y = 4
routing = XYZ
clockDelay = 1
bufferDepth = 4
vcCount = 4
"""


def time_backend(backend: str, cycles: int, rate: float, repeat: int):
    cfg, shorthand = parse_config(CONFIG.format(cycles=cycles, rate=rate))
    graph = expand_mesh(shorthand)
    times, result = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = run_synthetic(graph, cfg, rate, backend=backend)
        times.append(time.perf_counter() - t0)
    return statistics.median(times), result


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--cycles", type=int, default=10_000)
    parser.add_argument("--rate", type=float, default=0.08)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    backends = ["python"]
    if _backend.compiled_available():
        backends.insert(0, "compiled")
    else:
        print("compiled extension not built; timing the python backend only")
    rows = {}
    for name in backends:
        rows[name] = time_backend(name, args.cycles, args.rate, args.repeat)
    print(f"4x4 mesh, {args.cycles} cycles, rate {args.rate}, median of {args.repeat}")
    print(f"{'backend':<10}{'seconds':>10}{'cycles/s':>12}{'flits':>10}")
    for name, (sec, res) in rows.items():
        print(f"{name:<10}{sec:>10.3f}{args.cycles / sec:>12.0f}{res.ejected_flits:>10}")
    if len(rows) == 2:
        (c, rc), (p, rp) = rows["compiled"], rows["python"]
        same = rc.ejected_flits == rp.ejected_flits and rc.latency.flit.total == rp.latency.flit.total
        print(f"speedup {p / c:.1f}x, identical results: {same}")


if __name__ == "__main__":
    main()
