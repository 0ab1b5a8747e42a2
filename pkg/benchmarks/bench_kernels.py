"""Compare the compiled and pure-Python kernels on the two hot paths.

    python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import statistics
import time

import numpy as np

from seqalloc import kernels
from seqalloc.policies import run_sequential
from seqalloc.prob import sample_paths
from seqalloc.sim import SimConfig, generate_instance
from seqalloc.solver import solve_static


def timed(fn, repeats):
    fn()  # warm caches (Cholesky factor, imports)
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    return statistics.median(samples) * 1e3


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    names = kernels.available()
    if "cython" not in names:
        print("compiled kernels not built; timing the Python backend only")

    cases = []
    inst200 = generate_instance(SimConfig(horizon=200), 0)
    cases.append(("static solve T=200", lambda b: solve_static(inst200, backend=b)))
    for T in (100, 200):
        inst = generate_instance(SimConfig(horizon=T), 0)
        path = sample_paths(inst.model, 1, 1)[0]
        cases.append((f"sequential episode T={T}",
                      lambda b, inst=inst, path=path: run_sequential(inst, path, backend=b)))

    header = f"{'case':<26}" + "".join(f"{n + ' ms':>14}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for label, fn in cases:
        ms = [timed(lambda: fn(kernels.get(n)), args.repeats) for n in names]
        line = f"{label:<26}" + "".join(f"{v:>14.3f}" for v in ms)
        if len(ms) == 2:
            line += f"{ms[1] / ms[0]:>9.1f}x"
        print(line)
    np.testing.assert_allclose(
        solve_static(inst200, backend=kernels.get(names[0])).alloc,
        solve_static(inst200, backend=kernels.get(names[-1])).alloc,
        rtol=1e-9, atol=1e-9 * inst200.limit,
    )


if __name__ == "__main__":
    main()
