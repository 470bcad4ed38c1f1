"""Compare the numba and numpy kernel backends on random workloads.

    python3 benchmarks/bench_kernels.py [--traces 20000] [--events 16] [--schedules 20000] [--repeat 5]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from qqc import _kernels as K


def random_batch(rng: np.random.Generator, count: int, events: int):
    kinds = rng.integers(0, 2, size=(count, events), dtype=np.int8)
    ranks = rng.integers(1, events // 2 + 1, size=(count, events), dtype=np.int64)
    lengths = rng.integers(events // 2, events + 1, size=count, dtype=np.int64)
    return kinds, ranks, lengths


def random_schedules(rng: np.random.Generator, count: int, ops: int) -> np.ndarray:
    base = np.repeat(np.arange(ops, dtype=np.int64), 2)
    return np.stack([rng.permutation(base) for _ in range(count)])


def bench(label: str, fn, repeat: int) -> float:
    fn()  # compile / warm up
    best = min(timeit.repeat(fn, number=1, repeat=repeat))
    print(f"{label:<42s} {best * 1e3:9.2f} ms")
    return best


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--traces", type=int, default=20_000)
    ap.add_argument("--events", type=int, default=16)
    ap.add_argument("--schedules", type=int, default=20_000)
    ap.add_argument("--ops", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    kinds, ranks, lengths = random_batch(rng, args.traces, args.events)
    scheds = random_schedules(rng, args.schedules, args.ops)
    is_dec = np.zeros(args.ops, dtype=bool)

    backends = ["numpy"] + (["numba"] if K.BACKEND == "numba" else [])
    print(f"default backend: {K.BACKEND}")
    times: dict[tuple[str, str], float] = {}
    for b in backends:
        for mode, name in ((K.LIN, "LIN"), (K.QQC, "QQC")):
            times[(b, name)] = bench(
                f"batch_first_violation {name} [{b}]",
                lambda b=b, mode=mode: K.batch_first_violation(kinds, ranks, lengths, mode, backend=b),
                args.repeat,
            )
        times[(b, "ncounter")] = bench(
            f"ncounter_batch width=2 [{b}]",
            lambda b=b: K.ncounter_batch(2, is_dec, scheds, backend=b),
            args.repeat,
        )

    if "numba" in backends:
        for task in ("LIN", "QQC", "ncounter"):
            print(f"speedup {task:<9s} {times[('numpy', task)] / times[('numba', task)]:6.1f}x")
        same = np.array_equal(
            K.batch_first_violation(kinds, ranks, lengths, K.QQC, backend="numpy"),
            K.batch_first_violation(kinds, ranks, lengths, K.QQC, backend="numba"),
        )
        print(f"backends agree: {same}")


if __name__ == "__main__":
    main()
