import os
import random
import subprocess
import sys

import numpy as np
import pytest

from qqc import _kernels
from qqc._kernels import LIN, QQC, batch_first_violation, first_violation, ncounter_batch
from qqc.structures import Op, run_schedule

from conftest import random_arrangement

BACKENDS = ["numpy"] + (["numba"] if _kernels.njit is not None else [])


def encode(arr, perm):
    kind = np.array([1 if r else 0 for _, r in arr], dtype=np.int8)
    rank = np.array([perm[k] for k, _ in arr], dtype=np.int64)
    return kind, rank


def ref_first(kind, rank, mode):
    for p in range(len(kind)):
        if kind[p] == 0:
            continue
        j = rank[p]
        calls = [rank[q] for q in range(p) if kind[q] == 0]
        if mode == QQC and len(calls) < j:
            return p
        if mode == LIN and not set(range(1, j + 1)) <= set(calls):
            return p
    return -1


def corpus(count=400, seed=7):
    rng = random.Random(seed)
    out = []
    for _ in range(count):
        n = rng.randint(1, 7)
        perm = list(range(1, n + 1))
        rng.shuffle(perm)
        out.append(encode(random_arrangement(n, rng), perm))
    return out


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("mode", [LIN, QQC])
def test_first_violation_matches_reference(backend, mode):
    for kind, rank in corpus():
        assert first_violation(kind, rank, mode, backend) == ref_first(kind, rank, mode)


@pytest.mark.parametrize("mode", [LIN, QQC])
def test_batch_agrees_with_single_and_across_backends(mode):
    items = corpus(200, seed=11)
    width = max(len(k) for k, _ in items)
    kinds = np.zeros((len(items), width), dtype=np.int8)
    ranks = np.ones((len(items), width), dtype=np.int64)
    lengths = np.array([len(k) for k, _ in items])
    for r, (k, rk) in enumerate(items):
        kinds[r, : len(k)] = k
        ranks[r, : len(rk)] = rk
    want = np.array([ref_first(k, rk, mode) for k, rk in items])
    for b in BACKENDS:
        np.testing.assert_array_equal(batch_first_violation(kinds, ranks, lengths, mode, b), want)


def test_empty_inputs():
    assert first_violation(np.zeros(0), np.zeros(0), QQC, "numpy") == -1
    out = batch_first_violation(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), QQC, "numpy")
    assert out.shape == (0,)


@pytest.mark.parametrize("backend", BACKENDS)
def test_ncounter_batch_matches_step_simulator(backend):
    rng = random.Random(3)
    for width in (1, 2, 3):
        methods = ["inc", "dec", "inc", "inc", "dec"]
        ops = [Op(chr(97 + k), m) for k, m in enumerate(methods)]
        scheds = []
        for _ in range(60):
            s = [k for k in range(len(ops)) for _ in range(2)]
            rng.shuffle(s)
            scheds.append(s)
        vals, t1, t2 = ncounter_batch(width, [m == "dec" for m in methods], np.array(scheds), backend)
        for r, s in enumerate(scheds):
            rec = run_schedule("ncounter", {"N": width}, ops, [ops[k].id for k in s])
            assert [int(rec.responses[o.id]) for o in ops] == list(vals[r])
            assert [rec.t1[o.id] for o in ops] == list(t1[r])
            assert [rec.t2[o.id] for o in ops] == list(t2[r])


def _backend_in_subprocess(flag):
    env = dict(os.environ, QQC_KERNELS=flag)
    return subprocess.run(
        [sys.executable, "-c", "from qqc import _kernels; print(_kernels.BACKEND)"],
        env=env, capture_output=True, text=True,
    )


def test_env_flag_selects_numpy_fallback():
    out = _backend_in_subprocess("numpy")
    assert out.returncode == 0 and out.stdout.strip() == "numpy"


def test_env_flag_rejects_unknown_backend():
    out = _backend_in_subprocess("cuda")
    assert out.returncode != 0 and "QQC_KERNELS" in out.stderr
