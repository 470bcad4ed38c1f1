"""Array kernels for the counting checkers and the N-Counter simulator.

Two interchangeable backends: numba ``@njit`` (default when importable)
and plain numpy. ``QQC_KERNELS=numpy`` forces the fallback.

Traces are encoded along their arrangement as ``kind`` (0 call, 1 return)
and ``rank`` (1-based specification index of the event's operation).
A violation scan returns the arrangement position of the leftmost
offending return, or -1.
"""

from __future__ import annotations

import os

import numpy as np

LIN, QQC = 0, 1

_requested = os.environ.get("QQC_KERNELS", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"QQC_KERNELS must be 'numba' or 'numpy', not {_requested!r}")

try:
    if _requested != "numba":
        raise ImportError
    from numba import njit
except ImportError:  # pragma: no cover - exercised via the env flag
    njit = None

BACKEND = "numba" if njit is not None else "numpy"


# -- numpy ------------------------------------------------------------------------


def _first_violation_np(kind: np.ndarray, rank: np.ndarray, mode: int) -> int:
    n = kind.shape[0]
    if n == 0:
        return -1
    is_call = kind == 0
    pos = np.arange(n)
    if mode == QQC:
        seen = np.cumsum(is_call)
        bad = (~is_call) & (seen < rank)
    else:
        m = int(rank.max())
        call_pos = np.full(m + 1, n, dtype=np.int64)
        call_pos[0] = -1
        call_pos[rank[is_call]] = pos[is_call]
        latest = np.maximum.accumulate(call_pos)
        bad = (~is_call) & (latest[rank] > pos)
    hits = np.flatnonzero(bad)
    return int(hits[0]) if hits.size else -1


def _batch_np(kinds: np.ndarray, ranks: np.ndarray, lengths: np.ndarray, mode: int) -> np.ndarray:
    b, width = kinds.shape
    if b == 0:
        return np.zeros(0, dtype=np.int64)
    live = np.arange(width)[None, :] < lengths[:, None]
    is_call = (kinds == 0) & live
    is_ret = (kinds == 1) & live
    pos = np.broadcast_to(np.arange(width), (b, width))
    if mode == QQC:
        seen = np.cumsum(is_call, axis=1)
        bad = is_ret & (seen < ranks)
    else:
        m = int(ranks.max()) if ranks.size else 0
        call_pos = np.full((b, m + 1), width, dtype=np.int64)
        call_pos[:, 0] = -1
        rows, cols = np.nonzero(is_call)
        call_pos[rows, ranks[rows, cols]] = cols
        latest = np.maximum.accumulate(call_pos, axis=1)
        bad = is_ret & (np.take_along_axis(latest, ranks.astype(np.int64), axis=1) > pos)
    any_bad = bad.any(axis=1)
    first = np.argmax(bad, axis=1)
    return np.where(any_bad, first, -1).astype(np.int64)


def _ncounter_np(width: int, is_dec: np.ndarray, schedules: np.ndarray):
    """Simulate one N-Counter per schedule row; each op takes two steps."""
    b_count, steps = schedules.shape
    n_ops = is_dec.shape[0]
    rows = np.arange(b_count)
    bal = np.zeros(b_count, dtype=np.int64)
    cells = np.broadcast_to(np.arange(width), (b_count, width)).copy()
    phase = np.zeros((b_count, n_ops), dtype=np.int64)
    slot = np.zeros((b_count, n_ops), dtype=np.int64)
    out = np.zeros((b_count, n_ops), dtype=np.int64)
    t1 = np.zeros((b_count, n_ops), dtype=np.int64)
    t2 = np.zeros((b_count, n_ops), dtype=np.int64)
    for k in range(steps):
        op = schedules[:, k]
        dec = is_dec[op]
        first = phase[rows, op] == 0
        # first atomic: claim a slot and move the balancer
        i_inc = bal
        i_dec = (bal - 1) % width
        i = np.where(dec, i_dec, i_inc)
        slot[rows, op] = np.where(first, i, slot[rows, op])
        bal = np.where(first, np.where(dec, i_dec, (bal + 1) % width), bal)
        t1[rows, op] = np.where(first, k, t1[rows, op])
        # second atomic: touch the leaf cell
        s = slot[rows, op]
        cur = cells[rows, s]
        new = np.where(dec, cur - width, cur + width)
        second = ~first
        cells[rows, s] = np.where(second, new, cur)
        out[rows, op] = np.where(second, np.where(dec, new, cur), out[rows, op])
        t2[rows, op] = np.where(second, k, t2[rows, op])
        phase[rows, op] += 1
    return out, t1, t2


# -- numba ----------------------------------------------------------------------------

if njit is not None:

    @njit(cache=True)
    def _first_violation_nb(kind, rank, mode):
        n = kind.shape[0]
        m = 0
        for k in range(n):
            if rank[k] > m:
                m = rank[k]
        seen = np.zeros(m + 2, dtype=np.bool_)
        calls = 0
        closed = 0  # spec calls 1..closed have all been seen
        for k in range(n):
            if kind[k] == 0:
                calls += 1
                seen[rank[k]] = True
                while closed + 1 <= m and seen[closed + 1]:
                    closed += 1
            else:
                j = rank[k]
                if mode == 1:
                    if calls < j:
                        return k
                elif closed < j:
                    return k
        return -1

    @njit(cache=True)
    def _batch_nb(kinds, ranks, lengths, mode):
        b = kinds.shape[0]
        out = np.empty(b, dtype=np.int64)
        for r in range(b):
            n = lengths[r]
            out[r] = _first_violation_nb(kinds[r, :n], ranks[r, :n], mode)
        return out

    @njit(cache=True)
    def _ncounter_nb(width, is_dec, schedules):
        b_count, steps = schedules.shape
        n_ops = is_dec.shape[0]
        out = np.zeros((b_count, n_ops), dtype=np.int64)
        t1 = np.zeros((b_count, n_ops), dtype=np.int64)
        t2 = np.zeros((b_count, n_ops), dtype=np.int64)
        cells = np.empty(width, dtype=np.int64)
        phase = np.empty(n_ops, dtype=np.int64)
        slot = np.empty(n_ops, dtype=np.int64)
        for r in range(b_count):
            bal = 0
            for i in range(width):
                cells[i] = i
            phase[:] = 0
            for k in range(steps):
                op = schedules[r, k]
                if phase[op] == 0:
                    if is_dec[op]:
                        bal = (bal - 1) % width
                        slot[op] = bal
                    else:
                        slot[op] = bal
                        bal = (bal + 1) % width
                    t1[r, op] = k
                else:
                    s = slot[op]
                    if is_dec[op]:
                        cells[s] -= width
                        out[r, op] = cells[s]
                    else:
                        out[r, op] = cells[s]
                        cells[s] += width
                    t2[r, op] = k
                phase[op] += 1
        return out, t1, t2


# -- public entry points ---------------------------------------------------------------


def first_violation(kind, rank, mode: int, backend: str | None = None) -> int:
    kind = np.ascontiguousarray(kind, dtype=np.int8)
    rank = np.ascontiguousarray(rank, dtype=np.int64)
    if (backend or BACKEND) == "numba" and njit is not None:
        return int(_first_violation_nb(kind, rank, mode))
    return _first_violation_np(kind, rank, mode)


def batch_first_violation(kinds, ranks, lengths, mode: int, backend: str | None = None) -> np.ndarray:
    """Row-wise :func:`first_violation` over padded 2-D encodings."""
    kinds = np.ascontiguousarray(kinds, dtype=np.int8)
    ranks = np.ascontiguousarray(ranks, dtype=np.int64)
    lengths = np.ascontiguousarray(lengths, dtype=np.int64)
    if (backend or BACKEND) == "numba" and njit is not None:
        return _batch_nb(kinds, ranks, lengths, mode)
    return _batch_np(kinds, ranks, lengths, mode)


def ncounter_batch(width: int, is_dec, schedules, backend: str | None = None):
    """Run an N-Counter for every schedule row.

    Returns ``(values, t1, t2)``, each of shape (runs, ops).
    """
    is_dec = np.ascontiguousarray(is_dec, dtype=np.bool_)
    schedules = np.ascontiguousarray(schedules, dtype=np.int64)
    if (backend or BACKEND) == "numba" and njit is not None:
        return _ncounter_nb(int(width), is_dec, schedules)
    return _ncounter_np(int(width), is_dec, schedules)
