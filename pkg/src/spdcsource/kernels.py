"""Time-tag kernels used by the coincidence Monte Carlo.

Each kernel has a numba implementation (``*_jit``) and a vectorised numpy
implementation (``*_numpy``). The public names dispatch to the jitted version
unless numba is missing or disabled through ``SPDCSOURCE_DISABLE_NUMBA``.
Both paths return identical results; ``benchmarks/bench_kernels.py`` compares
their speed.
"""

import numpy as np

from ._accel import HAVE_NUMBA, njit


@njit(cache=True, nogil=True)
def count_coincidences_jit(t_a, t_b, id_a, id_b, window):
    # two-pointer sweep over sorted streams; counts every pair with |dt| <= window
    n_b = t_b.shape[0]
    lo = 0
    total = 0
    true = 0
    for i in range(t_a.shape[0]):
        t = t_a[i]
        while lo < n_b and t_b[lo] < t - window:
            lo += 1
        j = lo
        while j < n_b and t_b[j] <= t + window:
            total += 1
            if id_a[i] >= 0 and id_a[i] == id_b[j]:
                true += 1
            j += 1
    return total, true


def count_coincidences_numpy(t_a, t_b, id_a, id_b, window):
    lo = np.searchsorted(t_b, t_a - window, side="left")
    hi = np.searchsorted(t_b, t_a + window, side="right")
    total = int(np.sum(hi - lo))
    # a true partner shares the pair id; ids are unique per stream so at most one match
    common, ia, ib = np.intersect1d(id_a[id_a >= 0], id_b[id_b >= 0], assume_unique=True,
                                    return_indices=True)
    ia = np.flatnonzero(id_a >= 0)[ia]
    ib = np.flatnonzero(id_b >= 0)[ib]
    true = int(np.sum(np.abs(t_a[ia] - t_b[ib]) <= window))
    return total, true


def count_coincidences(t_a, t_b, id_a, id_b, window):
    """Count pairs (i, j) with ``|t_a[i] - t_b[j]| <= window``.

    ``t_a``/``t_b`` are sorted int64 timestamps. ``id_a``/``id_b`` label the
    emission event of each detection (-1 for dark counts); pairs sharing an id
    are true coincidences. Returns ``(total, true)``.
    """
    t_a = np.ascontiguousarray(t_a, dtype=np.int64)
    t_b = np.ascontiguousarray(t_b, dtype=np.int64)
    id_a = np.ascontiguousarray(id_a, dtype=np.int64)
    id_b = np.ascontiguousarray(id_b, dtype=np.int64)
    window = np.int64(window)
    if HAVE_NUMBA:
        total, true = count_coincidences_jit(t_a, t_b, id_a, id_b, window)
        return int(total), int(true)
    return count_coincidences_numpy(t_a, t_b, id_a, id_b, window)


@njit(cache=True, nogil=True)
def merge_streams_jit(t_a, t_b):
    n_a = t_a.shape[0]
    n_b = t_b.shape[0]
    times = np.empty(n_a + n_b, dtype=np.int64)
    channels = np.empty(n_a + n_b, dtype=np.uint8)
    i = 0
    j = 0
    for k in range(n_a + n_b):
        if j >= n_b or (i < n_a and t_a[i] <= t_b[j]):
            times[k] = t_a[i]
            channels[k] = 0
            i += 1
        else:
            times[k] = t_b[j]
            channels[k] = 1
            j += 1
    return times, channels


def merge_streams_numpy(t_a, t_b):
    times = np.concatenate([t_a, t_b])
    channels = np.concatenate([np.zeros(len(t_a), np.uint8), np.ones(len(t_b), np.uint8)])
    order = np.argsort(times, kind="stable")
    return times[order], channels[order]


def merge_streams(t_a, t_b):
    """Merge two sorted timestamp arrays into one stream tagged with channel 0/1.

    Ties keep channel 0 first, so the merged stream is ordered by (time, channel).
    """
    t_a = np.ascontiguousarray(t_a, dtype=np.int64)
    t_b = np.ascontiguousarray(t_b, dtype=np.int64)
    if HAVE_NUMBA:
        return merge_streams_jit(t_a, t_b)
    return merge_streams_numpy(t_a, t_b)
