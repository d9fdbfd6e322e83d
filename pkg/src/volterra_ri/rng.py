"""Deterministic random streams.

Every random draw in the package comes from a generator keyed by
``(root_seed, stream, index)`` through :class:`numpy.random.SeedSequence`'s
spawn key.  ``index`` is the Monte Carlo path number, so the draws of path
``p`` never depend on how paths are batched or which worker simulates them.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

# stream ids; fixed forever, changing them changes every emitted number
STREAM_MORTALITY = 0
STREAM_ASSET = 1
STREAM_CLAIM_ARRIVAL = 2
STREAM_CLAIM_SIZE = 3

THREADS_ENV = "VOLTERRA_RI_THREADS"


def path_rng(root_seed, stream, index):
    """Generator for one (stream, path) pair."""
    ss = np.random.SeedSequence(int(root_seed), spawn_key=(int(stream), int(index)))
    return np.random.default_rng(ss)


def normals(root_seed, stream, indices, size):
    """Standard normals of shape ``(len(indices), size)``, one row per path."""
    out = np.empty((len(indices), size))
    for row, idx in enumerate(indices):
        out[row] = path_rng(root_seed, stream, idx).standard_normal(size)
    return out


def uniforms(root_seed, stream, indices, size):
    out = np.empty((len(indices), size))
    for row, idx in enumerate(indices):
        out[row] = path_rng(root_seed, stream, idx).random(size)
    return out


def worker_count():
    """Worker cap from ``VOLTERRA_RI_THREADS`` (0 or unset means one per CPU)."""
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return n


def batched(n_paths, batch_size):
    """Split ``range(n_paths)`` into consecutive index arrays."""
    return [np.arange(s, min(s + batch_size, n_paths)) for s in range(0, n_paths, batch_size)]


def map_batches(fn, batches):
    """Apply ``fn`` to each batch, possibly in threads; results keep batch order."""
    workers = min(worker_count(), len(batches))
    if workers <= 1:
        return [fn(b) for b in batches]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, batches))
