from concurrent.futures import ThreadPoolExecutor

import numpy as np


def batched(items, batch_size=256):
    """Yield lists of at most `batch_size` consecutive items."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be positive, got {batch_size}")
    batch = []
    for item in items:
        batch.append(item)
        if len(batch) >= batch_size:
            yield batch
            batch = []

    # the last batch may be smaller than batch size
    if len(batch) > 0:
        yield batch


def parallel_map(fn, items, threads=1):
    """Ordered map over `items`, on a thread pool when `threads` > 1.

    Results come back in input order whatever the worker count, so any
    reduction over them is deterministic.
    """
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def make_rng(seed, *stream):
    """Independent numpy Generator for a named sub-stream of `seed`."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(s) for s in stream]]))
