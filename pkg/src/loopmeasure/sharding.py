"""Deterministic work sharding.

Sample batches are split into a fixed number of independently seeded shards
regardless of the worker count; workers only schedule shards. Results are
concatenated in shard order, so a run is bit-identical for any --jobs value.
"""

from __future__ import annotations

import multiprocessing
import os

import numpy as np


def spawn_seeds(seed, n_shards: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n_shards)


def shard_counts(n: int, n_shards: int) -> list[int]:
    return [n // n_shards + (1 if i < n % n_shards else 0) for i in range(n_shards)]


def default_jobs() -> int:
    env = os.environ.get("LOOPS_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            return 1
    return 1


def map_shards(worker, shard_args: list, jobs: int) -> list:
    """Run worker over shard argument tuples, serially or with a fork pool."""
    if jobs <= 1 or len(shard_args) <= 1:
        return [worker(a) for a in shard_args]
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(processes=min(jobs, len(shard_args))) as pool:
        return pool.map(worker, shard_args, chunksize=1)
