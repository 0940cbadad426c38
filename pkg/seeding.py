from collections.abc import Callable
from concurrent.futures import ProcessPoolExecutor
from typing import TypeVar

import numpy as np
from loguru import logger

T = TypeVar("T")

MAX_SEED = 2**64 - 1


def trial_generator(master_seed: int, *key: int) -> np.random.Generator:
    """Counter-based stream keyed by (master_seed, *key), e.g. (trial, walker)."""
    if not 0 <= master_seed <= MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {master_seed}")
    sequence = np.random.SeedSequence(master_seed, spawn_key=tuple(key))
    return np.random.Generator(np.random.Philox(sequence))


def run_trials(fn: Callable[[int], T], trials: int, workers: int = 1) -> list[T]:
    """Evaluate fn(0..trials-1), optionally on a process pool; results keep trial order."""
    if workers <= 1 or trials <= 1:
        return [fn(index) for index in range(trials)]

    chunksize = max(1, trials // (workers * 4))
    logger.debug("Running trials in parallel", trials=trials, workers=workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(trials), chunksize=chunksize))
