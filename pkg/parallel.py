"""Helpers de paralelismo deterministico.

Os resultados nunca dependem do numero de workers: o map preserva a ordem
dos itens e cada item recebe um gerador derivado apenas de (seed mestre, chaves).
"""
import hashlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar, Union

import numpy as np

T = TypeVar('T')
R = TypeVar('R')

Key = Union[int, str]


def _key_to_int(key: Key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f'chave de seed negativa: {key}')
        return int(key)
    digest = hashlib.sha256(str(key).encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'little')


def derive_seed_sequence(master_seed: int, *keys: Key) -> np.random.SeedSequence:
    return np.random.SeedSequence([_key_to_int(master_seed)] + [_key_to_int(k) for k in keys])


def derive_rng(master_seed: int, *keys: Key) -> np.random.Generator:
    """Generator for the job identified by ``keys`` under ``master_seed``."""
    return np.random.default_rng(derive_seed_sequence(master_seed, *keys))


def derive_seed(master_seed: int, *keys: Key) -> int:
    """Plain 63-bit integer seed for the job identified by ``keys``."""
    state = derive_seed_sequence(master_seed, *keys).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def parallel_map(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> List[R]:
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
