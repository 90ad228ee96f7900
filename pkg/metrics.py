"""
Distance Metrics Module
Pairwise test-case distances (Manhattan, Jaccard, NCD), the NCD multiset score,
min-aggregated distance to a set, and the distance matrix with its on-disk cache
"""

import hashlib
import json
import logging
import os
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from multiprocessing.pool import ThreadPool
from typing import Callable, Dict, Iterable, Optional, Sequence, Tuple, Union

import lz4.frame
import numpy as np
import pandas as pd

from corpus import NumericVector, ShingleSet, TestCase, TestSuite, to_numeric_vector, to_shingle_set

logger = logging.getLogger(__name__)

METRICS = ('manhattan', 'jaccard', 'ncd')
NCD_FLAG_THRESHOLD = 1.2


class MetricError(ValueError):
    pass


class Compressor(ABC):
    """Compressed length C(x) used by NCD and NCD multisets.

    `window` is the compressor's back-reference distance in bytes; history older
    than that cannot influence how new data compresses. None means unbounded.
    """
    name: str = 'compressor'
    window: Optional[int] = None

    @abstractmethod
    def compress_len(self, data: bytes) -> int:
        ...

    @property
    def params(self) -> Dict:
        return {'name': self.name}


class Lz4Compressor(Compressor):
    """LZ4 frame format at the fast default level with a fixed parameter set.

    Frames carry no content size and no checksums so the output length is a pure
    function of the input.
    """
    name = 'lz4'
    window = 64 * 1024

    def __init__(self, compression_level: int = 0):
        self.compression_level = compression_level

    def compress_len(self, data: bytes) -> int:
        return len(lz4.frame.compress(
            data,
            compression_level=self.compression_level,
            block_size=lz4.frame.BLOCKSIZE_MAX64KB,
            block_linked=True,
            content_checksum=False,
            block_checksum=False,
            store_size=False,
        ))

    @property
    def params(self) -> Dict:
        return {'name': self.name, 'compression_level': self.compression_level}


class CallableCompressor(Compressor):
    """Adapter for injecting any `bytes -> compressed bytes` function."""

    def __init__(self, name: str, compress: Callable[[bytes], bytes], window: Optional[int] = None):
        self.name = name
        self._compress = compress
        self.window = window

    def compress_len(self, data: bytes) -> int:
        return len(self._compress(data))


COMPRESSORS = {'lz4': Lz4Compressor}


def get_compressor(name: Union[str, Compressor, None] = None) -> Compressor:
    if isinstance(name, Compressor):
        return name
    key = (name or 'lz4').lower()
    if key not in COMPRESSORS:
        raise MetricError(f"Unknown compressor '{name}'; available: {', '.join(sorted(COMPRESSORS))}")
    return COMPRESSORS[key]()


def compressed_length(case: TestCase, c: Compressor) -> int:
    return case.cached(('clen', c.name, json.dumps(c.params, sort_keys=True)),
                       lambda: c.compress_len(case.source))


def manhattan(a: NumericVector, b: NumericVector) -> float:
    """Sum of absolute byte differences; the shorter vector is zero-padded."""
    x = a.values.astype(np.int64)
    y = b.values.astype(np.int64)
    if x.shape[0] < y.shape[0]:
        x = np.pad(x, (0, y.shape[0] - x.shape[0]))
    elif y.shape[0] < x.shape[0]:
        y = np.pad(y, (0, x.shape[0] - y.shape[0]))
    return float(np.abs(x - y).sum())


def jaccard_distance(a: ShingleSet, b: ShingleSet) -> float:
    if a.k != b.k:
        raise MetricError(f"Cannot compare shingle sets with k={a.k} and k={b.k}")
    if len(a) == 0 and len(b) == 0:
        return 0.0
    common = np.intersect1d(a.codes, b.codes, assume_unique=True).shape[0]
    union = len(a) + len(b) - common
    return (union - common) / union


def _ncd_from_lengths(a: bytes, b: bytes, ca: int, cb: int, c: Compressor) -> float:
    # canonical concatenation order keeps ncd symmetric for order-sensitive compressors
    first, second = (a, b) if a <= b else (b, a)
    cab = c.compress_len(first + second)
    denominator = max(ca, cb)
    if denominator == 0:
        return 0.0
    value = (cab - min(ca, cb)) / denominator
    if value > NCD_FLAG_THRESHOLD:
        logger.warning("NCD value %.4f exceeds %.1f (compressor %s)", value, NCD_FLAG_THRESHOLD, c.name)
    return value


def ncd(a: bytes, b: bytes, c: Optional[Compressor] = None) -> float:
    """Normalized compression distance (C(ab) - min(C(a), C(b))) / max(C(a), C(b))."""
    c = c or get_compressor()
    return _ncd_from_lengths(a, b, c.compress_len(a), c.compress_len(b), c)


def trim_history(context: bytes, c: Compressor) -> bytes:
    if c.window is not None and len(context) > c.window:
        return context[-c.window:]
    return context


def marginal_compressed_size(context: bytes, candidate: bytes, c: Compressor, base: Optional[int] = None) -> float:
    """C(context + candidate) - C(context), with context cut to the compressor's window."""
    context = trim_history(context, c)
    if base is None:
        base = c.compress_len(context)
    score = c.compress_len(context + candidate) - base
    if score < 0:
        logger.warning("Negative marginal compressed size %d (compressor %s)", score, c.name)
    return float(score)


def ncd_ms_score(candidate: TestCase, prioritized: Sequence[TestCase], c: Optional[Compressor] = None) -> float:
    """Marginal compressed size of the candidate given the already prioritized tests."""
    c = c or get_compressor()
    context = b''.join(case.source for case in prioritized)
    return marginal_compressed_size(context, candidate.source, c)


@dataclass
class DistanceMatrix:
    """Symmetric pairwise distances under one metric, rows and columns in `ids` order."""
    metric: str
    params: Dict
    ids: Tuple[str, ...]
    d: np.ndarray
    build_seconds: float = 0.0
    _index: Dict[str, int] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.ids = tuple(self.ids)
        n = len(self.ids)
        if self.d.shape != (n, n):
            raise MetricError(f"Matrix shape {self.d.shape} does not match {n} ids")
        self._index = {test_id: i for i, test_id in enumerate(self.ids)}

    def __len__(self) -> int:
        return len(self.ids)

    def index_of(self, test_id: str) -> int:
        try:
            return self._index[test_id]
        except KeyError:
            raise MetricError(f"Test id '{test_id}' is not in the {self.metric} matrix")

    def distance(self, a: str, b: str) -> float:
        return float(self.d[self.index_of(a), self.index_of(b)])

    def reordered(self, ids: Sequence[str]) -> np.ndarray:
        """Sub-matrix with rows and columns in the given id order."""
        positions = [self.index_of(test_id) for test_id in ids]
        return self.d[np.ix_(positions, positions)]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.d, index=list(self.ids), columns=list(self.ids))

    def to_csv(self, path: str):
        frame = self.to_frame()
        frame.index.name = 'id'
        frame.to_csv(path, lineterminator='\n')

    def save(self, path: str):
        meta = json.dumps({'metric': self.metric, 'params': self.params, 'ids': list(self.ids)})
        with open(path, 'wb') as f:
            np.savez_compressed(f, d=self.d, meta=np.array(meta))

    @classmethod
    def load(cls, path: str) -> 'DistanceMatrix':
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data['meta']))
            return cls(meta['metric'], meta['params'], tuple(meta['ids']), data['d'].copy())


class MatrixCache:
    """Binary cache of distance matrices keyed by (metric, params, suite content hash)."""

    def __init__(self, directory: str):
        self.directory = directory
        os.makedirs(directory, exist_ok=True)

    def _path(self, suite: TestSuite, metric: str, params: Dict) -> str:
        key = json.dumps({'metric': metric, 'params': params, 'suite': suite.content_hash()}, sort_keys=True)
        return os.path.join(self.directory, hashlib.sha256(key.encode('utf-8')).hexdigest() + '.npz')

    def get(self, suite: TestSuite, metric: str, params: Dict) -> Optional[DistanceMatrix]:
        path = self._path(suite, metric, params)
        if not os.path.isfile(path):
            return None
        try:
            matrix = DistanceMatrix.load(path)
        except (OSError, ValueError, KeyError) as e:
            logger.warning("Ignoring unreadable matrix cache entry %s: %s", path, e)
            return None
        logger.info("Loaded %s matrix from cache %s", metric, path)
        return matrix

    def put(self, suite: TestSuite, matrix: DistanceMatrix):
        matrix.save(self._path(suite, matrix.metric, matrix.params))


def distance_to_set(t: Union[TestCase, str], s: Iterable[Union[TestCase, str]], matrix: DistanceMatrix) -> float:
    """min{d(t, u) | u in s, u != t}."""
    t_id = t.id if isinstance(t, TestCase) else t
    others = [u.id if isinstance(u, TestCase) else u for u in s]
    others = [u for u in others if u != t_id]
    if not others:
        raise MetricError(f"Distance of '{t_id}' to a set requires at least one other test")
    row = matrix.index_of(t_id)
    return float(min(matrix.d[row, matrix.index_of(u)] for u in others))


def _pair_function(suite: TestSuite, metric: str, k: int, c: Compressor) -> Callable[[int, int], float]:
    cases = suite.cases
    if metric == 'manhattan':
        vectors = [to_numeric_vector(case) for case in cases]
        return lambda i, j: manhattan(vectors[i], vectors[j])
    if metric == 'jaccard':
        shingles = [to_shingle_set(case, k) for case in cases]
        return lambda i, j: jaccard_distance(shingles[i], shingles[j])
    lengths = [compressed_length(case, c) for case in cases]
    return lambda i, j: _ncd_from_lengths(cases[i].source, cases[j].source, lengths[i], lengths[j], c)


def metric_params(metric: str, k: int = 5, compressor: Union[str, Compressor, None] = None) -> Dict:
    if metric == 'manhattan':
        return {}
    if metric == 'jaccard':
        return {'k': k}
    if metric == 'ncd':
        return {'compressor': get_compressor(compressor).params}
    raise MetricError(f"Unknown metric '{metric}'; expected one of {', '.join(METRICS)}")


def build_distance_matrix(suite: TestSuite, metric: str, k: int = 5,
                          compressor: Union[str, Compressor, None] = None,
                          jobs: int = 1, cache: Optional[MatrixCache] = None) -> DistanceMatrix:
    """Full symmetric matrix; only the upper triangle is computed."""
    params = metric_params(metric, k, compressor)
    started = time.perf_counter()
    if cache is not None:
        cached = cache.get(suite, metric, params)
        if cached is not None:
            cached.build_seconds = time.perf_counter() - started
            return cached

    n = len(suite)
    d = np.zeros((n, n), dtype=np.float64)
    pair = _pair_function(suite, metric, k, get_compressor(compressor))

    def fill_row(i: int):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = pair(i, j)

    if jobs > 1 and n > 2:
        with ThreadPool(jobs) as pool:
            pool.map(fill_row, range(n), chunksize=max(1, n // (jobs * 8)))
    else:
        for i in range(n):
            fill_row(i)

    matrix = DistanceMatrix(metric, params, tuple(suite.ids), d, time.perf_counter() - started)
    logger.info("Built %dx%d %s matrix in %.3fs (jobs=%d)", n, n, metric, matrix.build_seconds, jobs)
    if cache is not None:
        cache.put(suite, matrix)
    return matrix
