"""
Prioritization Module
Greedy max-min pairwise ordering, NCD multiset ordering, LSH-based ordering,
random permutation and the similarity-maximizing sanity check
"""

import logging
import time
from dataclasses import dataclass, field
from multiprocessing.pool import ThreadPool
from typing import Dict, List, Optional, Union

import numpy as np

from config import DEFAULT_SHINGLE_K, normalize_technique
from corpus import TestSuite, to_shingle_set
from lsh import LshConfig, empty_signature, index, merge_signatures, minhash_signature
from metrics import (
    Compressor,
    DistanceMatrix,
    MatrixCache,
    build_distance_matrix,
    get_compressor,
    marginal_compressed_size,
    trim_history,
)

logger = logging.getLogger(__name__)

MAXIMIZE = 'maximize'
MINIMIZE = 'minimize'

# technique -> metric of its distance matrix
PAIRWISE_METRICS = {'mnh': 'manhattan', 'jac': 'jaccard', 'ncd': 'ncd'}


class PrioritizationError(ValueError):
    pass


@dataclass
class PrioritizedOrder:
    technique: str
    params: Dict
    order: List[str]
    scores: List[float]
    prep_seconds: float = 0.0
    algo_seconds: float = 0.0
    seed: Optional[int] = None
    matrix: Optional[DistanceMatrix] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(self.scores) != len(self.order):
            raise PrioritizationError(f"{len(self.scores)} scores for {len(self.order)} tests")
        if len(set(self.order)) != len(self.order):
            raise PrioritizationError("Order contains a test more than once")

    @property
    def elapsed(self) -> float:
        return self.prep_seconds + self.algo_seconds

    def __len__(self) -> int:
        return len(self.order)

    def to_dict(self) -> Dict:
        return {
            'technique': self.technique,
            'params': self.params,
            'seed': self.seed,
            'order': list(self.order),
            'scores': [float(s) for s in self.scores],
            'prep_seconds': self.prep_seconds,
            'algo_seconds': self.algo_seconds,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'PrioritizedOrder':
        try:
            order = [str(test_id) for test_id in data['order']]
        except (KeyError, TypeError):
            raise PrioritizationError("Order document has no 'order' list")
        scores = data.get('scores') or [0.0] * len(order)
        return cls(
            technique=data.get('technique', 'unknown'),
            params=data.get('params', {}),
            order=order,
            scores=[float(s) for s in scores],
            prep_seconds=float(data.get('prep_seconds', 0.0)),
            algo_seconds=float(data.get('algo_seconds', 0.0)),
            seed=data.get('seed'),
        )


def _pick(values: np.ndarray, remaining: np.ndarray, maximize: bool) -> int:
    """Best remaining index; the lowest index wins ties."""
    if maximize:
        return int(np.argmax(np.where(remaining, values, -np.inf)))
    return int(np.argmin(np.where(remaining, values, np.inf)))


def _require_suite(suite: TestSuite):
    if len(suite) == 0:
        raise PrioritizationError("Cannot prioritize an empty suite")


def prioritize_pairwise(suite: TestSuite, matrix: DistanceMatrix, mode: str = MAXIMIZE) -> PrioritizedOrder:
    """Greedy max-min ordering over a precomputed distance matrix.

    Each unselected test keeps its current minimum distance to the prioritized
    set, updated once per step.
    """
    _require_suite(suite)
    if mode not in (MAXIMIZE, MINIMIZE):
        raise PrioritizationError(f"Unknown mode '{mode}'")
    if len(matrix) != len(suite) or set(matrix.ids) != set(suite.ids):
        raise PrioritizationError(f"Distance matrix ids do not match suite '{suite.name}'")

    started = time.perf_counter()
    maximize = mode == MAXIMIZE
    ids = suite.ids
    n = len(ids)
    d = matrix.reordered(ids)

    if n == 1:
        order, scores = [0], [0.0]
    else:
        to_others = d.copy()
        np.fill_diagonal(to_others, np.inf)
        seed_scores = to_others.min(axis=1)

        remaining = np.ones(n, dtype=bool)
        first = _pick(seed_scores, remaining, maximize)
        order, scores = [first], [float(seed_scores[first])]
        remaining[first] = False
        to_selected = d[:, first].copy()
        for _ in range(1, n):
            chosen = _pick(to_selected, remaining, maximize)
            order.append(chosen)
            scores.append(float(to_selected[chosen]))
            remaining[chosen] = False
            np.minimum(to_selected, d[:, chosen], out=to_selected)

    params = {'metric': matrix.metric, 'mode': mode}
    params.update(matrix.params)
    return PrioritizedOrder(
        technique='pairwise',
        params=params,
        order=[ids[i] for i in order],
        scores=scores,
        prep_seconds=matrix.build_seconds,
        algo_seconds=time.perf_counter() - started,
        matrix=matrix,
    )


def prioritize_ncd_ms(suite: TestSuite, c: Union[str, Compressor, None] = None, jobs: int = 1) -> PrioritizedOrder:
    """Repeatedly pick the test with the largest compressed size given everything picked so far."""
    _require_suite(suite)
    c = get_compressor(c)
    started = time.perf_counter()
    n = len(suite)
    sources = [case.source for case in suite]
    remaining = list(range(n))
    context = b''
    order, scores = [], []

    pool = ThreadPool(jobs) if jobs > 1 else None
    try:
        while remaining:
            history = trim_history(context, c)
            base = c.compress_len(history)

            def score(i: int) -> float:
                return marginal_compressed_size(history, sources[i], c, base)

            values = pool.map(score, remaining) if pool is not None else [score(i) for i in remaining]
            best = 0
            for position in range(1, len(values)):
                if values[position] > values[best]:
                    best = position
            chosen = remaining.pop(best)
            order.append(chosen)
            scores.append(values[best])
            context = trim_history(history + sources[chosen], c)
    finally:
        if pool is not None:
            pool.close()
            pool.join()

    return PrioritizedOrder(
        technique='NCD-MS',
        params={'compressor': c.params, 'window': c.window},
        order=[suite[i].id for i in order],
        scores=scores,
        prep_seconds=0.0,
        algo_seconds=time.perf_counter() - started,
    )


def prioritize_lsh(suite: TestSuite, config: Optional[LshConfig] = None, k: int = DEFAULT_SHINGLE_K) -> PrioritizedOrder:
    """Candidate-set driven ordering over MinHash signatures.

    The distant set is every unselected test that shares no band with the
    cumulative signature of the prioritized set; when it runs dry the pick falls
    back to the remaining candidates. Either way the test with the largest
    estimated Jaccard distance to the cumulative signature wins.
    """
    _require_suite(suite)
    config = config or LshConfig()

    started = time.perf_counter()
    ids = suite.ids
    n = len(ids)
    signatures = [minhash_signature(to_shingle_set(case, k), config) for case in suite]
    ix = index(dict(zip(ids, signatures)), config)
    stacked = np.vstack([signature.values for signature in signatures])
    position = {test_id: i for i, test_id in enumerate(ids)}
    prep_seconds = time.perf_counter() - started

    started = time.perf_counter()
    query = empty_signature(config)
    remaining = np.ones(n, dtype=bool)
    order, scores = [], []
    fallbacks = 0
    for _ in range(n):
        candidates = np.zeros(n, dtype=bool)
        hits = [position[test_id] for test_id in ix.query(query)]
        if hits:
            candidates[hits] = True
        distant = remaining & ~candidates
        if not distant.any():
            distant = remaining
            fallbacks += 1
        agreement = np.count_nonzero(stacked == query.values, axis=1) / config.perms
        estimated = 1.0 - agreement
        chosen = _pick(estimated, distant, maximize=True)
        order.append(chosen)
        scores.append(float(estimated[chosen]))
        remaining[chosen] = False
        query = merge_signatures(query, signatures[chosen])
    logger.debug("LSH ordering fell back to the candidate set in %d of %d steps", fallbacks, n)

    params = {'k': k}
    params.update(config.to_dict())
    return PrioritizedOrder(
        technique='LSH',
        params=params,
        order=[ids[i] for i in order],
        scores=scores,
        prep_seconds=prep_seconds,
        algo_seconds=time.perf_counter() - started,
    )


def prioritize_random(suite: TestSuite, seed: int) -> PrioritizedOrder:
    started = time.perf_counter()
    permutation = np.random.default_rng(seed).permutation(len(suite))
    ids = suite.ids
    return PrioritizedOrder(
        technique='RND',
        params={'seed': seed},
        order=[ids[i] for i in permutation],
        scores=[0.0] * len(suite),
        algo_seconds=time.perf_counter() - started,
        seed=seed,
    )


@dataclass
class TechniqueOptions:
    shingle_k: int = DEFAULT_SHINGLE_K
    compressor: Union[str, Compressor, None] = None
    lsh: LshConfig = field(default_factory=LshConfig)
    sc_metric: str = 'ncd'
    jobs: int = 1
    cache: Optional[MatrixCache] = None


def prioritize(suite: TestSuite, technique: str, seed: int = 0,
               options: Optional[TechniqueOptions] = None) -> PrioritizedOrder:
    """Run one technique by its acronym (RND, MNH, JAC, NCD, NCD-MS, LSH, SC)."""
    options = options or TechniqueOptions()
    try:
        technique = normalize_technique(technique)
    except ValueError as e:
        raise PrioritizationError(str(e))
    _require_suite(suite)

    if technique == 'rnd':
        result = prioritize_random(suite, seed)
    elif technique == 'ncd-ms':
        result = prioritize_ncd_ms(suite, options.compressor, options.jobs)
    elif technique == 'lsh':
        result = prioritize_lsh(suite, options.lsh, options.shingle_k)
    else:
        if technique == 'sc':
            metric, mode = options.sc_metric, MINIMIZE
        else:
            metric, mode = PAIRWISE_METRICS[technique], MAXIMIZE
        matrix = build_distance_matrix(suite, metric, k=options.shingle_k, compressor=options.compressor,
                                       jobs=options.jobs, cache=options.cache)
        result = prioritize_pairwise(suite, matrix, mode)

    result.technique = technique.upper()
    logger.info("%s ordered %d tests (prep %.3fs, algo %.3fs)",
                result.technique, len(result), result.prep_seconds, result.algo_seconds)
    return result
