"""
Evaluation Module
APFD scoring, technique timing (AMET) and statistical comparison of techniques
"""

import itertools
import json
import logging
import os
from dataclasses import dataclass, field
from math import comb
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats

from config import DEFAULT_CONFIDENCE, DEFAULT_REPLICATES, SIGNIFICANCE_LEVEL, normalize_technique
from corpus import (
    FaultMatrix,
    ManifestFormatError,
    MissingSourceError,
    TestSuite,
    load_fault_matrix,
    load_suite,
)
from prioritizer import PrioritizedOrder, TechniqueOptions, prioritize

logger = logging.getLogger(__name__)

# Below this many observations in the smaller sample the Mann-Whitney p-value is exact
EXACT_MWU_BELOW = 8
# Largest number of rank assignments enumerated for tied small samples
EXACT_ENUMERATION_LIMIT = 200_000
# Bootstrap replicates are drawn in chunks of this size from one generator,
# so a run with more replicates extends a run with fewer
BOOTSTRAP_CHUNK = 1000

# Conventional VDA cutoffs, mirrored below 0.5
VDA_MAGNITUDES = ((0.71, 'large'), (0.64, 'medium'), (0.56, 'small'))

GROUP_POOLED = 'pooled'
GROUP_SUITE = 'suite'

ROUND_COLUMNS = ['suite', 'version', 'technique', 'seed', 'apfd', 'prep_seconds', 'algo_seconds']


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class ApfdResult:
    label: str
    apfd: float
    n: int
    m: int
    tf: Dict[str, int]

    def to_dict(self) -> Dict:
        return {'order': self.label, 'apfd': self.apfd, 'n': self.n, 'm': self.m, 'tf': dict(self.tf)}


def apfd(order: Union[PrioritizedOrder, Sequence[str]], faults: FaultMatrix, label: Optional[str] = None) -> ApfdResult:
    """100 * (1 - sum(tf) / (n*m) + 1 / (2n)), tf being each fault's 1-based first-detection position."""
    if isinstance(order, PrioritizedOrder):
        label = label or order.technique
        ids = list(order.order)
    else:
        ids = list(order)
    label = label or 'order'

    position = {}
    for i, test_id in enumerate(ids, start=1):
        if test_id in position:
            raise EvaluationError(f"Test '{test_id}' appears more than once in the order")
        position[test_id] = i
    missing = [test_id for test_id in faults.test_ids if test_id not in position]
    if missing:
        raise EvaluationError(f"Order is missing suite test '{missing[0]}'")
    known = set(faults.test_ids)
    extra = [test_id for test_id in ids if test_id not in known]
    if extra:
        raise EvaluationError(f"Order contains unknown test '{extra[0]}'")
    if faults.m == 0:
        raise EvaluationError("Fault matrix declares no faults")

    n, m = len(ids), faults.m
    tf = {fault: min(position[test_id] for test_id in faults.detects[fault]) for fault in faults.faults}
    value = 100.0 * (1.0 - sum(tf.values()) / (n * m) + 1.0 / (2 * n))
    return ApfdResult(label, value, n, m, tf)


def _sample(values, name: str) -> np.ndarray:
    sample = np.asarray(values, dtype=np.float64).ravel()
    if sample.size == 0:
        raise EvaluationError(f"Sample {name} is empty")
    return sample


def _enumerated_p(x: np.ndarray, y: np.ndarray) -> float:
    """Exact two-sided p over every assignment of the pooled midranks to x."""
    pooled = np.concatenate([x, y])
    ranks = stats.rankdata(pooled)
    n1 = x.size
    center = n1 * (pooled.size + 1) / 2.0
    observed = abs(ranks[:n1].sum() - center)
    assignments = np.array(list(itertools.combinations(range(pooled.size), n1)), dtype=np.intp)
    rank_sums = ranks[assignments].sum(axis=1)
    extreme = np.abs(rank_sums - center) >= observed - 1e-9
    return float(np.count_nonzero(extreme) / assignments.shape[0])


def mann_whitney_u(x, y) -> float:
    """Two-sided Mann-Whitney U p-value.

    Exact when the smaller sample has fewer than 8 observations, otherwise the
    normal approximation with tie and continuity correction.
    """
    x = _sample(x, 'x')
    y = _sample(y, 'y')
    pooled = np.concatenate([x, y])
    if np.all(pooled == pooled[0]):
        return 1.0

    if min(x.size, y.size) < EXACT_MWU_BELOW:
        if np.unique(pooled).size == pooled.size:
            p = stats.mannwhitneyu(x, y, alternative='two-sided', method='exact').pvalue
            return float(min(1.0, p))
        if comb(pooled.size, min(x.size, y.size)) <= EXACT_ENUMERATION_LIMIT:
            if x.size <= y.size:
                return _enumerated_p(x, y)
            return _enumerated_p(y, x)
        logger.warning("Tied samples of sizes %d and %d are too large to enumerate; using the normal approximation",
                       x.size, y.size)

    p = stats.mannwhitneyu(x, y, alternative='two-sided', method='asymptotic', use_continuity=True).pvalue
    return float(min(1.0, p))


def vda(x, y) -> float:
    """Vargha-Delaney A: probability that a draw from x beats a draw from y, ties counting half."""
    x = _sample(x, 'x')
    y = _sample(y, 'y')
    greater = np.count_nonzero(x[:, None] > y[None, :])
    ties = np.count_nonzero(x[:, None] == y[None, :])
    return (2 * greater + ties) / (2 * x.size * y.size)


def vda_magnitude(a: float) -> str:
    """negligible / small / medium / large by the conventional 0.56 / 0.64 / 0.71 cutoffs."""
    distance = max(a, 1.0 - a)
    for cutoff, label in VDA_MAGNITUDES:
        if distance >= cutoff:
            return label
    return 'negligible'


def bootstrap_ci_mean(x, replicates: int = DEFAULT_REPLICATES, level: float = DEFAULT_CONFIDENCE,
                      seed: int = 0) -> Tuple[float, float]:
    """Bias-corrected and accelerated bootstrap interval for the mean."""
    x = _sample(x, 'x')
    if x.size < 2:
        raise EvaluationError("Bootstrap needs at least two observations")
    if replicates < 1:
        raise EvaluationError(f"Replicates must be positive, got {replicates}")
    if not 0.0 < level < 1.0:
        raise EvaluationError(f"Confidence level must lie in (0, 1), got {level}")
    if np.all(x == x[0]):
        return float(x[0]), float(x[0])

    n = x.size
    rng = np.random.default_rng(seed)
    means = []
    for start in range(0, replicates, BOOTSTRAP_CHUNK):
        size = min(BOOTSTRAP_CHUNK, replicates - start)
        means.append(x[rng.integers(0, n, size=(size, n))].mean(axis=1))
    boot = np.concatenate(means)

    observed = x.mean()
    below = np.count_nonzero(boot < observed) / replicates
    below = min(max(below, 0.5 / replicates), 1.0 - 0.5 / replicates)
    z0 = stats.norm.ppf(below)

    jackknife = (x.sum() - x) / (n - 1)
    deviations = jackknife.mean() - jackknife
    spread = np.sum(deviations ** 2)
    acceleration = np.sum(deviations ** 3) / (6.0 * spread ** 1.5) if spread > 0 else 0.0

    alpha = (1.0 - level) / 2.0
    z = stats.norm.ppf([alpha, 1.0 - alpha])
    adjusted = stats.norm.cdf(z0 + (z0 + z) / (1.0 - acceleration * (z0 + z)))
    lower, upper = np.quantile(boot, adjusted)
    return float(lower), float(upper)


def _mean_ci(values: np.ndarray, replicates: int, level: float, seed: int) -> Tuple[float, float, float]:
    mean = float(values.mean())
    if values.size < 2:
        return mean, mean, mean
    lower, upper = bootstrap_ci_mean(values, replicates, level, seed)
    return mean, lower, upper


@dataclass(frozen=True)
class ComparisonReport:
    """Technique A against technique B over the same execution rounds."""
    technique_a: str
    technique_b: str
    group: str
    p_value: float
    vda: float
    significant: bool
    magnitude: str
    mean_a: float
    ci_a: Tuple[float, float]
    mean_b: float
    ci_b: Tuple[float, float]
    n_a: int
    n_b: int

    def to_dict(self) -> Dict:
        return {
            'technique_a': self.technique_a,
            'technique_b': self.technique_b,
            'group': self.group,
            'p_value': self.p_value,
            'vda': self.vda,
            'significant': self.significant,
            'magnitude': self.magnitude,
            'mean_a': self.mean_a,
            'ci_a': list(self.ci_a),
            'mean_b': self.mean_b,
            'ci_b': list(self.ci_b),
            'n_a': self.n_a,
            'n_b': self.n_b,
        }


def compare_samples(technique_a: str, x, technique_b: str, y, group: str = GROUP_POOLED,
                    replicates: int = DEFAULT_REPLICATES, level: float = DEFAULT_CONFIDENCE,
                    seed: int = 0) -> ComparisonReport:
    x = _sample(x, technique_a)
    y = _sample(y, technique_b)
    p = mann_whitney_u(x, y)
    a = vda(x, y)
    mean_a, low_a, high_a = _mean_ci(x, replicates, level, seed)
    mean_b, low_b, high_b = _mean_ci(y, replicates, level, seed + 1)
    return ComparisonReport(
        technique_a=technique_a,
        technique_b=technique_b,
        group=group,
        p_value=p,
        vda=a,
        significant=p < SIGNIFICANCE_LEVEL,
        magnitude=vda_magnitude(a),
        mean_a=mean_a,
        ci_a=(low_a, high_a),
        mean_b=mean_b,
        ci_b=(low_b, high_b),
        n_a=int(x.size),
        n_b=int(y.size),
    )


@dataclass(frozen=True)
class Subject:
    """One suite version with its fault matrix."""
    suite: TestSuite
    faults: FaultMatrix
    name: Optional[str] = None
    version: str = '1'

    @property
    def label(self) -> str:
        return self.name or self.suite.name or 'suite'


@dataclass
class ExperimentResult:
    rounds: pd.DataFrame
    comparisons: List[ComparisonReport]
    vda_vs_rnd: pd.DataFrame
    apfd_summary: pd.DataFrame
    amet_summary: pd.DataFrame
    group_by: str = GROUP_POOLED
    orders: Dict[Tuple[str, str, str, int], PrioritizedOrder] = field(default_factory=dict, repr=False)

    def apfd_values(self, technique: str, suite: Optional[str] = None) -> np.ndarray:
        rows = self.rounds[self.rounds['technique'] == technique.upper()]
        if suite is not None:
            rows = rows[rows['suite'] == suite]
        return rows['apfd'].to_numpy()

    def comparison(self, technique_a: str, technique_b: str, group: str = GROUP_POOLED) -> ComparisonReport:
        for report in self.comparisons:
            if (report.technique_a, report.technique_b, report.group) == (technique_a.upper(), technique_b.upper(), group):
                return report
        raise EvaluationError(f"No comparison {technique_a.upper()} vs {technique_b.upper()} in group '{group}'")


def round_seed(seed: int, subject_index: int) -> int:
    """Random-ordering seed of one (subject, seed) execution round."""
    return int(np.random.SeedSequence([seed, subject_index]).generate_state(1)[0])


def _technique_pairs(techniques: List[str]) -> List[Tuple[str, str]]:
    pairs = []
    for a, b in itertools.combinations(techniques, 2):
        pairs.append((b, a) if a == 'RND' else (a, b))
    return pairs


def run_experiment(subjects: Sequence[Subject], techniques: Sequence[str], seeds: Sequence[int],
                   options: Optional[TechniqueOptions] = None, group_by: str = GROUP_POOLED,
                   replicates: int = DEFAULT_REPLICATES, level: float = DEFAULT_CONFIDENCE,
                   bootstrap_seed: int = 0) -> ExperimentResult:
    """Prioritize every subject with every technique once per seed and compare the APFD samples.

    Every technique runs, and is timed, in every round. The suite's memoized
    representations are dropped before each run so the timing includes the
    technique's own preparation. Techniques other than RND repeat the same order,
    and APFD, in every round of a subject.
    """
    if not subjects:
        raise EvaluationError("An experiment needs at least one suite and fault matrix")
    if not seeds:
        raise EvaluationError("An experiment needs at least one seed")
    if group_by not in (GROUP_POOLED, GROUP_SUITE):
        raise EvaluationError(f"Unknown grouping '{group_by}'; expected '{GROUP_POOLED}' or '{GROUP_SUITE}'")
    options = options or TechniqueOptions()
    techniques = [normalize_technique(t).upper() for t in techniques]

    rows = []
    orders: Dict[Tuple[str, str, str, int], PrioritizedOrder] = {}
    if options.cache is not None:
        logger.warning("Distance matrices are cached; AMET after the first round measures cache loads")
    for subject_index, subject in enumerate(subjects):
        for seed in seeds:
            for technique in techniques:
                technique_seed = round_seed(seed, subject_index) if technique == 'RND' else seed
                subject.suite.clear_caches()
                order = prioritize(subject.suite, technique, technique_seed, options)
                score = apfd(order, subject.faults).apfd
                orders[(subject.label, subject.version, technique, seed)] = order
                rows.append({
                    'suite': subject.label,
                    'version': subject.version,
                    'technique': technique,
                    'seed': seed,
                    'apfd': score,
                    'prep_seconds': order.prep_seconds,
                    'algo_seconds': order.algo_seconds,
                })
        logger.info("Finished %d rounds on %s v%s", len(seeds), subject.label, subject.version)

    rounds = pd.DataFrame(rows, columns=ROUND_COLUMNS)
    rounds['elapsed_seconds'] = rounds['prep_seconds'] + rounds['algo_seconds']

    if group_by == GROUP_POOLED:
        groups = [(GROUP_POOLED, rounds)]
    else:
        groups = [(name, frame) for name, frame in rounds.groupby('suite', sort=False)]

    comparisons, vda_rows, apfd_rows, amet_rows = [], [], [], []
    for group, frame in groups:
        samples = {t: frame.loc[frame['technique'] == t, 'apfd'].to_numpy() for t in techniques}
        for position, technique in enumerate(techniques):
            seed = bootstrap_seed + 2 * position
            mean, lower, upper = _mean_ci(samples[technique], replicates, level, seed)
            apfd_rows.append({'group': group, 'technique': technique, 'rounds': samples[technique].size,
                              'mean_apfd': mean, 'ci_lower': lower, 'ci_upper': upper})
            elapsed = frame.loc[frame['technique'] == technique, 'elapsed_seconds'].to_numpy()
            mean, lower, upper = _mean_ci(elapsed, replicates, level, seed + 1)
            amet_rows.append({'group': group, 'technique': technique, 'rounds': elapsed.size,
                              'amet_seconds': mean, 'ci_lower': lower, 'ci_upper': upper})

        for a, b in _technique_pairs(techniques):
            report = compare_samples(a, samples[a], b, samples[b], group, replicates, level,
                                     bootstrap_seed + 2 * techniques.index(a))
            comparisons.append(report)
            if b == 'RND':
                vda_rows.append({'group': group, 'technique': a, 'vda': report.vda, 'magnitude': report.magnitude,
                                 'p_value': report.p_value, 'significant': report.significant})

    return ExperimentResult(
        rounds=rounds[ROUND_COLUMNS],
        comparisons=comparisons,
        vda_vs_rnd=pd.DataFrame(vda_rows, columns=['group', 'technique', 'vda', 'magnitude', 'p_value', 'significant']),
        apfd_summary=pd.DataFrame(apfd_rows, columns=['group', 'technique', 'rounds', 'mean_apfd', 'ci_lower', 'ci_upper']),
        amet_summary=pd.DataFrame(amet_rows, columns=['group', 'technique', 'rounds', 'amet_seconds', 'ci_lower', 'ci_upper']),
        group_by=group_by,
        orders=orders,
    )


def load_subjects(path: str) -> List[Subject]:
    """Read a subjects.json index of {"name", "version", "manifest", "faults"} entries."""
    if not os.path.isfile(path):
        raise MissingSourceError(f"Subjects index not found: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            entries = json.load(f)
    except json.JSONDecodeError as e:
        raise ManifestFormatError(f"Subjects index '{path}' is not valid JSON: {e}")
    if not isinstance(entries, list) or not entries:
        raise ManifestFormatError(f"Subjects index '{path}' must be a non-empty JSON array")

    base_dir = os.path.dirname(os.path.abspath(path))
    subjects = []
    for position, entry in enumerate(entries):
        if not isinstance(entry, dict) or 'manifest' not in entry or 'faults' not in entry:
            raise ManifestFormatError(f"Subjects entry {position} needs 'manifest' and 'faults'")
        suite = load_suite(os.path.join(base_dir, entry['manifest']))
        faults = load_fault_matrix(os.path.join(base_dir, entry['faults']), suite)
        subjects.append(Subject(suite, faults, entry.get('name'), str(entry.get('version', position + 1))))
    return subjects
